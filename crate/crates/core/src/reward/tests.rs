use proptest::prelude::*;

use super::*;

fn dims() -> Dims {
    Dims::new(4, 3, 2)
}

fn kps() -> KeypointSet {
    KeypointSet::new(vec![
        ("red".into(), vec![0.3, 0.4]),
        ("green".into(), vec![0.2, 0.85]),
    ])
    .unwrap()
}

fn chunk(values: Vec<f64>) -> ActionChunk {
    ActionChunk::new(4, 3, values).unwrap()
}

#[test]
fn stage_block_smoke() {
    let p = parse_reward(
        "stage reach { reward: -norm2(cum(a)[T-1][0:2] - p[0][0:2]); high: -0.05; low: -0.5; }",
        dims(),
    )
    .unwrap();
    assert_eq!(p.stage_count(), 1);
    assert_eq!(p.stage(1).unwrap().name, "reach");
    assert_eq!(p.stage(1).unwrap().high, -0.05);
}

#[test]
fn division_by_zero_is_guarded() {
    let p = parse_reward("reward: a[0][0] / 0;", dims()).unwrap();
    let c = chunk((0..12).map(|i| i as f64 + 1.0).collect());
    assert_eq!(p.eval(1, &c, &kps(), &[0.0, 0.0]).unwrap(), 0.0);
    let p = parse_reward("reward: a[0][0] / 2;", dims()).unwrap();
    let v = p.eval(1, &c, &kps(), &[0.0, 0.0]).unwrap();
    assert!((v - 0.5).abs() < 1e-9);
}

#[test]
fn unknown_identifier() {
    match parse_reward("reward: q[3];", dims()) {
        Err(RewardError::UnknownIdentifier { name, line, col }) => {
            assert_eq!(name, "q");
            assert_eq!((line, col), (1, 9));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn parse_errors() {
    let d = dims();
    assert!(matches!(
        parse_reward("reward: a[4][0];", d),
        Err(RewardError::IndexOutOfRange { index: 4, bound: 4, .. })
    ));
    assert!(matches!(
        parse_reward("reward: cum(a)[0][2];", d),
        Err(RewardError::IndexOutOfRange { .. })
    ));
    assert!(matches!(
        parse_reward("reward: p[2][0];", d),
        Err(RewardError::IndexOutOfRange { .. })
    ));
    assert!(matches!(
        parse_reward("reward: a[0][0] ^ a[0][1];", d),
        Err(RewardError::NonConstantExponent { .. })
    ));
    assert!(matches!(
        parse_reward("stage s { reward: 0; high: 1; }", d),
        Err(RewardError::MissingThreshold { which: "low", .. })
    ));
    assert!(matches!(
        parse_reward("stage s { reward: 0; high: -1; low: 0; }", d),
        Err(RewardError::InvalidThresholds { .. })
    ));
    assert!(matches!(
        parse_reward("reward: a[t][0];", d),
        Err(RewardError::UnknownIdentifier { .. })
    ));
    assert!(matches!(
        parse_reward("reward: a[0];", d),
        Err(RewardError::Type { .. })
    ));
    assert!(matches!(
        parse_reward("reward: a[0][0] +;", d),
        Err(RewardError::Syntax { line: 1, .. })
    ));
    assert!(matches!(
        parse_reward("dims T=8 D=3 n=2\nreward: 0;", d),
        Err(RewardError::Syntax { .. })
    ));
    assert!(parse_reward("stage s { reward: 0; } stage s { reward: 0; }", d).is_err());
    assert!(parse_reward("", d).is_err());
}

#[test]
fn default_thresholds() {
    let p = parse_reward("stage s { reward: 0; }", dims()).unwrap();
    assert_eq!(p.stage(1).unwrap().high, DEFAULT_HIGH);
    assert_eq!(p.stage(1).unwrap().low, DEFAULT_LOW);
}

#[test]
fn header_file() {
    let p = parse_reward_file("dims T=4 D=3 n=2\n# comment\nreward: sum_t(a[t][2]);").unwrap();
    assert_eq!(p.dims(), dims());
    assert!(parse_reward_file("reward: 0;").is_err());
}

#[test]
fn distance_examples() {
    let p = parse_reward("reward: -norm2(cum(a)[T-1] - p[0]);", dims()).unwrap();
    let k = KeypointSet::new(vec![("o".into(), vec![0.0, 0.0]), ("z".into(), vec![1.0, 1.0])]).unwrap();
    let mut c = chunk(vec![0.0; 12]);
    c.set(0, 0, 0.5);
    c.set(3, 0, 0.5);
    let v = p.eval(1, &c, &k, &[0.0, 0.0]).unwrap();
    assert!((v + 1.0).abs() < 1e-15);
    let start = [-1.0, 0.0];
    assert_eq!(p.eval(1, &c, &k, &start).unwrap(), 0.0);
}

#[test]
fn sum_of_zero_is_zero() {
    let p = parse_reward("reward: sum_t(0);", dims()).unwrap();
    let c = chunk((0..12).map(|i| (i as f64).sin()).collect());
    assert_eq!(p.eval(1, &c, &kps(), &[0.1, 0.2]).unwrap(), 0.0);
    assert!(p.grad(1, &c, &kps(), &[0.1, 0.2]).unwrap().iter().all(|g| *g == 0.0));
    assert_eq!(check_grad(&p, 1, &c, &kps(), &[0.1, 0.2], 1e-5).unwrap(), 0.0);
}

#[test]
fn identity_gradient() {
    let p = parse_reward("reward: a[0][0];", dims()).unwrap();
    let c = chunk(vec![0.3; 12]);
    let g = p.grad(1, &c, &kps(), &[0.0, 0.0]).unwrap();
    assert_eq!(g[0], 1.0);
    assert!(g[1..].iter().all(|x| *x == 0.0));
}

#[test]
fn non_finite_names_node() {
    let p = parse_reward("stage s { reward: log(a[0][0]); }", dims()).unwrap();
    let c = chunk(vec![-1.0; 12]);
    match p.eval(1, &c, &kps(), &[0.0, 0.0]) {
        Err(RewardError::NonFinite { node }) => {
            assert!(node.contains("log(a[0][0])"), "{node}");
            assert!(node.contains("stage s"), "{node}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn stage_index_checked() {
    let p = parse_reward("reward: 0;", dims()).unwrap();
    let c = chunk(vec![0.0; 12]);
    assert!(matches!(
        p.eval(0, &c, &kps(), &[0.0, 0.0]),
        Err(RewardError::StageOutOfRange { .. })
    ));
    assert!(p.eval(2, &c, &kps(), &[0.0, 0.0]).is_err());
}

#[test]
fn smooth_program_passes_gradient_check() {
    let text = "stage s {
        reward: -norm2(cum(a)[T-1] - p[1]) + 0.3 * softmin_t(0.2, tanh(a[t][2]))
                - mean_t(sigmoid(a[t][0] * a[t][1])) + dot(a[1][0:2], grip_start) / (1 + a[2][2] ^ 2)
                + sqrt_safe(exp(a[0][1]) + 1) - softplus(-a[3][0]);
    }";
    let p = parse_reward(text, dims()).unwrap();
    let c = chunk((0..12).map(|i| 0.3 * ((i * 7) as f64).sin()).collect());
    let err = check_grad(&p, 1, &c, &kps(), &[0.1, -0.2], 1e-5).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn sharp_softmin_near_tie_is_reported() {
    let p = parse_reward("reward: softmin_t(0.01, a[t][0]);", dims()).unwrap();
    let c = chunk(vec![
        0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0,
    ]);
    let err = check_grad(&p, 1, &c, &kps(), &[0.0, 0.0], 1e-2).unwrap();
    assert!(err > 1e-4, "{err}");
}

#[test]
fn print_parse_round_trip_fixed() {
    let text = "stage reach { reward: -norm2(cum(a)[T - 1][0:2] - p[0]) * -2 + -(3) ^ 2; high: -0.05; low: -0.5; description: \"go \\\"there\\\"\"; }
                stage b { reward: softmax_t(0.5, a[(t * 1)][D - 1]) - (2) ^ -1.5 + dot([1, a[0][0]], grip_start); }";
    let p = parse_reward(text, dims()).unwrap();
    let q = parse_reward_file(&p.print()).unwrap();
    assert_eq!(p, q);
}

fn arb_index(with_t: bool) -> impl Strategy<Value = Index> {
    // Values stay within 0..4 for T=4 when t ranges over 0..4.
    let mut opts = vec![
        (0i64..4).prop_map(Index::Lit).boxed(),
        Just(Index::Sub(Box::new(Index::Horizon), Box::new(Index::Lit(1)))).boxed(),
        Just(Index::Neg(Box::new(Index::Lit(-2)))).boxed(),
    ];
    if with_t {
        opts.push(Just(Index::Var).boxed());
        opts.push(Just(Index::Sub(Box::new(Index::Horizon), Box::new(Index::Add(Box::new(Index::Var), Box::new(Index::Lit(1)))))).boxed());
    }
    proptest::strategy::Union::new(opts)
}

fn arb_leaf(with_t: bool) -> BoxedStrategy<Expr> {
    prop_oneof![
        (-5.0f64..5.0).prop_map(Expr::Num),
        (arb_index(with_t), 0i64..3).prop_map(|(t, d)| Expr::Action(t, Select::At(Index::Lit(d)))),
        (arb_index(with_t), 0i64..2).prop_map(|(t, d)| Expr::Cum(t, Select::At(Index::Lit(d)))),
        (0i64..2, 0i64..2).prop_map(|(i, d)| Expr::Keypoint(Index::Lit(i), Select::At(Index::Lit(d)))),
        (0i64..2).prop_map(|d| Expr::GripStart(Select::At(Index::Lit(d)))),
    ]
    .boxed()
}

fn arb_scalar(with_t: bool, depth: u32) -> BoxedStrategy<Expr> {
    let leaf = arb_leaf(with_t);
    if depth == 0 {
        return leaf;
    }
    let sub = arb_scalar(with_t, depth - 1);
    let sub_t = arb_scalar(true, depth - 1);
    let vec2 = (arb_scalar(with_t, depth - 1), arb_scalar(with_t, depth - 1))
        .prop_map(|(a, b)| Expr::Vector(vec![a, b]));
    prop_oneof![
        2 => leaf,
        1 => (sub.clone(), prop_oneof![Just(UnaryOp::Neg), Just(UnaryOp::Tanh), Just(UnaryOp::Sigmoid), Just(UnaryOp::Softplus), Just(UnaryOp::Exp)])
            .prop_map(|(x, op)| Expr::Unary(op, Box::new(x))),
        1 => (sub.clone(), sub.clone(), prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)])
            .prop_map(|(a, b, op)| Expr::Binary(op, Box::new(a), Box::new(b))),
        1 => (sub.clone(), prop_oneof![Just(2.0), Just(3.0), Just(-1.0)]).prop_map(|(x, p)| Expr::Pow(Box::new(x), p)),
        1 => (sub_t, prop_oneof![Just(Reduce::Sum), Just(Reduce::Mean), Just(Reduce::SoftMin(0.5)), Just(Reduce::SoftMax(0.25))])
            .prop_map(|(b, r)| Expr::Reduce(r, Box::new(b))),
        1 => vec2.clone().prop_map(|v| Expr::Norm2(Box::new(v))),
        1 => (vec2.clone(), vec2).prop_map(|(a, b)| Expr::Dot(Box::new(a), Box::new(b))),
    ]
    .boxed()
}

proptest! {
    #[test]
    fn print_parse_round_trip(exprs in proptest::collection::vec(arb_scalar(false, 3), 1..3),
                              desc in "[a-z \"\\\\]{0,12}") {
        let stages: Vec<Stage> = exprs
            .into_iter()
            .enumerate()
            .map(|(i, reward)| Stage {
                name: format!("s{i}"),
                reward,
                high: -0.05,
                low: -0.5 - i as f64,
                description: desc.clone(),
            })
            .collect();
        let p = RewardProgram::from_stages(dims(), stages).unwrap();
        let text = p.print();
        let q = parse_reward_file(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(p, q);
    }

    #[test]
    fn evaluation_is_deterministic(e in arb_scalar(false, 3), vals in proptest::collection::vec(-1.0f64..1.0, 12)) {
        let p = RewardProgram::from_stages(dims(), vec![Stage {
            name: "s".into(), reward: e, high: 0.0, low: -1.0, description: String::new(),
        }]).unwrap();
        let c = chunk(vals);
        let a = p.grad(1, &c, &kps(), &[0.1, 0.2]);
        let b = p.grad(1, &c, &kps(), &[0.1, 0.2]);
        prop_assert_eq!(a, b);
    }
}
