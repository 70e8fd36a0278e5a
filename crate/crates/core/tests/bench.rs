use steerkit::bench::{
    plot_trajectories, run_episode, run_suite, run_suite_with, summarize, write_outputs, EpisodeContext, PolicyLibrary,
    RunConfig, Variant, CSV_HEADER,
};
use steerkit::world::{catalog, PerturbationSpec};

fn config(episodes: usize, max_chunks: usize) -> RunConfig {
    RunConfig {
        tasks: vec!["move_cube:red:green".into()],
        perturbations: vec![PerturbationSpec::None],
        variants: vec![Variant::Unguided, Variant::Full],
        episodes,
        max_chunks,
        ..RunConfig::default()
    }
}

fn library(cfg: &RunConfig) -> PolicyLibrary {
    PolicyLibrary::fit(&cfg.tasks, &cfg.policy).unwrap()
}

#[test]
fn zero_episodes_give_header_only() {
    let r = run_suite(&config(0, 5), 2).unwrap();
    assert_eq!(r.csv(), format!("{CSV_HEADER}\n"));
    assert!(r.summary.is_empty());
}

#[test]
fn zero_budget_fails_with_budget_reason() {
    let cfg = config(1, 0);
    let lib = library(&cfg);
    let ctx = EpisodeContext {
        config: &cfg,
        library: &lib,
        backend: cfg.backend.build().unwrap(),
    };
    let mut planner = cfg.planner().unwrap();
    let e = run_episode(&ctx, "move_cube:red:green", &PerturbationSpec::None, Variant::Full, planner.as_mut(), 3);
    assert!(!e.success);
    assert_eq!(e.reason.as_deref(), Some("budget"));
    assert_eq!(e.chunks, 0);
}

#[test]
fn unguided_episode_is_deterministic() {
    let cfg = config(1, 4);
    let lib = library(&cfg);
    let ctx = EpisodeContext {
        config: &cfg,
        library: &lib,
        backend: cfg.backend.build().unwrap(),
    };
    let shift = PerturbationSpec::PositionShift { min: 0.1, max: 0.2 };
    let run = || {
        let mut planner = cfg.planner().unwrap();
        run_episode(&ctx, "move_cube:red:green", &shift, Variant::Unguided, planner.as_mut(), 11)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.path, b.path);
    assert_eq!(a.trace, b.trace);
    assert_eq!((a.success, a.chunks, a.final_stage), (b.success, b.chunks, b.final_stage));
}

#[test]
fn summary_matches_episode_flags() {
    let mut cfg = config(12, 4);
    cfg.perturbations = vec![PerturbationSpec::PositionShift { min: 0.1, max: 0.25 }];
    let r = run_suite(&cfg, 3).unwrap();
    assert_eq!(r.rows.len(), 24);
    for (i, row) in r.rows.iter().enumerate() {
        assert_eq!(row.episode_id, i);
        assert_eq!(row.seed, (i % 12) as u64);
    }
    assert_eq!(summarize(&r.rows), r.summary);
    for c in &r.summary {
        let flags: Vec<f64> = r
            .rows
            .iter()
            .filter(|x| x.variant == c.variant)
            .map(|x| if x.success { 1.0 } else { 0.0 })
            .collect();
        let mean = flags.iter().sum::<f64>() / flags.len() as f64;
        assert_eq!(c.episodes, flags.len());
        assert!((c.success_rate - mean).abs() < 1e-12);
        assert!((c.std_error - (mean * (1.0 - mean) / flags.len() as f64).sqrt()).abs() < 1e-12);
    }
}

/// Pinned regression baseline for the calibrated bench settings.
#[test]
fn full_steering_solves_nominal_move_cube_within_five_chunks() {
    let mut cfg = config(50, 5);
    cfg.variants = vec![Variant::Full];
    let r = run_suite(&cfg, 4).unwrap();
    let solved = r.rows.iter().filter(|x| x.success && x.chunks <= 5).count();
    assert!(solved >= 45, "{solved}/50 solved");
}

#[test]
fn outputs_and_plots_are_written() {
    let cfg = config(2, 3);
    let lib = library(&cfg);
    let r = run_suite_with(&cfg, &lib, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_outputs(&r, dir.path(), true).unwrap();
    assert_eq!(written.len(), 2 + 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("results.csv")).unwrap(), r.csv());
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
    for p in &written[2..] {
        let svg = std::fs::read_to_string(p).unwrap();
        roxmltree::Document::parse(&svg).unwrap();
    }
}

#[test]
fn plot_is_well_formed_with_one_dot_per_step() {
    let cfg = config(3, 3);
    let r = run_suite(&cfg, 1).unwrap();
    let scene = catalog::scene_for(&catalog::task_by_id("move_cube:red:green").unwrap());
    let eps: Vec<_> = r.episodes.iter().collect();
    let svg = plot_trajectories(&eps, &scene);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("version"), Some("1.1"));
    let steps = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("step"))
        .count();
    let executed: usize = r.episodes.iter().map(|e| e.path.len()).sum();
    assert!(executed > 0);
    assert_eq!(steps, executed);
    assert_eq!(executed, r.episodes.iter().map(|e| e.chunks * cfg.policy.horizon).sum::<usize>());

    let empty = plot_trajectories(&[], &scene);
    let doc = roxmltree::Document::parse(&empty).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("step")).count(), 0);
    let objects = doc.descendants().find(|n| n.attribute("id") == Some("objects")).unwrap();
    assert_eq!(objects.children().filter(|n| n.is_element()).count(), scene.objects.len());
}
