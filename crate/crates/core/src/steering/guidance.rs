use crate::policy::NoiseSchedule;

/// `eps - lambda * sqrt(1 - abar_k) * g`.
pub fn apply_diffusion_guidance(
    eps: &[f64],
    g: &[f64],
    lambda: f64,
    k: usize,
    sched: &NoiseSchedule,
) -> Vec<f64> {
    assert_eq!(eps.len(), g.len(), "shape mismatch");
    if lambda == 0.0 {
        return eps.to_vec();
    }
    let c = lambda * (1.0 - sched.alpha_bar(k)).sqrt();
    eps.iter().zip(g).map(|(e, gi)| e - c * gi).collect()
}

/// `v + lambda * g`.
pub fn apply_flow_guidance(v: &[f64], g: &[f64], lambda: f64) -> Vec<f64> {
    assert_eq!(v.len(), g.len(), "shape mismatch");
    if lambda == 0.0 {
        return v.to_vec();
    }
    v.iter().zip(g).map(|(vi, gi)| vi + lambda * gi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diffusion_rule() {
        // abar_1 = 0.36 gives sqrt(1 - abar) = 0.8.
        let s = NoiseSchedule::from_betas(vec![0.64], Default::default()).unwrap();
        let out = apply_diffusion_guidance(&[0.5], &[1.0], 2.0, 1, &s);
        assert!((out[0] + 1.1).abs() < 1e-12);
        let eps = [0.123456789, -3.5];
        assert_eq!(apply_diffusion_guidance(&eps, &[9.0, 9.0], 0.0, 1, &s), eps.to_vec());
        let one = apply_diffusion_guidance(&eps, &[0.3, -0.7], 0.5, 1, &s);
        let two = apply_diffusion_guidance(&eps, &[0.3, -0.7], 1.0, 1, &s);
        for i in 0..2 {
            assert!(((two[i] - eps[i]) - 2.0 * (one[i] - eps[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn flow_rule() {
        assert_eq!(apply_flow_guidance(&[1.0], &[0.5], 2.0), vec![2.0]);
        assert_eq!(apply_flow_guidance(&[1.0, 2.0], &[5.0, 5.0], 0.0), vec![1.0, 2.0]);
        let v = [0.2, -0.1];
        let g = [1.0, 3.0];
        let out = apply_flow_guidance(&v, &g, 0.7);
        let d: Vec<f64> = out.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert!((d[0] * g[1] - d[1] * g[0]).abs() < 1e-12);
    }
}
