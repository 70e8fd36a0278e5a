/// Gradient of `phi_i = mean_{j != i} 1 / (|a_i - a_j| + eps)` with respect to `a_i`.
///
/// This points toward other particles; callers inject its negation so
/// particles separate. Coincident pairs contribute nothing. Averaging over
/// neighbors keeps the force scale independent of the batch size.
pub fn rbf_repulsion_grad(particles: &[&[f64]], eps: f64) -> Vec<Vec<f64>> {
    let b = particles.len();
    let n = particles.first().map_or(0, |p| p.len());
    let mut out = vec![vec![0.0; n]; b];
    for i in 0..b {
        for j in (i + 1)..b {
            let d2: f64 = particles[i]
                .iter()
                .zip(particles[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let d = d2.sqrt();
            if d <= f64::MIN_POSITIVE {
                continue;
            }
            let c = -1.0 / (d * (d + eps) * (d + eps) * (b - 1) as f64);
            for t in 0..n {
                let diff = particles[i][t] - particles[j][t];
                out[i][t] += c * diff;
                out[j][t] -= c * diff;
            }
        }
    }
    out
}

/// `phi_i` itself, for finite-difference checks.
pub fn rbf_potential(particles: &[&[f64]], i: usize, eps: f64) -> f64 {
    particles
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, q)| {
            let d: f64 = particles[i]
                .iter()
                .zip(*q)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            1.0 / (d + eps)
        })
        .sum::<f64>()
        / (particles.len() - 1).max(1) as f64
}
