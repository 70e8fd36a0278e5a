use rand::Rng;

use super::{ActionChunk, GaussianMixturePolicy, MixtureComponent, PolicyError};
use crate::numeric::log_sum_exp;

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub components: usize,
    pub iters: usize,
    pub cov_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            components: 4,
            iters: 50,
            cov_floor: super::DEFAULT_COV_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub policy: GaussianMixturePolicy,
    /// Total data log-likelihood before each M-step, then once after the last.
    pub log_likelihood: Vec<f64>,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, later ones proportional to squared
/// distance from the nearest chosen center.
fn seed_centers<R: Rng + ?Sized>(data: &[Vec<f64>], m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.gen_range(0..data.len())].clone()];
    let mut nearest: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < m {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.gen_range(0..data.len())
        };
        centers.push(data[idx].clone());
        for (n, x) in nearest.iter_mut().zip(data) {
            *n = n.min(sq_dist(x, centers.last().unwrap()));
        }
    }
    centers
}

/// Returns per-point log-responsibilities (row per point) and the total log-likelihood.
fn e_step(data: &[Vec<f64>], p: &Params) -> (Vec<Vec<f64>>, f64) {
    let n = data[0].len() as f64;
    let c0 = -0.5 * n * (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    let resp = data
        .iter()
        .map(|x| {
            let mut logs: Vec<f64> = (0..p.weights.len())
                .map(|m| {
                    if p.weights[m] == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let q: f64 = x
                        .iter()
                        .zip(&p.means[m])
                        .zip(&p.vars[m])
                        .map(|((xi, mu), v)| (xi - mu) * (xi - mu) / v + v.ln())
                        .sum();
                    p.weights[m].ln() - 0.5 * q + c0
                })
                .collect();
            let lse = log_sum_exp(&logs);
            total += lse;
            for l in logs.iter_mut() {
                *l -= lse;
            }
            logs
        })
        .collect();
    (resp, total)
}

fn m_step(data: &[Vec<f64>], log_resp: &[Vec<f64>], p: &mut Params, floor: f64) {
    let n_pts = data.len() as f64;
    let dim = data[0].len();
    for m in 0..p.weights.len() {
        let r: Vec<f64> = log_resp.iter().map(|row| row[m].exp()).collect();
        let nm: f64 = r.iter().sum();
        if nm < 1e-12 {
            // Keep an empty component's parameters.
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (ri, x) in r.iter().zip(data) {
            for (mu, xi) in mean.iter_mut().zip(x) {
                *mu += ri * xi;
            }
        }
        for mu in mean.iter_mut() {
            *mu /= nm;
        }
        let mut var = vec![0.0; dim];
        for (ri, x) in r.iter().zip(data) {
            for ((v, xi), mu) in var.iter_mut().zip(x).zip(&mean) {
                *v += ri * (xi - mu) * (xi - mu);
            }
        }
        for v in var.iter_mut() {
            *v = (*v / nm).max(floor);
        }
        p.weights[m] = nm / n_pts;
        p.means[m] = mean;
        p.vars[m] = var;
    }
    let total: f64 = p.weights.iter().sum();
    for w in p.weights.iter_mut() {
        *w /= total;
    }
}

/// Diagonal-covariance EM on flattened chunks (in the units they are given).
///
/// Variances are maximum-likelihood (divide by the responsibility mass) and
/// floored at `opts.cov_floor`.
pub fn fit_gmm_em<R: Rng + ?Sized>(
    demos: &[ActionChunk],
    opts: &EmOptions,
    condition_key: &str,
    rng: &mut R,
) -> Result<EmFit, PolicyError> {
    let first = demos.first().ok_or(PolicyError::EmptyDemos)?;
    let (horizon, dim) = (first.horizon(), first.dim());
    if demos.iter().any(|d| d.horizon() != horizon || d.dim() != dim) {
        return Err(PolicyError::Config("demonstrations have mixed shapes".into()));
    }
    if opts.components == 0 || demos.len() < opts.components {
        return Err(PolicyError::Config(format!(
            "need at least {} demonstrations for {} components, got {}",
            opts.components.max(1),
            opts.components,
            demos.len()
        )));
    }
    if !(opts.cov_floor > 0.0) {
        return Err(PolicyError::Config("covariance floor must be positive".into()));
    }
    let data: Vec<Vec<f64>> = demos.iter().map(|d| d.as_slice().to_vec()).collect();
    let n = data.len() as f64;
    let width = horizon * dim;

    let mut global_mean = vec![0.0; width];
    for x in &data {
        for (g, xi) in global_mean.iter_mut().zip(x) {
            *g += xi / n;
        }
    }
    let mut global_var = vec![0.0; width];
    for x in &data {
        for ((g, xi), mu) in global_var.iter_mut().zip(x).zip(&global_mean) {
            *g += (xi - mu) * (xi - mu) / n;
        }
    }
    for g in global_var.iter_mut() {
        *g = g.max(opts.cov_floor);
    }

    let m = opts.components;
    let mut params = Params {
        weights: vec![1.0 / m as f64; m],
        means: seed_centers(&data, m, rng),
        vars: vec![global_var; m],
    };

    let mut trace = Vec::with_capacity(opts.iters + 1);
    for _ in 0..opts.iters {
        let (resp, ll) = e_step(&data, &params);
        trace.push(ll);
        m_step(&data, &resp, &mut params, opts.cov_floor);
    }
    trace.push(e_step(&data, &params).1);

    let components = params
        .weights
        .into_iter()
        .zip(params.means)
        .zip(params.vars)
        .map(|((weight, mean), var)| MixtureComponent { weight, mean, var })
        .collect();
    let policy =
        GaussianMixturePolicy::with_floor(horizon, dim, components, condition_key, opts.cov_floor)?;
    Ok(EmFit {
        policy,
        log_likelihood: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chunk(v: Vec<f64>) -> ActionChunk {
        ActionChunk::new(1, v.len(), v).unwrap()
    }

    #[test]
    fn empty_demos_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            fit_gmm_em(&[], &EmOptions::default(), "k", &mut rng),
            Err(PolicyError::EmptyDemos)
        ));
        let one = vec![chunk(vec![0.0])];
        let opts = EmOptions {
            components: 2,
            ..Default::default()
        };
        assert!(fit_gmm_em(&one, &opts, "k", &mut rng).is_err());
    }

    #[test]
    fn single_component_matches_sample_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let demos: Vec<_> = (0..200)
            .map(|_| chunk(vec![1.0 + 0.5 * standard_normal(&mut rng), -2.0 + 0.1 * standard_normal(&mut rng)]))
            .collect();
        let opts = EmOptions {
            components: 1,
            iters: 5,
            cov_floor: 1e-6,
        };
        let fit = fit_gmm_em(&demos, &opts, "k", &mut rng).unwrap();
        let c = &fit.policy.components()[0];
        for d in 0..2 {
            let xs: Vec<f64> = demos.iter().map(|x| x.as_slice()[d]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!((c.mean[d] - mean).abs() < 1e-10);
            assert!((c.var[d] - var).abs() < 1e-10);
        }
    }

    #[test]
    fn separated_clusters_recovered_with_monotone_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut demos = Vec::new();
        let mut sums = [0.0, 0.0];
        for i in 0..300 {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            let x = c + standard_normal(&mut rng);
            sums[i % 2] += x / 150.0;
            demos.push(chunk(vec![x, c + standard_normal(&mut rng)]));
        }
        let opts = EmOptions {
            components: 2,
            iters: 30,
            cov_floor: 1e-6,
        };
        let fit = fit_gmm_em(&demos, &opts, "k", &mut rng).unwrap();
        let mut means: Vec<f64> = fit.policy.components().iter().map(|c| c.mean[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - sums[0]).abs() < 0.1);
        assert!((means[1] - sums[1]).abs() < 0.1);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
    }
}
