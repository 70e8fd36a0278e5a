use rand::Rng;

use crate::numeric::softmax_in_place;

/// Normalized weights `exp(r_i) / sum_j exp(r_j)`, computed in the log domain.
pub fn fk_weights(rewards: &[f64]) -> Vec<f64> {
    normalize_log_weights(rewards)
}

pub fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    assert!(!log_w.is_empty(), "need at least one weight");
    let mut w = log_w.to_vec();
    softmax_in_place(&mut w);
    w
}

/// `1 / sum w_i^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Multinomial parent indices: `weights.len()` independent categorical draws.
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    let last = weights
        .iter()
        .rposition(|w| *w > 0.0)
        .expect("weights must not all be zero");
    (0..weights.len())
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            cdf.partition_point(|c| *c <= u).min(last)
        })
        .collect()
}

/// Resample any per-particle items by multinomial parent indices.
pub fn fk_resample<T: Clone, R: Rng + ?Sized>(items: &[T], weights: &[f64], rng: &mut R) -> Vec<T> {
    assert_eq!(items.len(), weights.len());
    multinomial_indices(weights, rng)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_values() {
        let w = fk_weights(&[0.0, 2f64.ln()]);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
        let w = fk_weights(&[1000.0, 0.0]);
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w[0] - 1.0).abs() < 1e-15 && w[1] < 1e-300);
        assert!(fk_weights(&[3.0; 4]).iter().all(|w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn degenerate_weights_copy_one_particle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = fk_resample(&[10, 20, 30], &[1.0, 0.0, 0.0], &mut rng);
        assert_eq!(out, vec![10, 10, 10]);
        let out = fk_resample(&[10, 20, 30], &[0.0, 0.0, 1.0], &mut rng);
        assert_eq!(out, vec![30, 30, 30]);
    }

    #[test]
    fn ess_bounds() {
        assert!((effective_sample_size(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((effective_sample_size(&[1.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn weights_normalized_and_shift_invariant(r in proptest::collection::vec(-50.0f64..50.0, 1..40), c in -100.0f64..100.0) {
            let w = fk_weights(&r);
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let w2 = fk_weights(&shifted);
            for (a, b) in w.iter().zip(&w2) {
                proptest::prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn resampling_preserves_size(n in 1usize..50, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = fk_weights(&(0..n).map(|i| (i as f64).sin()).collect::<Vec<_>>());
            let items: Vec<usize> = (0..n).collect();
            proptest::prop_assert_eq!(fk_resample(&items, &w, &mut rng).len(), n);
        }
    }
}
