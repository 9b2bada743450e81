//! Property tests for the exact algebraic identities and containment
//! guarantees spread across the estimators.

use proptest::prelude::*;

use sharpiv_core::bounds::{bound_length, imbens_manski_ci};
use sharpiv_core::classify::{classification_error, ComplierAssignment};
use sharpiv_core::data::{rescale_outcome, IVDataset};
use sharpiv_core::num::mean;
use sharpiv_core::sharpness::{sharpness_of, variance_explained, youden_index};

fn score_and_labels(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2..max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0u8..=1, n),
        )
    })
}

proptest! {
    /// The generalized sharpness identities hold exactly on any finite
    /// population: `E(h) = 2 mu (1-mu)(1 - psi(h)) + (1 - 2 mu)(E h - mu)`
    /// and `l(h) = (1-mu)(1 - mu psi(h) / E h)`.
    #[test]
    fn generalized_sharpness_identities((gamma, h_bits) in score_and_labels(40)) {
        let mu = mean(&gamma);
        prop_assume!(mu > 1e-9 && mu < 1.0 - 1e-9);
        let h = ComplierAssignment::custom(h_bits, gamma.clone()).unwrap();
        let psi_h = sharpness_of(&gamma, &h).unwrap();
        let e_h = classification_error(&gamma, &h).unwrap();
        let h_mean: f64 = h.predicted_fraction();
        let identity_error = 2.0 * mu * (1.0 - mu) * (1.0 - psi_h) + (1.0 - 2.0 * mu) * (h_mean - mu);
        prop_assert!((e_h - identity_error).abs() < 1e-12, "{e_h} vs {identity_error}");
        if h.predicted_compliers() > 0 {
            let l_h = bound_length(&gamma, &h).unwrap();
            let identity_len = (1.0 - mu) * (1.0 - mu * psi_h / h_mean);
            prop_assert!((l_h - identity_len).abs() < 1e-12, "{l_h} vs {identity_len}");
        }
    }

    /// Youden index equals empirical `cov(c,h)/var(c)` exactly.
    #[test]
    fn youden_identity((_, c_bits) in score_and_labels(24), (gamma, h_bits) in score_and_labels(24)) {
        let n = c_bits.len().min(h_bits.len()).min(gamma.len());
        let c = &c_bits[..n];
        prop_assume!(c.iter().any(|&v| v == 0) && c.iter().any(|&v| v == 1));
        let h = ComplierAssignment::custom(h_bits[..n].to_vec(), gamma[..n].to_vec()).unwrap();
        let y: f64 = youden_index(c, &h).unwrap();
        let v: f64 = variance_explained(c, &h).unwrap();
        prop_assert!((y - v).abs() < 1e-12, "{y} vs {v}");
    }

    /// The Imbens–Manski interval always contains the (ordered) bounds, and
    /// its critical value sits between the one- and two-sided normal
    /// quantiles.
    #[test]
    fn imbens_manski_containment(
        beta_l in -1.0f64..1.0,
        width in 0.0f64..2.0,
        se_l in 0.01f64..3.0,
        se_u in 0.01f64..3.0,
        n in 10usize..100_000,
    ) {
        let beta_u = beta_l + width;
        let (lo, hi) = imbens_manski_ci(beta_l, beta_u, se_l, se_u, n, 0.95).unwrap();
        prop_assert!(lo <= beta_l + 1e-12 && hi >= beta_u - 1e-12);
        let sqrt_n = (n as f64).sqrt();
        let c_lo = (beta_l - lo) * sqrt_n / se_l;
        let c_hi = (hi - beta_u) * sqrt_n / se_u;
        prop_assert!((c_lo - c_hi).abs() < 1e-6, "same c on both sides");
        prop_assert!(c_lo > 1.6448 - 1e-4 && c_lo < 1.9600 + 1e-4, "c = {c_lo}");
    }

    /// Rescaling the outcome and mapping back reproduces it to rounding.
    #[test]
    fn rescale_roundtrip(y in prop::collection::vec(-1e6f64..1e6, 2..50)) {
        let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - y.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-9);
        let n = y.len();
        let ds = IVDataset::new(
            ndarray::Array2::zeros((n, 1)),
            vec![0; n],
            vec![0; n],
            y.clone(),
            None,
        )
        .unwrap();
        let (scaled, info) = rescale_outcome(&ds);
        prop_assert!(!info.degenerate);
        prop_assert!(scaled.outcome_in_unit_interval());
        for (orig, s) in y.iter().zip(scaled.y()) {
            let back: f64 = info.to_original(*s);
            prop_assert!((back - orig).abs() <= 1e-9 * spread.max(1.0), "{back} vs {orig}");
        }
    }

    /// Quantile rule strength calibration on tie-free scores.
    #[test]
    fn quantile_calibration(n in 3usize..200, level in 0.02f64..0.98, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gamma: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        gamma.sort_by(|a, b| a.partial_cmp(b).unwrap());
        gamma.dedup();
        let n = gamma.len();
        prop_assume!(n >= 3);
        match sharpiv_core::classify::quantile_classifier(&gamma, level) {
            Ok(h) => {
                let frac: f64 = h.predicted_fraction();
                prop_assert!((frac - level).abs() <= 1.0 / n as f64 + 1e-9);
            }
            Err(_) => {
                // legitimate only when the level selects nothing
                prop_assert!(level <= 1.0 / n as f64 + 1e-9);
            }
        }
    }
}
