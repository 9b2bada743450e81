//! Margin-curve computation and fitting: how much score mass sits within
//! `t` of the quantile threshold, `P(|gamma - q| <= t)`, and the best
//! power-law envelope `C t^alpha` dominating it on a grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::normal::{norm_cdf, norm_quantile};
use crate::num::Real;

/// Distribution of the compliance score the margin curve is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreModel<F: Real = f64> {
    /// `gamma(x) = Phi(b0 + b1 x)` with `X ~ N(0,1)`; the curve has the
    /// closed form `Phi(x(q+t)) - Phi(x(q-t))` in x-space.
    ProbitNormal { b0: F, b1: F },
    /// `gamma ~ Unif(0,1)`: `P(|gamma - 1/2| <= t) = min(2t, 1)` exactly.
    Uniform,
}

/// Fitted power-law envelope parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginFit<F: Real = f64> {
    pub c: F,
    pub alpha: F,
    /// Largest log-gap `ln(C t^alpha / P(t))` over the grid (envelope
    /// looseness; zero means the power law matches the curve exactly).
    pub sup_log_gap: F,
}

/// The margin curve on a `t` grid, with the fitted envelope when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginCurve<F: Real = f64> {
    pub t: Vec<F>,
    pub p: Vec<F>,
    /// Quantile threshold of the score distribution.
    pub q: F,
    pub fit: Option<MarginFit<F>>,
    /// Constant scores put all mass at the threshold: the curve is
    /// identically one and no positive exponent is admissible.
    pub degenerate: bool,
}

/// Default grid: 50 points from `tmax/10` to `tmax`.
pub fn default_t_grid<F: Real>(tmax: F) -> Vec<F> {
    let lo = tmax / F::of(10.0);
    let count = 50;
    (0..count)
        .map(|i| lo + (tmax - lo) * F::of(i as f64) / F::of((count - 1) as f64))
        .collect()
}

/// Search grids for the envelope fit: exponents in `{0.25, ..., 3.0}` and
/// constants in `{0.5, ..., 4.0}`. The fit picks the largest admissible
/// exponent (the strongest margin statement the curve supports on the
/// grid), then the smallest admissible constant at that exponent.
const ALPHA_STEPS: usize = 12;
const ALPHA_STEP: f64 = 0.25;
const C_STEPS: usize = 8;
const C_STEP: f64 = 0.5;

fn fit_envelope<F: Real>(t: &[F], p: &[F]) -> Option<MarginFit<F>> {
    let mut best: Option<MarginFit<F>> = None;
    for ai in (1..=ALPHA_STEPS).rev() {
        let alpha = F::of(ai as f64 * ALPHA_STEP);
        for ci in 1..=C_STEPS {
            let c = F::of(ci as f64 * C_STEP);
            let slack = F::one() + F::of(1e-12);
            let admissible = t
                .iter()
                .zip(p)
                .all(|(&ti, &pi)| pi <= c * ti.powf(alpha) * slack);
            if admissible {
                let mut gap = F::zero();
                for (&ti, &pi) in t.iter().zip(p) {
                    let env = c * ti.powf(alpha);
                    let ratio = env / pi.max(F::of(1e-300));
                    gap = gap.max(ratio.ln());
                }
                best = Some(MarginFit { c, alpha, sup_log_gap: gap });
                break;
            }
        }
        if best.is_some() {
            break;
        }
    }
    best
}

/// `P(gamma <= u)` for the probit score model.
fn probit_score_cdf<F: Real>(b0: F, b1: F, u: F) -> F {
    if u <= F::zero() {
        return F::zero();
    }
    if u >= F::one() {
        return F::one();
    }
    // gamma <= u  <=>  x <= (Phi^{-1}(u) - b0) / b1   (b1 > 0)
    norm_cdf((norm_quantile(u) - b0) / b1)
}

/// Computes the margin curve `P(|gamma - q| <= t)` on the grid and fits the
/// power-law envelope. Constant scores flag the curve degenerate.
pub fn margin_curve<F: Real>(model: &ScoreModel<F>, t_grid: &[F]) -> Result<MarginCurve<F>> {
    if t_grid.is_empty() {
        return Err(Error::validation("empty t grid"));
    }
    if t_grid.iter().any(|&t| t <= F::zero() || t >= F::one()) {
        return Err(Error::validation("t grid must lie strictly inside (0,1)"));
    }
    let mut t = t_grid.to_vec();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (q, p, degenerate) = match *model {
        ScoreModel::Uniform => {
            let q = F::half();
            let p: Vec<F> = t.iter().map(|&ti| (F::two() * ti).min(F::one())).collect();
            (q, p, false)
        }
        ScoreModel::ProbitNormal { b0, b1 } => {
            let b1 = b1.abs();
            if b1 == F::zero() {
                let q = norm_cdf(b0);
                let p = vec![F::one(); t.len()];
                (q, p, true)
            } else {
                let scale = (F::one() + b1 * b1).sqrt();
                let q = norm_cdf(b0 - b0 * b1 / scale);
                let p: Vec<F> = t
                    .iter()
                    .map(|&ti| {
                        probit_score_cdf(b0, b1, q + ti) - probit_score_cdf(b0, b1, q - ti)
                    })
                    .collect();
                (q, p, false)
            }
        }
    };
    let fit = if degenerate { None } else { fit_envelope(&t, &p) };
    let degenerate = degenerate || fit.is_none();
    Ok(MarginCurve { t, p, q, fit, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::solve_dgp_params;

    #[test]
    fn uniform_scores_fit_exactly() {
        let grid: Vec<f64> = default_t_grid(0.5);
        let curve = margin_curve(&ScoreModel::Uniform, &grid).unwrap();
        for (t, p) in curve.t.iter().zip(&curve.p) {
            assert!((p - 2.0 * t).abs() < 1e-15);
        }
        let fit = curve.fit.unwrap();
        assert_eq!(fit.c, 2.0);
        assert_eq!(fit.alpha, 1.0);
        assert!(fit.sup_log_gap < 1e-9, "{}", fit.sup_log_gap);
        assert!(!curve.degenerate);
    }

    #[test]
    fn sharp_instrument_allows_steep_exponent() {
        let (b0, b1) = solve_dgp_params(0.3f64, 0.75).unwrap();
        let grid: Vec<f64> = default_t_grid(0.5);
        let curve = margin_curve(&ScoreModel::ProbitNormal { b0, b1 }, &grid).unwrap();
        let fit = curve.fit.unwrap();
        assert!(fit.alpha >= 1.5, "alpha = {}", fit.alpha);
    }

    #[test]
    fn blunter_instruments_get_smaller_exponents() {
        let grid: Vec<f64> = default_t_grid(0.5);
        let mut last = f64::INFINITY;
        for &psi in &[0.75, 0.5, 0.25] {
            let (b0, b1) = solve_dgp_params(0.3f64, psi).unwrap();
            let curve = margin_curve(&ScoreModel::ProbitNormal { b0, b1 }, &grid).unwrap();
            let alpha = curve.fit.unwrap().alpha;
            assert!(alpha <= last, "alpha not monotone: {alpha} after {last}");
            last = alpha;
        }
        assert!(last < 1.5);
    }

    #[test]
    fn constant_scores_flag_degenerate() {
        let grid: Vec<f64> = default_t_grid(0.5);
        let curve =
            margin_curve(&ScoreModel::ProbitNormal { b0: -0.5244, b1: 0.0 }, &grid).unwrap();
        assert!(curve.degenerate);
        assert!(curve.fit.is_none());
        assert!(curve.p.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn curve_is_monotone_in_t() {
        let (b0, b1) = solve_dgp_params(0.3f64, 0.5).unwrap();
        let grid: Vec<f64> = default_t_grid(0.4);
        let curve = margin_curve(&ScoreModel::ProbitNormal { b0, b1 }, &grid).unwrap();
        for w in curve.p.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
    }
}
