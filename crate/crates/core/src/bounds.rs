//! Partial-identification bounds on treatment effects in identifiable
//! subgroups, the LATE point estimator, and Imbens–Manski intervals.
//!
//! With the outcome in `[0,1]`, the effect in a subgroup `g` is bounded by
//! `beta_l(g) <= beta(g) <= beta_u(g)` where
//! `beta_j(g) = E{ E(V_{j,1}|X,Z=1) - E(V_{j,0}|X,Z=0) | g=1 }` and the
//! transformed outcomes are
//!
//! ```text
//! V_u1 = Y A + 1 - A      V_u0 = Y (1 - A)
//! V_l1 = Y A              V_l0 = Y (1 - A) + A
//! ```
//!
//! Estimation replaces the inner regressions with cross-fitted influence
//! functions, pooling over folds.

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierKind, ComplierAssignment};
use crate::data::{IVDataset, ScaleInfo};
use crate::error::{Error, Result};
use crate::num::normal::norm_cdf;
use crate::num::roots::bisect;
use crate::num::{mean, sample_sd, Real};
use crate::nuisance::NuisanceFit;

/// The four bound-generating transformed outcomes, one value per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedOutcomes<F: Real = f64> {
    pub v_u1: Vec<F>,
    pub v_u0: Vec<F>,
    pub v_l1: Vec<F>,
    pub v_l0: Vec<F>,
}

/// Computes the transformed outcomes; requires `y` in `[0,1]` (rescale
/// first), which keeps all four vectors in `[0,1]`.
pub fn transform_outcomes<F: Real>(ds: &IVDataset<F>) -> Result<TransformedOutcomes<F>> {
    if !ds.outcome_in_unit_interval() {
        return Err(Error::validation(
            "outcome outside [0,1]; apply rescale_outcome before computing bounds",
        ));
    }
    let n = ds.n();
    let mut out = TransformedOutcomes {
        v_u1: Vec::with_capacity(n),
        v_u0: Vec::with_capacity(n),
        v_l1: Vec::with_capacity(n),
        v_l0: Vec::with_capacity(n),
    };
    for i in 0..n {
        let y = ds.y()[i];
        let a = F::of(ds.a()[i] as f64);
        out.v_u1.push(y * a + F::one() - a);
        out.v_u0.push(y * (F::one() - a));
        out.v_l1.push(y * a);
        out.v_l0.push(y * (F::one() - a) + a);
    }
    Ok(out)
}

/// Estimated bounds on a subgroup effect with standard errors and an
/// Imbens–Manski interval.
///
/// `beta_l > beta_u` can occur in finite samples; it is reported via
/// `crossed` rather than silently truncated (the interval is built on the
/// swapped pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport<F: Real = f64> {
    pub beta_l: F,
    pub beta_u: F,
    /// Asymptotic standard deviations of the bound estimators; divide by
    /// `sqrt(n)` for the standard error of the estimate.
    pub se_l: F,
    pub se_u: F,
    pub im_interval: (F, F),
    pub level: F,
    /// Mean of the subgroup indicator.
    pub subgroup_size: F,
    pub crossed: bool,
}

impl<F: Real> BoundsReport<F> {
    /// Bound length `beta_u - beta_l`.
    pub fn length(&self) -> F {
        self.beta_u - self.beta_l
    }

    /// Maps the report back to the original outcome scale. Effects are
    /// outcome differences, so only the range of the affine transform
    /// enters.
    pub fn to_original_scale(&self, info: &ScaleInfo<F>) -> BoundsReport<F> {
        let r = info.range();
        BoundsReport {
            beta_l: self.beta_l * r,
            beta_u: self.beta_u * r,
            se_l: self.se_l * r,
            se_u: self.se_u * r,
            im_interval: (self.im_interval.0 * r, self.im_interval.1 * r),
            level: self.level,
            subgroup_size: self.subgroup_size,
            crossed: self.crossed,
        }
    }
}

/// Estimates `(beta_l(g), beta_u(g))` for a subgroup `g` using cross-fitted
/// influence functions:
/// `betahat_j = mean[{phi_1(V_j1) - phi_0(V_j0)} g] / mean(g)`.
///
/// Standard errors follow the asymptotic variance
/// `var[{phi_1(V_j1) - phi_0(V_j0)} h_q - beta_j phi_mu] / mu^2` when `g` is
/// a fold-specific quantile rule (whose size estimates `mu`); for a generic
/// fixed subgroup the variance is `var[{...  - beta_j} g] / mean(g)^2`.
pub fn subgroup_bounds<F: Real>(
    ds: &IVDataset<F>,
    nf: &NuisanceFit<F>,
    g: &ComplierAssignment<F>,
    level: F,
) -> Result<BoundsReport<F>> {
    let n = ds.n();
    if nf.n() != n || g.n() != n {
        return Err(Error::validation("dataset, nuisance fit, and subgroup sizes disagree"));
    }
    if !(level > F::zero() && level < F::one()) {
        return Err(Error::validation("confidence level must lie in (0,1)"));
    }
    let v = transform_outcomes(ds)?;
    let g_real = g.h_real();
    let size = mean(&g_real);
    if size <= F::zero() {
        return Err(Error::computation("empty subgroup"));
    }

    let mut d_l = Vec::with_capacity(n);
    let mut d_u = Vec::with_capacity(n);
    for i in 0..n {
        d_u.push(nf.phi_z(i, 1, v.v_u1[i], nf.nu_u1[i]) - nf.phi_z(i, 0, v.v_u0[i], nf.nu_u0[i]));
        d_l.push(nf.phi_z(i, 1, v.v_l1[i], nf.nu_l1[i]) - nf.phi_z(i, 0, v.v_l0[i], nf.nu_l0[i]));
    }

    let weighted_mean = |d: &[F]| -> F {
        let s: F = d.iter().zip(&g_real).map(|(&di, &gi)| di * gi).sum();
        s / F::of(n as f64) / size
    };
    let beta_l = weighted_mean(&d_l);
    let beta_u = weighted_mean(&d_u);

    let quantile_subgroup = matches!(
        g.kind,
        ClassifierKind::FoldQuantile { .. } | ClassifierKind::Quantile { .. }
    );
    let (se_l, se_u) = if quantile_subgroup {
        let phi_mu: Vec<F> = nf.phi_mu_all();
        let mu_hat = mean(&phi_mu);
        if mu_hat <= F::zero() {
            return Err(Error::computation("strength estimate non-positive; bounds SE undefined"));
        }
        let se = |d: &[F], beta: F| -> F {
            let vals: Vec<F> = (0..n).map(|i| d[i] * g_real[i] - beta * phi_mu[i]).collect();
            sample_sd(&vals) / mu_hat
        };
        (se(&d_l, beta_l), se(&d_u, beta_u))
    } else {
        let se = |d: &[F], beta: F| -> F {
            let vals: Vec<F> = (0..n).map(|i| (d[i] - beta) * g_real[i]).collect();
            sample_sd(&vals) / size
        };
        (se(&d_l, beta_l), se(&d_u, beta_u))
    };

    let crossed = beta_l > beta_u;
    let im_interval = imbens_manski_ci(beta_l, beta_u, se_l.max(F::epsilon()), se_u.max(F::epsilon()), n, level)?;

    Ok(BoundsReport {
        beta_l,
        beta_u,
        se_l,
        se_u,
        im_interval,
        level,
        subgroup_size: size,
        crossed,
    })
}

/// Plug-in bound length `mean(1 - gamma | g = 1)`: the (estimated)
/// proportion of non-compliers in the subgroup.
pub fn bound_length<F: Real>(gamma: &[F], g: &ComplierAssignment<F>) -> Result<F> {
    if gamma.len() != g.n() {
        return Err(Error::validation("score/subgroup length mismatch"));
    }
    let count = g.predicted_compliers();
    if count == 0 {
        return Err(Error::computation("empty subgroup"));
    }
    let s: F = gamma
        .iter()
        .zip(&g.h)
        .filter(|(_, &hi)| hi == 1)
        .map(|(&gam, _)| F::one() - gam)
        .sum();
    Ok(s / F::of(count as f64))
}

/// Local average treatment effect in a subgroup (all units when `g` is
/// `None`): the ratio of influence-function means
/// `mean[{phi_1(Y) - phi_0(Y)} g] / mean[{phi_1(A) - phi_0(A)} g]`,
/// with a delta-method standard error (already scaled by `1/sqrt(n)`).
pub fn estimate_late<F: Real>(
    ds: &IVDataset<F>,
    nf: &NuisanceFit<F>,
    g: Option<&ComplierAssignment<F>>,
) -> Result<(F, F)> {
    let n = ds.n();
    if nf.n() != n {
        return Err(Error::validation("dataset and nuisance fit sizes disagree"));
    }
    let g_real: Vec<F> = match g {
        Some(assignment) => {
            if assignment.n() != n {
                return Err(Error::validation("subgroup length mismatch"));
            }
            assignment.h_real()
        }
        None => vec![F::one(); n],
    };
    let mut num = Vec::with_capacity(n);
    let mut den = Vec::with_capacity(n);
    for i in 0..n {
        let y = ds.y()[i];
        num.push((nf.phi_z(i, 1, y, nf.m1[i]) - nf.phi_z(i, 0, y, nf.m0[i])) * g_real[i]);
        den.push(nf.phi_mu(i) * g_real[i]);
    }
    let num_bar = mean(&num);
    let den_bar = mean(&den);
    if den_bar.abs() <= F::of(1e-6) {
        return Err(Error::computation("instrument too weak in subgroup"));
    }
    let estimate = num_bar / den_bar;
    let infl: Vec<F> = (0..n).map(|i| (num[i] - estimate * den[i]) / den_bar).collect();
    let se = sample_sd(&infl) / F::of(n as f64).sqrt();
    Ok((estimate, se))
}

/// Imbens–Manski confidence interval for a partially identified parameter:
/// `[beta_l - c se_l / sqrt(n), beta_u + c se_u / sqrt(n)]` where `c`
/// solves `Phi(c + sqrt(n) (beta_u - beta_l) / max(se_l, se_u)) - Phi(-c) =
/// level`, found by bisection to `1e-10`.
///
/// `se_l`, `se_u` are asymptotic standard deviations (the same scaling as
/// in [`BoundsReport`]). Crossed inputs are swapped.
pub fn imbens_manski_ci<F: Real>(
    beta_l: F,
    beta_u: F,
    se_l: F,
    se_u: F,
    n: usize,
    level: F,
) -> Result<(F, F)> {
    if !(se_l > F::zero() && se_u > F::zero()) {
        return Err(Error::validation("standard errors must be positive"));
    }
    if !(level > F::zero() && level < F::one()) {
        return Err(Error::validation("confidence level must lie in (0,1)"));
    }
    if n == 0 {
        return Err(Error::validation("sample size must be positive"));
    }
    let (lo, hi) = if beta_l <= beta_u { (beta_l, beta_u) } else { (beta_u, beta_l) };
    let sqrt_n = F::of(n as f64).sqrt();
    let width_term = sqrt_n * (hi - lo) / se_l.max(se_u);
    let objective = |c: F| norm_cdf(c + width_term) - norm_cdf(-c) - level;
    let c = if objective(F::zero()) >= F::zero() {
        F::zero()
    } else {
        bisect(&mut |c| objective(c), F::zero(), F::of(10.0), F::of(1e-10), 200)?
    };
    Ok((lo - c * se_l / sqrt_n, hi + c * se_u / sqrt_n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FoldAssignment;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transform_formulas() {
        let ds = IVDataset::new(
            Array2::zeros((2, 1)),
            vec![1, 0],
            vec![1, 0],
            vec![0.5, 0.5],
            None,
        )
        .unwrap();
        let v = transform_outcomes(&ds).unwrap();
        // a=1, y=0.5
        assert_eq!((v.v_u1[0], v.v_u0[0], v.v_l1[0], v.v_l0[0]), (0.5, 0.0, 0.5, 1.0));
        // a=0, y=0.5
        assert_eq!((v.v_u1[1], v.v_u0[1], v.v_l1[1], v.v_l0[1]), (1.0, 0.5, 0.0, 0.5));
    }

    #[test]
    fn transform_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let a: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<bool>())).collect();
        let ds = IVDataset::new(Array2::zeros((n, 1)), vec![0; n], a, y, None).unwrap();
        let v = transform_outcomes(&ds).unwrap();
        for vec in [&v.v_u1, &v.v_u0, &v.v_l1, &v.v_l0] {
            assert!(vec.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn transform_requires_unit_interval_outcome() {
        let ds = IVDataset::new(Array2::zeros((1, 1)), vec![0], vec![0], vec![2.0], None).unwrap();
        let err = transform_outcomes(&ds).unwrap_err();
        assert!(err.to_string().contains("rescale_outcome"), "{err}");
    }

    /// Perfect compliance (A = Z) with exact cell-mean nuisances: both
    /// bounds collapse onto the randomized difference in means.
    #[test]
    fn perfect_compliance_collapses_bounds() {
        let n = 8;
        let z = vec![1, 0, 1, 0, 1, 0, 1, 0];
        let a = z.clone();
        let y = vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 1.0, 0.0];
        let ds = IVDataset::new(Array2::zeros((n, 1)), z.clone(), a.clone(), y.clone(), None)
            .unwrap();
        let ybar1 = (0.9 + 0.8 + 0.7 + 1.0) / 4.0;
        let ybar0 = (0.1 + 0.2 + 0.3 + 0.0) / 4.0;
        // cell means of the transformed outcomes (single covariate cell)
        let v = transform_outcomes(&ds).unwrap();
        let zmean = |vals: &[f64], arm: u8| {
            let idx: Vec<usize> = (0..n).filter(|&i| z[i] == arm).collect();
            idx.iter().map(|&i| vals[i]).sum::<f64>() / idx.len() as f64
        };
        let folds = FoldAssignment { b: vec![1; n], k: 1, seed: 0 };
        let nf = NuisanceFit::from_parts(
            vec![0.5; n],
            vec![0.0; n],
            vec![1.0; n],
            [
                vec![zmean(&v.v_u1, 1); n],
                vec![zmean(&v.v_u0, 0); n],
                vec![zmean(&v.v_l1, 1); n],
                vec![zmean(&v.v_l0, 0); n],
            ],
            vec![ybar0; n],
            vec![ybar1; n],
            folds,
            0.01,
            z,
            a,
        )
        .unwrap();
        let g = ComplierAssignment::everyone(n);
        let report = subgroup_bounds(&ds, &nf, &g, 0.95).unwrap();
        assert!((report.beta_l - (ybar1 - ybar0)).abs() < 1e-12);
        assert!((report.beta_u - (ybar1 - ybar0)).abs() < 1e-12);
        // the two bound routes agree to rounding; a one-ulp cross can occur
        assert!(report.length().abs() < 1e-12);
        // LATE with unit denominator equals the same difference of means
        let (late, _se) = estimate_late(&ds, &nf, None).unwrap();
        assert!((late - (ybar1 - ybar0)).abs() < 1e-12);
    }

    #[test]
    fn bound_length_basics() {
        let gamma = vec![0.2, 0.4, 0.6, 0.8];
        let everyone = ComplierAssignment::everyone(4);
        let l: f64 = bound_length(&gamma, &everyone).unwrap();
        assert!((l - (1.0 - 0.5)).abs() < 1e-15, "length = 1 - mean(gamma)");
        let top = ComplierAssignment::custom(vec![0, 0, 0, 1], gamma.clone()).unwrap();
        let top_len: f64 = bound_length(&gamma, &top).unwrap();
        assert!((top_len - 0.2).abs() < 1e-15);
        let all_compliers = ComplierAssignment::custom(vec![0, 0, 1, 1], vec![0.0, 0.0, 1.0, 1.0])
            .unwrap();
        assert_eq!(bound_length(&[0.0, 0.0, 1.0, 1.0], &all_compliers).unwrap(), 0.0);
        let empty = ComplierAssignment::custom(vec![0; 4], gamma.clone()).unwrap();
        assert!(bound_length(&gamma, &empty).is_err());
    }

    #[test]
    fn imbens_manski_point_identification_is_wald() {
        let (lo, hi): (f64, f64) = imbens_manski_ci(0.3, 0.3, 1.0, 1.0, 100, 0.95).unwrap();
        let c = 1.959_963_984_540_054;
        assert!((lo - (0.3 - c / 10.0)).abs() < 1e-9, "{lo}");
        assert!((hi - (0.3 + c / 10.0)).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn imbens_manski_wide_bounds_use_one_sided_quantile() {
        let (lo, hi): (f64, f64) = imbens_manski_ci(-0.5, 0.5, 1.0, 1.0, 10_000, 0.95).unwrap();
        let c = 1.644_853_626_951_472;
        assert!((lo - (-0.5 - c / 100.0)).abs() < 1e-8, "{lo}");
        assert!((hi - (0.5 + c / 100.0)).abs() < 1e-8, "{hi}");
    }

    #[test]
    fn imbens_manski_voter_study_format() {
        // bounds [-0.171, 0.387] with SEs scaled to reproduce the published
        // interval shape [-0.189, 0.412]
        let n = 18_933usize;
        let sqrt_n = (n as f64).sqrt();
        let se_l = 0.011 * sqrt_n;
        let se_u = 0.0152 * sqrt_n;
        let (lo, hi) = imbens_manski_ci(-0.171, 0.387, se_l, se_u, n, 0.95).unwrap();
        assert!((lo - (-0.189)).abs() < 2e-3, "{lo}");
        assert!((hi - 0.412).abs() < 2e-3, "{hi}");
    }

    #[test]
    fn imbens_manski_swaps_crossed_inputs() {
        let (lo, hi) = imbens_manski_ci(0.4, 0.2, 1.0, 1.0, 100, 0.95).unwrap();
        assert!(lo < 0.2 && hi > 0.4);
    }

    #[test]
    fn im_interval_contains_bounds() {
        let (lo, hi) = imbens_manski_ci(0.1, 0.3, 0.8, 1.2, 500, 0.9).unwrap();
        assert!(lo < 0.1 && hi > 0.3);
    }
}
