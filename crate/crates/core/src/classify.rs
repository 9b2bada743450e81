//! Complier classification rules, their identified errors, and the sandwich
//! bounds on the optimal (Bayes) classification error.
//!
//! All rules act on a vector of compliance scores. Three plug-in rules from
//! the estimation theory: the Bayes rule thresholds at 1/2, the quantile
//! rule selects the top `100t%` of scores, and the stochastic rule draws
//! each prediction as `Bernoulli(score)`. The modified quantile rule agrees
//! with the Bayes rule in a window around the quantile threshold, of width
//! set by caller-supplied bounds on score and quantile estimation error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FoldAssignment;
use crate::error::{Error, Result};
use crate::num::{mean, Real};

/// Which rule produced an assignment, with its fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassifierKind<F: Real = f64> {
    /// `h = 1(score > 1/2)`; ties at exactly 1/2 are classified 0.
    Bayes,
    /// `h = 1(score > qhat)` with `qhat` the empirical `(1-level)` quantile.
    Quantile { level: F, qhat: F },
    /// `h = 1(score > U)` with `U ~ Unif(0,1)` drawn independently per unit.
    Stochastic { seed: u64 },
    /// Quantile rule that defers to the Bayes rule within
    /// `kappa1 + kappa2` of the threshold.
    ModifiedQuantile { qhat: F, kappa1: F, kappa2: F },
    /// Per-fold quantile thresholds at a common level (used with
    /// cross-fitted scores, where each fold has its own threshold).
    FoldQuantile { level: F, q_by_fold: Vec<F> },
    /// An externally supplied subgroup indicator (not a score rule).
    Custom,
}

/// A 0/1 complier prediction for every unit, along with the scores it was
/// computed from and any degeneracy warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplierAssignment<F: Real = f64> {
    pub h: Vec<u8>,
    pub kind: ClassifierKind<F>,
    /// The compliance scores the rule was applied to.
    pub scores: Vec<F>,
    pub warning: Option<String>,
}

impl<F: Real> ComplierAssignment<F> {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn predicted_compliers(&self) -> usize {
        self.h.iter().map(|&v| v as usize).sum()
    }

    pub fn predicted_fraction(&self) -> F {
        F::of(self.predicted_compliers() as f64) / F::of(self.n() as f64)
    }

    /// Indicator vector as scalars.
    pub fn h_real(&self) -> Vec<F> {
        self.h.iter().map(|&v| F::of(v as f64)).collect()
    }

    /// An all-ones assignment (the whole population as one subgroup).
    pub fn everyone(n: usize) -> Self {
        Self {
            h: vec![1; n],
            kind: ClassifierKind::Custom,
            scores: vec![F::one(); n],
            warning: None,
        }
    }

    /// Wraps an explicit 0/1 vector as a custom subgroup.
    pub fn custom(h: Vec<u8>, scores: Vec<F>) -> Result<Self> {
        if h.iter().any(|&v| v > 1) {
            return Err(Error::validation("subgroup indicator must be 0/1"));
        }
        if h.len() != scores.len() {
            return Err(Error::validation("indicator/score length mismatch"));
        }
        Ok(Self { h, kind: ClassifierKind::Custom, scores, warning: None })
    }
}

fn check_finite<F: Real>(scores: &[F]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::validation("empty score vector"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite compliance score"));
    }
    Ok(())
}

/// Bayes rule `h = 1(score > 1/2)`.
pub fn bayes_classifier<F: Real>(gamma_hat: &[F]) -> Result<ComplierAssignment<F>> {
    check_finite(gamma_hat)?;
    let h = gamma_hat.iter().map(|&g| u8::from(g > F::half())).collect();
    Ok(ComplierAssignment {
        h,
        kind: ClassifierKind::Bayes,
        scores: gamma_hat.to_vec(),
        warning: None,
    })
}

/// Empirical `(1-t)` quantile: the ascending order statistic at 1-based
/// index `ceil(n (1-t))`. The product is nudged down by a relative epsilon
/// so that values meant to be integers (e.g. `10 * 0.7`) do not round up.
fn empirical_quantile<F: Real>(sorted: &[F], t: F) -> F {
    let n = sorted.len();
    let raw = F::of(n as f64) * (F::one() - t);
    let guard = raw.abs().max(F::one()) * F::of(1e-9);
    let idx = ((raw - guard).ceil().as_f64() as usize).clamp(1, n);
    sorted[idx - 1]
}

/// Quantile-threshold rule: selects the top `100t%` of scores via
/// `h = 1(score > qhat)`.
///
/// Constant scores have no unique quantile: the rule degenerates to
/// all-zeros with a warning. Ties exactly at the threshold are excluded and
/// reported through a warning when they push the selected fraction more
/// than `1/n` from `t`. A tie-free empty selection is an error.
pub fn quantile_classifier<F: Real>(gamma_hat: &[F], t: F) -> Result<ComplierAssignment<F>> {
    check_finite(gamma_hat)?;
    if !(t > F::zero() && t < F::one()) {
        return Err(Error::validation("quantile level must lie in (0, 1)"));
    }
    let n = gamma_hat.len();
    let first = gamma_hat[0];
    if gamma_hat.iter().all(|&g| g == first) {
        return Ok(ComplierAssignment {
            h: vec![0; n],
            kind: ClassifierKind::Quantile { level: t, qhat: first },
            scores: gamma_hat.to_vec(),
            warning: Some(
                "constant scores admit no unique quantile; returning the empty selection".into(),
            ),
        });
    }
    let mut sorted = gamma_hat.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let qhat = empirical_quantile(&sorted, t);
    let h: Vec<u8> = gamma_hat.iter().map(|&g| u8::from(g > qhat)).collect();
    let selected = h.iter().map(|&v| v as usize).sum::<usize>();
    if selected == 0 {
        return Err(Error::validation(format!(
            "level {t} selects no units (n = {n}); increase the level"
        )));
    }
    let frac = F::of(selected as f64) / F::of(n as f64);
    let slack = F::one() / F::of(n as f64);
    let warning = if (frac - t).abs() > slack + F::epsilon() {
        Some(format!(
            "ties at the quantile threshold: selected fraction {frac} differs from requested {t}"
        ))
    } else {
        None
    };
    Ok(ComplierAssignment {
        h,
        kind: ClassifierKind::Quantile { level: t, qhat },
        scores: gamma_hat.to_vec(),
        warning,
    })
}

/// Stochastic rule `h = 1(score > U)`, one uniform draw per unit;
/// reproducible from the seed. Scores outside `[0,1]` behave as certain
/// predictions.
pub fn stochastic_classifier<F: Real>(gamma_hat: &[F], seed: u64) -> Result<ComplierAssignment<F>> {
    check_finite(gamma_hat)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = gamma_hat
        .iter()
        .map(|&g| {
            let u = F::of(rng.gen::<f64>());
            u8::from(g > u)
        })
        .collect();
    Ok(ComplierAssignment {
        h,
        kind: ClassifierKind::Stochastic { seed },
        scores: gamma_hat.to_vec(),
        warning: None,
    })
}

/// Quantile rule with a Bayes-agreement window:
/// `h = 1(score >= qhat - (k1+k2) 1(score >= 1/2) + (k1+k2) 1(score < 1/2))`.
///
/// `kappa1` should bound the sup-norm score error and `kappa2` the quantile
/// error; both are caller-supplied.
pub fn modified_quantile_classifier<F: Real>(
    gamma_hat: &[F],
    qhat: F,
    kappa1: F,
    kappa2: F,
) -> Result<ComplierAssignment<F>> {
    check_finite(gamma_hat)?;
    if kappa1 < F::zero() || kappa2 < F::zero() {
        return Err(Error::validation("kappa bounds must be non-negative"));
    }
    let window = kappa1 + kappa2;
    let h = gamma_hat
        .iter()
        .map(|&g| {
            let threshold = if g >= F::half() { qhat - window } else { qhat + window };
            u8::from(g >= threshold)
        })
        .collect();
    Ok(ComplierAssignment {
        h,
        kind: ClassifierKind::ModifiedQuantile { qhat, kappa1, kappa2 },
        scores: gamma_hat.to_vec(),
        warning: None,
    })
}

/// Quantile rule with fold-specific thresholds: within each fold, the
/// threshold is the empirical `(1-level)` quantile of that fold's own
/// (out-of-fold-predicted) scores, so each unit's selection depends on its
/// fold's score distribution only.
pub fn fold_quantile_classifier<F: Real>(
    gamma_hat: &[F],
    folds: &FoldAssignment,
    level: F,
) -> Result<ComplierAssignment<F>> {
    check_finite(gamma_hat)?;
    if !(level > F::zero() && level < F::one()) {
        return Err(Error::validation("quantile level must lie in (0, 1)"));
    }
    if folds.b.len() != gamma_hat.len() {
        return Err(Error::validation("fold assignment does not match score vector"));
    }
    let mut h = vec![0u8; gamma_hat.len()];
    let mut q_by_fold = Vec::with_capacity(folds.k);
    let mut degenerate = 0usize;
    for fold in 1..=folds.k {
        let units = folds.units_in(fold);
        if units.is_empty() {
            return Err(Error::validation(format!("fold {fold} is empty")));
        }
        let mut scores: Vec<F> = units.iter().map(|&i| gamma_hat[i]).collect();
        let first = scores[0];
        if scores.iter().all(|&g| g == first) {
            degenerate += 1;
            q_by_fold.push(first);
            continue;
        }
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = empirical_quantile(&scores, level);
        q_by_fold.push(q);
        for &i in &units {
            h[i] = u8::from(gamma_hat[i] > q);
        }
    }
    let warning = (degenerate > 0).then(|| {
        format!("{degenerate} fold(s) had constant scores; those folds select no units")
    });
    Ok(ComplierAssignment {
        h,
        kind: ClassifierKind::FoldQuantile { level, q_by_fold },
        scores: gamma_hat.to_vec(),
        warning,
    })
}

/// Identified classification error of `h` against compliance scores
/// `gamma`: `mean[gamma (1-h) + (1-gamma) h]`.
///
/// `gamma` may be true scores (oracle evaluation) or estimates (plug-in);
/// either way it must lie in `[0,1]`. For a stochastic rule this evaluates
/// the realized draw; see [`classification_error_expected`] for the form
/// that averages over the draw analytically.
pub fn classification_error<F: Real>(gamma: &[F], h: &ComplierAssignment<F>) -> Result<F> {
    if gamma.len() != h.n() {
        return Err(Error::validation("score/assignment length mismatch"));
    }
    if gamma.iter().any(|&g| g < F::zero() || g > F::one()) {
        return Err(Error::validation("classification_error requires scores in [0,1]"));
    }
    let n = F::of(gamma.len() as f64);
    let mut acc = F::zero();
    for (&g, &hi) in gamma.iter().zip(&h.h) {
        let hv = F::of(hi as f64);
        acc = acc + g * (F::one() - hv) + (F::one() - g) * hv;
    }
    Ok(acc / n)
}

/// Error of the stochastic rule with the per-unit draw integrated out:
/// `mean[gamma (1 - gamma_hat) + (1 - gamma) gamma_hat]`.
pub fn classification_error_expected<F: Real>(gamma: &[F], gamma_hat: &[F]) -> Result<F> {
    if gamma.len() != gamma_hat.len() {
        return Err(Error::validation("score vector length mismatch"));
    }
    if gamma.iter().any(|&g| g < F::zero() || g > F::one()) {
        return Err(Error::validation("scores must lie in [0,1]"));
    }
    let n = F::of(gamma.len() as f64);
    let mut acc = F::zero();
    for (&g, &gh) in gamma.iter().zip(gamma_hat) {
        let gh = gh.clamp_to(F::zero(), F::one());
        acc = acc + g * (F::one() - gh) + (F::one() - g) * gh;
    }
    Ok(acc / n)
}

/// Basis of the Bayes-error sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorBasis {
    /// From the quantile-rule error.
    FromQuantile,
    /// From the stochastic-rule error.
    FromStochastic,
}

/// Sandwich on the optimal error given the error `e` of the quantile or
/// stochastic rule: `(1 - sqrt(1 - 2e)) / 2 <= E(h0) <= e`.
pub fn bayes_error_bounds<F: Real>(e: F, _which: ErrorBasis) -> Result<(F, F)> {
    if e < F::zero() || e > F::half() {
        return Err(Error::validation(format!(
            "error rate {e} outside [0, 1/2]; the sandwich leaves the real domain"
        )));
    }
    let lower = (F::one() - (F::one() - F::two() * e).sqrt()) * F::half();
    Ok((lower, e))
}

/// Summary of identified classification errors for one analysis: the error
/// of the chosen rule, the plug-in errors of the quantile and stochastic
/// rules, and the Bayes-error sandwich derived from the quantile error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport<F: Real = f64> {
    pub e_hat: F,
    pub e_q: F,
    pub e_s: F,
    pub bayes_lower: F,
    pub bayes_upper: F,
}

/// Builds an [`ErrorReport`] from estimated scores (clamped into `[0,1]`)
/// and a chosen assignment. The quantile-rule error uses the plug-in
/// `2 mean[g 1(g <= qhat)]` at level `mean(g)`; the stochastic-rule error
/// uses `2 mean(g - g^2)`. The sandwich uses the quantile error, falling
/// back to the stochastic error if ties push it past 1/2.
pub fn error_report<F: Real>(
    gamma_hat: &[F],
    h: &ComplierAssignment<F>,
) -> Result<ErrorReport<F>> {
    check_finite(gamma_hat)?;
    let clamped: Vec<F> = gamma_hat
        .iter()
        .map(|&g| g.clamp_to(F::zero(), F::one()))
        .collect();
    let e_hat = classification_error(&clamped, h)?;
    let mu = mean(&clamped);
    let e_s = F::two() * mean(&clamped.iter().map(|&g| g - g * g).collect::<Vec<F>>());
    let e_q = if mu > F::zero() && mu < F::one() {
        let mut sorted = clamped.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let qhat = empirical_quantile(&sorted, mu);
        F::two()
            * mean(
                &clamped
                    .iter()
                    .map(|&g| if g <= qhat { g } else { F::zero() })
                    .collect::<Vec<F>>(),
            )
    } else {
        F::zero()
    };
    let basis = if e_q <= F::half() { e_q } else { e_s };
    let (bayes_lower, bayes_upper) = bayes_error_bounds(basis, ErrorBasis::FromQuantile)?;
    Ok(ErrorReport { e_hat, e_q, e_s, bayes_lower, bayes_upper })
}

/// Average of `f` over predicted compliers: `mean(f h) / mean(h)`. Intended
/// for the stochastic rule, whose predicted-complier group matches the true
/// complier covariate distribution in large samples.
pub fn complier_characteristic<F: Real>(
    f_values: &[F],
    h: &ComplierAssignment<F>,
) -> Result<F> {
    if f_values.len() != h.n() {
        return Err(Error::validation("value/assignment length mismatch"));
    }
    if f_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("characteristic values must be finite"));
    }
    let count = h.predicted_compliers();
    if count == 0 {
        return Err(Error::computation("no predicted compliers"));
    }
    let num: F = f_values
        .iter()
        .zip(&h.h)
        .filter(|(_, &hi)| hi == 1)
        .map(|(&f, _)| f)
        .sum();
    Ok(num / F::of(count as f64))
}
