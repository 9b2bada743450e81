//! Pluggable regression learners behind a single prediction interface.
//!
//! Labels live in `[0,1]` (binary indicators or bounded transformed
//! outcomes), so every learner predicts a mean in `[0,1]`. The logistic
//! learner accepts fractional labels and fits by iteratively reweighted
//! least squares.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::linalg::solve;
use crate::num::normal::expit;
use crate::num::Real;

/// Which learner to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerSpec {
    /// Logistic regression with an intercept, fit by IRLS.
    Logistic {
        max_iter: usize,
        /// Relative deviance-change convergence threshold.
        tol: f64,
    },
    /// Mean of the labels of the `k` nearest neighbors (Euclidean distance).
    Knn { k: usize },
    /// The label mean, ignoring covariates.
    ConstantMean,
}

impl LearnerSpec {
    pub fn logistic() -> Self {
        LearnerSpec::Logistic { max_iter: 50, tol: 1e-10 }
    }

    pub fn knn(k: usize) -> Self {
        LearnerSpec::Knn { k }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Logistic { max_iter, tol } => {
                if *max_iter < 1 {
                    return Err(Error::validation("IRLS max iterations must be >= 1"));
                }
                if *tol <= 0.0 || !tol.is_finite() {
                    return Err(Error::validation("IRLS tolerance must be positive"));
                }
            }
            LearnerSpec::Knn { k } => {
                if *k < 1 {
                    return Err(Error::validation("knn neighbor count must be >= 1"));
                }
            }
            LearnerSpec::ConstantMean => {}
        }
        Ok(())
    }

    /// Parses the CLI syntax `logistic`, `knn:K`, or `constant`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("logistic") {
            return Ok(LearnerSpec::logistic());
        }
        if s.eq_ignore_ascii_case("constant") {
            return Ok(LearnerSpec::ConstantMean);
        }
        if let Some(rest) = s.strip_prefix("knn:").or_else(|| s.strip_prefix("KNN:")) {
            let k: usize = rest
                .parse()
                .map_err(|_| Error::validation(format!("bad knn neighbor count '{rest}'")))?;
            let spec = LearnerSpec::Knn { k };
            spec.validate()?;
            return Ok(spec);
        }
        Err(Error::validation(format!(
            "unknown learner '{s}' (expected logistic, knn:K, or constant)"
        )))
    }
}

/// A fitted regression: deterministic map from a covariate row to a mean
/// prediction in `[0,1]`.
pub enum FittedLearner<F: Real = f64> {
    Logistic { coefficients: Vec<F> },
    Knn { features: Array2<F>, labels: Vec<F>, k: usize },
    ConstantMean { value: F },
}

impl<F: Real> FittedLearner<F> {
    pub fn predict(&self, row: ArrayView1<'_, F>) -> F {
        match self {
            FittedLearner::Logistic { coefficients } => {
                let mut eta = coefficients[0];
                for (j, &b) in coefficients.iter().skip(1).enumerate() {
                    eta = eta + b * row[j];
                }
                expit(eta)
            }
            FittedLearner::Knn { features, labels, k } => {
                let n = labels.len();
                let mut dist: Vec<(F, usize)> = (0..n)
                    .map(|i| {
                        let mut d = F::zero();
                        for j in 0..features.ncols() {
                            let diff = features[(i, j)] - row[j];
                            d = d + diff * diff;
                        }
                        (d, i)
                    })
                    .collect();
                let k = (*k).min(n);
                dist.select_nth_unstable_by(k - 1, |a, b| {
                    a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
                });
                let mut acc = F::zero();
                for &(_, i) in dist[..k].iter() {
                    acc = acc + labels[i];
                }
                acc / F::of(k as f64)
            }
            FittedLearner::ConstantMean { value } => *value,
        }
    }

    pub fn predict_rows(&self, features: &Array2<F>, rows: &[usize]) -> Vec<F> {
        rows.iter().map(|&i| self.predict(features.row(i))).collect()
    }
}

/// Outcome of a training call: the fit plus any non-fatal warning (IRLS
/// fallback, ridge jitter).
pub struct TrainedLearner<F: Real = f64> {
    pub fit: FittedLearner<F>,
    pub warning: Option<String>,
}

/// Fits `spec` on `(features, labels)`.
///
/// Logistic regression requires at least `p + 2` rows (intercept plus one
/// degree of freedom); IRLS that fails to converge falls back to the label
/// mean with a warning, and a singular weighted design is retried once with
/// a ridge jitter of `1e-8`.
pub fn train_learner<F: Real>(
    spec: &LearnerSpec,
    features: &Array2<F>,
    labels: &[F],
) -> Result<TrainedLearner<F>> {
    spec.validate()?;
    let m = labels.len();
    if features.nrows() != m {
        return Err(Error::validation("features/labels length mismatch"));
    }
    if m == 0 {
        return Err(Error::validation("cannot train on an empty sample"));
    }
    if labels.iter().any(|&v| v < F::zero() || v > F::one()) {
        return Err(Error::validation("labels must lie in [0,1]"));
    }
    match spec {
        LearnerSpec::ConstantMean => Ok(TrainedLearner {
            fit: FittedLearner::ConstantMean { value: crate::num::mean(labels) },
            warning: None,
        }),
        LearnerSpec::Knn { k } => Ok(TrainedLearner {
            fit: FittedLearner::Knn {
                features: features.clone(),
                labels: labels.to_vec(),
                k: *k,
            },
            warning: None,
        }),
        LearnerSpec::Logistic { max_iter, tol } => {
            let p = features.ncols() + 1;
            if m < p + 1 {
                return Err(Error::validation(format!(
                    "logistic regression needs at least {} rows for {} coefficients, got {m}",
                    p + 1,
                    p
                )));
            }
            match irls(features, labels, *max_iter, *tol) {
                Ok(IrlsOutcome::Converged(coefficients)) => Ok(TrainedLearner {
                    fit: FittedLearner::Logistic { coefficients },
                    warning: None,
                }),
                // out of iterations but the deviance kept improving on the
                // constant model (e.g. separated data): keep the iterate
                Ok(IrlsOutcome::MaxIterations(coefficients)) => Ok(TrainedLearner {
                    fit: FittedLearner::Logistic { coefficients },
                    warning: Some(format!(
                        "IRLS reached {max_iter} iterations without meeting the deviance \
                         criterion; using the last iterate"
                    )),
                }),
                Ok(IrlsOutcome::Failed) => Ok(TrainedLearner {
                    fit: FittedLearner::ConstantMean { value: crate::num::mean(labels) },
                    warning: Some(format!(
                        "IRLS failed to improve on the constant model within {max_iter} \
                         iterations; using label mean"
                    )),
                }),
                Err(e) => Err(e),
            }
        }
    }
}

enum IrlsOutcome<F> {
    Converged(Vec<F>),
    /// Ran out of iterations while still strictly better than the constant
    /// model (separated data converges only geometrically here).
    MaxIterations(Vec<F>),
    /// No improvement over the constant model or numerically broken.
    Failed,
}

/// IRLS for logistic regression with fractional labels; the coefficient
/// vector puts the intercept first.
fn irls<F: Real>(
    features: &Array2<F>,
    labels: &[F],
    max_iter: usize,
    tol: f64,
) -> Result<IrlsOutcome<F>> {
    let m = labels.len();
    let p = features.ncols() + 1;
    let mut beta = vec![F::zero(); p];
    // starting intercept at the logit of the label mean speeds convergence
    let ybar = crate::num::mean(labels).clamp_to(F::of(1e-6), F::of(1.0 - 1e-6));
    beta[0] = crate::num::normal::logit(ybar);

    let design = |i: usize, j: usize| -> F {
        if j == 0 {
            F::one()
        } else {
            features[(i, j - 1)]
        }
    };

    let deviance = |beta: &[F]| -> F {
        let mut dev = F::zero();
        for i in 0..m {
            let mut eta = beta[0];
            for j in 1..p {
                eta = eta + beta[j] * design(i, j);
            }
            let mu = expit(eta).clamp_to(F::of(1e-300), F::of(1.0 - 1e-16));
            let y = labels[i];
            let mut term = F::zero();
            if y > F::zero() {
                term = term + y * (y / mu).ln();
            }
            if y < F::one() {
                term = term + (F::one() - y) * ((F::one() - y) / (F::one() - mu)).ln();
            }
            dev = dev + F::two() * term;
        }
        dev
    };

    let min_w = F::of(1e-10);
    let null_deviance = deviance(&beta);
    let mut dev_old = null_deviance;
    let mut converged = false;
    for _ in 0..max_iter {
        // weighted normal equations: (X' W X) delta_beta = X' (y - mu)
        let mut xtwx = vec![F::zero(); p * p];
        let mut score = vec![F::zero(); p];
        for i in 0..m {
            let mut eta = beta[0];
            for j in 1..p {
                eta = eta + beta[j] * design(i, j);
            }
            let mu = expit(eta);
            let w = (mu * (F::one() - mu)).max(min_w);
            let resid = labels[i] - mu;
            for j in 0..p {
                let xj = design(i, j);
                score[j] = score[j] + xj * resid;
                for l in j..p {
                    xtwx[j * p + l] = xtwx[j * p + l] + w * xj * design(i, l);
                }
            }
        }
        for j in 0..p {
            for l in 0..j {
                xtwx[j * p + l] = xtwx[l * p + j];
            }
        }
        let step = match solve(xtwx.clone(), score.clone()) {
            Ok(s) => s,
            Err(_) => {
                // ridge jitter on the diagonal, then retry
                let ridge = F::of(1e-8);
                for j in 0..p {
                    xtwx[j * p + j] = xtwx[j * p + j] + ridge;
                }
                solve(xtwx, score)?
            }
        };
        for j in 0..p {
            beta[j] = beta[j] + step[j];
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Ok(IrlsOutcome::Failed);
        }
        let dev = deviance(&beta);
        // R-style criterion: |dev - dev_old| / (|dev| + 0.1) < tol
        let rel = (dev - dev_old).abs() / (dev.abs() + F::of(0.1));
        dev_old = dev;
        if rel < F::of(tol) {
            converged = true;
            break;
        }
    }
    if converged {
        Ok(IrlsOutcome::Converged(beta))
    } else if dev_old.is_finite() && dev_old < null_deviance {
        Ok(IrlsOutcome::MaxIterations(beta))
    } else {
        Ok(IrlsOutcome::Failed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_mean_predicts_mean() {
        let x = Array2::zeros((5, 1));
        let labels = vec![0.3f64; 5];
        let t = train_learner(&LearnerSpec::ConstantMean, &x, &labels).unwrap();
        assert_eq!(t.fit.predict(x.row(0)), 0.3);
    }

    #[test]
    fn logistic_saturates_under_separation() {
        // one feature perfectly separates the labels
        let n = 20;
        let mut x = Array2::zeros((n, 1));
        let mut labels = vec![0.0f64; n];
        for i in 0..n {
            x[(i, 0)] = i as f64 / n as f64;
            labels[i] = if x[(i, 0)] > 0.5 { 1.0 } else { 0.0 };
        }
        let t = train_learner(&LearnerSpec::logistic(), &x, &labels).unwrap();
        for i in 0..n {
            let p = t.fit.predict(x.row(i));
            assert!(
                (p - labels[i]).abs() < 0.01,
                "unit {i}: predicted {p}, label {}",
                labels[i]
            );
        }
    }

    #[test]
    fn logistic_recovers_slope() {
        // 5000 draws from P(A=1|x) = expit(x): slope within 0.1
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 5000;
        let mut x = Array2::zeros((n, 1));
        let mut labels = vec![0.0f64; n];
        for i in 0..n {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x[(i, 0)] = xi;
            let p = expit(xi);
            labels[i] = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        }
        let t = train_learner(&LearnerSpec::logistic(), &x, &labels).unwrap();
        match t.fit {
            FittedLearner::Logistic { coefficients } => {
                assert!(coefficients[0].abs() < 0.1, "intercept {}", coefficients[0]);
                assert!(
                    (coefficients[1] - 1.0).abs() < 0.1,
                    "slope {}",
                    coefficients[1]
                );
            }
            _ => panic!("expected a logistic fit"),
        }
    }

    #[test]
    fn knn_local_mean() {
        let mut x = Array2::zeros((4, 1));
        for i in 0..4 {
            x[(i, 0)] = i as f64;
        }
        let labels = vec![0.0, 0.0, 1.0, 1.0];
        let t = train_learner(&LearnerSpec::knn(2), &x, &labels).unwrap();
        assert_eq!(t.fit.predict(x.row(0)), 0.0);
        assert_eq!(t.fit.predict(x.row(3)), 1.0);
    }

    #[test]
    fn logistic_needs_enough_rows() {
        let x = Array2::zeros((2, 2));
        let labels = vec![0.0, 1.0];
        assert!(train_learner(&LearnerSpec::logistic(), &x, &labels).is_err());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(LearnerSpec::parse("logistic").unwrap(), LearnerSpec::logistic());
        assert_eq!(LearnerSpec::parse("knn:5").unwrap(), LearnerSpec::Knn { k: 5 });
        assert_eq!(LearnerSpec::parse("constant").unwrap(), LearnerSpec::ConstantMean);
        assert!(LearnerSpec::parse("forest").is_err());
        assert!(LearnerSpec::parse("knn:0").is_err());
    }
}
