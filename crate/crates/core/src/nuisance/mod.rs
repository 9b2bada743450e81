//! K-fold cross-fitted nuisance estimation and the uncentered influence
//! functions built from it.
//!
//! For each fold `b`, every nuisance model is trained only on units with
//! `B != b` and evaluated on the units in `b`, so each unit's influence
//! function value is independent of its own data. Fitted quantities:
//!
//! - `pi1(x) = P(Z=1 | X=x)`, clipped into `[eps, 1-eps]`;
//! - `lambda_z(x) = P(A=1 | X=x, Z=z)`, trained on the `Z=z` stratum;
//! - `gamma = lambda1 - lambda0`, the compliance score;
//! - regressions of the four transformed outcomes `V_{j,z}` used by the
//!   bound estimators, each on its own instrument stratum;
//! - regressions of the raw outcome `E(Y | X, Z=z)` used by the LATE.

pub mod learner;

use std::path::Path;

use ndarray::{Array2, Axis};

pub use learner::{train_learner, FittedLearner, LearnerSpec, TrainedLearner};

use crate::bounds::transform_outcomes;
use crate::data::{FoldAssignment, IVDataset};
use crate::error::{Error, Result};
use crate::num::Real;

/// Options for [`fit_crossfit`]. The transformed-outcome and outcome
/// regressions default to the same learner as `lambda_z`.
#[derive(Debug, Clone)]
pub struct CrossfitOptions {
    pub learner: LearnerSpec,
    pub nu_learner: Option<LearnerSpec>,
    pub outcome_learner: Option<LearnerSpec>,
    pub clip_eps: f64,
}

impl CrossfitOptions {
    pub fn new(learner: LearnerSpec) -> Self {
        Self { learner, nu_learner: None, outcome_learner: None, clip_eps: 0.01 }
    }

    pub fn with_clip_eps(mut self, eps: f64) -> Self {
        self.clip_eps = eps;
        self
    }
}

impl Default for CrossfitOptions {
    fn default() -> Self {
        Self::new(LearnerSpec::logistic())
    }
}

/// Out-of-fold nuisance predictions for every unit, plus copies of `(z, a)`
/// so influence functions can be evaluated from this struct alone.
#[derive(Debug, Clone)]
pub struct NuisanceFit<F: Real = f64> {
    pub pi1: Vec<F>,
    pub lambda0: Vec<F>,
    pub lambda1: Vec<F>,
    /// `lambda1 - lambda0`, elementwise; deliberately not clipped to `[0,1]`.
    pub gamma: Vec<F>,
    /// Out-of-fold `E(V_{u,1} | X, Z=1)`.
    pub nu_u1: Vec<F>,
    /// Out-of-fold `E(V_{u,0} | X, Z=0)`.
    pub nu_u0: Vec<F>,
    /// Out-of-fold `E(V_{l,1} | X, Z=1)`.
    pub nu_l1: Vec<F>,
    /// Out-of-fold `E(V_{l,0} | X, Z=0)`.
    pub nu_l0: Vec<F>,
    /// Out-of-fold `E(Y | X, Z=0)`.
    pub m0: Vec<F>,
    /// Out-of-fold `E(Y | X, Z=1)`.
    pub m1: Vec<F>,
    pub folds: FoldAssignment,
    pub clip_eps: F,
    pub z: Vec<u8>,
    pub a: Vec<u8>,
    /// Non-fatal training events (IRLS fallbacks, ridge retries).
    pub warnings: Vec<String>,
}

impl<F: Real> NuisanceFit<F> {
    /// Builds a fit from externally computed predictions (used by oracle
    /// tests that enumerate cell means directly). `gamma` is derived, and
    /// `pi1` is clipped, exactly as in [`fit_crossfit`].
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        pi1: Vec<F>,
        lambda0: Vec<F>,
        lambda1: Vec<F>,
        nu: [Vec<F>; 4],
        m0: Vec<F>,
        m1: Vec<F>,
        folds: FoldAssignment,
        clip_eps: F,
        z: Vec<u8>,
        a: Vec<u8>,
    ) -> Result<Self> {
        let n = z.len();
        let [nu_u1, nu_u0, nu_l1, nu_l0] = nu;
        for (name, v) in [
            ("pi1", &pi1),
            ("lambda0", &lambda0),
            ("lambda1", &lambda1),
            ("nu_u1", &nu_u1),
            ("nu_u0", &nu_u0),
            ("nu_l1", &nu_l1),
            ("nu_l0", &nu_l0),
            ("m0", &m0),
            ("m1", &m1),
        ] {
            if v.len() != n {
                return Err(Error::validation(format!("{name} length mismatch")));
            }
        }
        if a.len() != n || folds.b.len() != n {
            return Err(Error::validation("treatment/fold length mismatch"));
        }
        if !(clip_eps > F::zero() && clip_eps < F::half()) {
            return Err(Error::validation("clip_eps must lie in (0, 0.5)"));
        }
        let lo = clip_eps;
        let hi = F::one() - clip_eps;
        let pi1: Vec<F> = pi1.into_iter().map(|p| p.clamp_to(lo, hi)).collect();
        let gamma = lambda1.iter().zip(&lambda0).map(|(&l1, &l0)| l1 - l0).collect();
        Ok(Self {
            pi1,
            lambda0,
            lambda1,
            gamma,
            nu_u1,
            nu_u0,
            nu_l1,
            nu_l0,
            m0,
            m1,
            folds,
            clip_eps,
            z,
            a,
            warnings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Uncentered influence function
    /// `phi_z(T) = 1(Z=z)/pi_z * {T - E(T|X,Z=z)} + E(T|X,Z=z)`
    /// for unit `i`, where `t_reg` is the unit's out-of-fold regression
    /// prediction of `E(T|X,Z=z)` and `pi_0 = 1 - pi_1`.
    pub fn phi_z(&self, i: usize, z: u8, t_value: F, t_reg: F) -> F {
        if self.z[i] == z {
            let pi_z = if z == 1 { self.pi1[i] } else { F::one() - self.pi1[i] };
            (t_value - t_reg) / pi_z + t_reg
        } else {
            t_reg
        }
    }

    /// `phi_mu = phi_1(A) - phi_0(A)`, the uncentered influence function for
    /// the instrument strength `mu = E(gamma)`.
    pub fn phi_mu(&self, i: usize) -> F {
        let a = if self.a[i] == 1 { F::one() } else { F::zero() };
        self.phi_z(i, 1, a, self.lambda1[i]) - self.phi_z(i, 0, a, self.lambda0[i])
    }

    /// All `phi_mu` values.
    pub fn phi_mu_all(&self) -> Vec<F> {
        (0..self.n()).map(|i| self.phi_mu(i)).collect()
    }

    /// Writes one row per unit: fold id, observed `(z, a)`, and every
    /// out-of-fold nuisance prediction.
    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record([
            "unit", "fold", "z", "a", "pi1", "lambda0", "lambda1", "gamma", "nu_u1", "nu_u0",
            "nu_l1", "nu_l0", "m0", "m1",
        ])?;
        for i in 0..self.n() {
            w.write_record(&[
                i.to_string(),
                self.folds.b[i].to_string(),
                self.z[i].to_string(),
                self.a[i].to_string(),
                format!("{}", self.pi1[i]),
                format!("{}", self.lambda0[i]),
                format!("{}", self.lambda1[i]),
                format!("{}", self.gamma[i]),
                format!("{}", self.nu_u1[i]),
                format!("{}", self.nu_u0[i]),
                format!("{}", self.nu_l1[i]),
                format!("{}", self.nu_l0[i]),
                format!("{}", self.m0[i]),
                format!("{}", self.m1[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn subset<F: Real>(x: &Array2<F>, idx: &[usize]) -> Array2<F> {
    x.select(Axis(0), idx)
}

fn labels_from<F: Real>(values: &[F], idx: &[usize]) -> Vec<F> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Cross-fits all nuisance regressions over the given folds.
///
/// Errors if some fold's training complement lacks either instrument arm
/// ("degenerate instrument arm") or the outcome is outside `[0,1]` (rescale
/// first).
pub fn fit_crossfit<F: Real>(
    ds: &IVDataset<F>,
    folds: &FoldAssignment,
    options: &CrossfitOptions,
) -> Result<NuisanceFit<F>> {
    let n = ds.n();
    if folds.b.len() != n {
        return Err(Error::validation("fold assignment does not match dataset size"));
    }
    if !(options.clip_eps > 0.0 && options.clip_eps < 0.5) {
        return Err(Error::validation("clip_eps must lie in (0, 0.5)"));
    }
    let transformed = transform_outcomes(ds)?;
    let y: Vec<F> = ds.y().to_vec();
    let z_labels: Vec<F> = ds.z().iter().map(|&v| F::of(v as f64)).collect();
    let a_labels: Vec<F> = ds.a().iter().map(|&v| F::of(v as f64)).collect();

    let nu_spec = options.nu_learner.as_ref().unwrap_or(&options.learner);
    let y_spec = options.outcome_learner.as_ref().unwrap_or(&options.learner);

    let mut pi1 = vec![F::zero(); n];
    let mut lambda0 = vec![F::zero(); n];
    let mut lambda1 = vec![F::zero(); n];
    let mut nu_u1 = vec![F::zero(); n];
    let mut nu_u0 = vec![F::zero(); n];
    let mut nu_l1 = vec![F::zero(); n];
    let mut nu_l0 = vec![F::zero(); n];
    let mut m0 = vec![F::zero(); n];
    let mut m1 = vec![F::zero(); n];
    let mut warnings = Vec::new();

    for fold in 1..=folds.k {
        let train = folds.units_outside(fold);
        let test = folds.units_in(fold);
        if train.is_empty() || test.is_empty() {
            return Err(Error::validation(format!("fold {fold} is empty")));
        }
        let train_z1: Vec<usize> = train.iter().copied().filter(|&i| ds.z()[i] == 1).collect();
        let train_z0: Vec<usize> = train.iter().copied().filter(|&i| ds.z()[i] == 0).collect();
        if train_z0.is_empty() || train_z1.is_empty() {
            return Err(Error::validation(format!(
                "degenerate instrument arm: training data for fold {fold} lacks Z={} units",
                if train_z0.is_empty() { 0 } else { 1 }
            )));
        }

        let x_train = subset(ds.x(), &train);
        let x_z0 = subset(ds.x(), &train_z0);
        let x_z1 = subset(ds.x(), &train_z1);
        let x_test = subset(ds.x(), &test);
        let test_local: Vec<usize> = (0..test.len()).collect();

        let mut fit_into = |spec: &LearnerSpec,
                            x_fit: &Array2<F>,
                            labels: Vec<F>,
                            out: &mut Vec<F>,
                            what: &str|
         -> Result<()> {
            let trained = train_learner(spec, x_fit, &labels)?;
            if let Some(msg) = trained.warning {
                warnings.push(format!("fold {fold}, {what}: {msg}"));
            }
            let preds = trained.fit.predict_rows(&x_test, &test_local);
            for (&unit, pred) in test.iter().zip(preds) {
                out[unit] = pred;
            }
            Ok(())
        };

        fit_into(&options.learner, &x_train, labels_from(&z_labels, &train), &mut pi1, "pi1")?;
        fit_into(&options.learner, &x_z0, labels_from(&a_labels, &train_z0), &mut lambda0, "lambda0")?;
        fit_into(&options.learner, &x_z1, labels_from(&a_labels, &train_z1), &mut lambda1, "lambda1")?;
        fit_into(nu_spec, &x_z1, labels_from(&transformed.v_u1, &train_z1), &mut nu_u1, "nu_u1")?;
        fit_into(nu_spec, &x_z0, labels_from(&transformed.v_u0, &train_z0), &mut nu_u0, "nu_u0")?;
        fit_into(nu_spec, &x_z1, labels_from(&transformed.v_l1, &train_z1), &mut nu_l1, "nu_l1")?;
        fit_into(nu_spec, &x_z0, labels_from(&transformed.v_l0, &train_z0), &mut nu_l0, "nu_l0")?;
        fit_into(y_spec, &x_z0, labels_from(&y, &train_z0), &mut m0, "m0")?;
        fit_into(y_spec, &x_z1, labels_from(&y, &train_z1), &mut m1, "m1")?;
    }

    let eps = F::of(options.clip_eps);
    let hi = F::one() - eps;
    for p in pi1.iter_mut() {
        *p = p.clamp_to(eps, hi);
    }
    let gamma: Vec<F> = lambda1.iter().zip(&lambda0).map(|(&l1, &l0)| l1 - l0).collect();

    Ok(NuisanceFit {
        pi1,
        lambda0,
        lambda1,
        gamma,
        nu_u1,
        nu_u0,
        nu_l1,
        nu_l0,
        m0,
        m1,
        folds: folds.clone(),
        clip_eps: eps,
        z: ds.z().to_vec(),
        a: ds.a().to_vec(),
        warnings,
    })
}
