//! Monte Carlo harness: runs the full pipeline (simulate, cross-fit,
//! classify, bound, estimate sharpness) across a grid of sharpness targets
//! and sample sizes, summarizing classification errors, bound lengths, and
//! sharpness bias/SD/coverage per cell.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::subgroup_bounds;
use crate::classify::{bayes_classifier, fold_quantile_classifier, stochastic_classifier,
    ComplierAssignment};
use crate::data::assign_folds;
use crate::error::{Error, Result};
use crate::nuisance::{fit_crossfit, CrossfitOptions, LearnerSpec};
use crate::num::{mean, sample_sd, split_seed};
use crate::sharpness::{estimate_sharpness, estimate_strength};
use crate::simlab::{oracle_moments, simulate_dataset, solve_dgp_params, DGPConfig};

/// Grid and pipeline settings for [`run_monte_carlo`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub mu: f64,
    pub psi_list: Vec<f64>,
    pub beta: f64,
    pub n_list: Vec<usize>,
    pub nsim: usize,
    pub seed: u64,
    pub folds: usize,
    pub learner: LearnerSpec,
    pub clip_eps: f64,
    pub level: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            mu: 0.3,
            psi_list: vec![0.2, 0.5, 0.8],
            beta: 0.2,
            n_list: vec![500, 1000, 5000],
            nsim: 500,
            seed: 2000,
            folds: 2,
            learner: LearnerSpec::logistic(),
            clip_eps: 0.01,
            level: 0.95,
        }
    }
}

/// One summary row per `(psi, n)` cell; every rate/length column is a mean
/// over successful replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloRow {
    pub psi_target: f64,
    /// Oracle sharpness actually achieved by the solved DGP coefficients.
    pub psi_oracle: f64,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    /// Empirical misclassification rate of the Bayes rule vs latent labels.
    pub err_h0: f64,
    pub err_hq: f64,
    pub err_hs: f64,
    /// Mean estimated bound length for the average treatment effect.
    pub len_ate: f64,
    /// Mean estimated bound length for the quantile-subgroup effect.
    pub len_hq: f64,
    /// Coverage of the effect by the Imbens–Manski intervals.
    pub cover_ate: f64,
    pub cover_hq: f64,
    pub mu_mean: f64,
    pub psi_bias: f64,
    pub psi_sd: f64,
    /// Coverage of the logit-transformed sharpness interval (Wald fallback
    /// for replications whose estimate leaves `(0,1)`).
    pub psi_cover: f64,
    pub psi_cover_wald: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloTable {
    pub config: MonteCarloConfig,
    pub rows: Vec<MonteCarloRow>,
}

impl MonteCarloTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record([
            "psi_target",
            "psi_oracle",
            "n",
            "replications",
            "failures",
            "err_h0",
            "err_hq",
            "err_hs",
            "len_ate",
            "len_hq",
            "cover_ate",
            "cover_hq",
            "mu_mean",
            "psi_bias",
            "psi_sd",
            "psi_cover",
            "psi_cover_wald",
        ])?;
        for r in &self.rows {
            w.write_record(&[
                format!("{}", r.psi_target),
                format!("{}", r.psi_oracle),
                r.n.to_string(),
                r.replications.to_string(),
                r.failures.to_string(),
                format!("{}", r.err_h0),
                format!("{}", r.err_hq),
                format!("{}", r.err_hs),
                format!("{}", r.len_ate),
                format!("{}", r.len_hq),
                format!("{}", r.cover_ate),
                format!("{}", r.cover_hq),
                format!("{}", r.mu_mean),
                format!("{}", r.psi_bias),
                format!("{}", r.psi_sd),
                format!("{}", r.psi_cover),
                format!("{}", r.psi_cover_wald),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct RepOutcome {
    err_h0: f64,
    err_hq: f64,
    err_hs: f64,
    len_ate: f64,
    len_hq: f64,
    cover_ate: bool,
    cover_hq: bool,
    mu_hat: f64,
    psi_hat: f64,
    cover_psi: bool,
    cover_psi_wald: bool,
}

fn misclassification(h: &ComplierAssignment, c: &[u8]) -> f64 {
    let wrong = h.h.iter().zip(c).filter(|(&hi, &ci)| hi != ci).count();
    wrong as f64 / c.len() as f64
}

fn replicate(
    cfg: &MonteCarloConfig,
    b0: f64,
    b1: f64,
    n: usize,
    psi_true: f64,
    rep_seed: u64,
) -> Result<RepOutcome> {
    let sim = simulate_dataset(&DGPConfig { b0, b1, beta: cfg.beta, n, seed: rep_seed })?;
    let ds = &sim.data;
    let c = sim.latent_c();
    let folds = assign_folds(n, cfg.folds, split_seed(rep_seed, 101))?;
    let options = CrossfitOptions {
        learner: cfg.learner.clone(),
        nu_learner: None,
        outcome_learner: None,
        clip_eps: cfg.clip_eps,
    };
    let nf = fit_crossfit(ds, &folds, &options)?;

    let h0 = bayes_classifier(&nf.gamma)?;
    let strength = estimate_strength(&nf);
    if !strength.in_range {
        return Err(Error::computation("strength estimate outside (0,1)"));
    }
    let hq = fold_quantile_classifier(&nf.gamma, &folds, strength.mu_hat)?;
    let hs = stochastic_classifier(&nf.gamma, split_seed(rep_seed, 202))?;

    let everyone = ComplierAssignment::everyone(n);
    let ate = subgroup_bounds(ds, &nf, &everyone, cfg.level)?;
    let bhq = subgroup_bounds(ds, &nf, &hq, cfg.level)?;

    let sharp = estimate_sharpness(&nf, &hq, &strength, cfg.level)?;
    let cover_psi_wald = sharp.wald_ci.0 <= psi_true && psi_true <= sharp.wald_ci.1;
    let cover_psi = match sharp.logit_ci {
        Some((lo, hi)) => lo <= psi_true && psi_true <= hi,
        None => {
            // estimate outside (0,1): sharpness itself lives in the unit
            // interval, so score the boundary-clamped logit interval (the
            // transformed interval widens to cover essentially all of [0,1]
            // as the clamp binds)
            let z = crate::num::normal::norm_quantile((1.0 + cfg.level) / 2.0);
            let center = sharp.psi_hat.clamp(1e-3, 1.0 - 1e-3);
            let scale = center * (1.0 - center);
            let half = z * sharp.psi_se / scale / (n as f64).sqrt();
            let mid = crate::num::normal::logit(center);
            let lo = crate::num::normal::expit(mid - half);
            let hi = crate::num::normal::expit(mid + half);
            lo <= psi_true && psi_true <= hi
        }
    };

    Ok(RepOutcome {
        err_h0: misclassification(&h0, c),
        err_hq: misclassification(&hq, c),
        err_hs: misclassification(&hs, c),
        len_ate: ate.length(),
        len_hq: bhq.length(),
        cover_ate: ate.im_interval.0 <= cfg.beta && cfg.beta <= ate.im_interval.1,
        cover_hq: bhq.im_interval.0 <= cfg.beta && cfg.beta <= bhq.im_interval.1,
        mu_hat: strength.mu_hat,
        psi_hat: sharp.psi_hat,
        cover_psi,
        cover_psi_wald,
    })
}

/// Runs the harness over the `(psi, n)` grid. Replication `i` of each cell
/// is seeded with `seed + i`, so results are deterministic and independent
/// of the rayon thread count.
pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<MonteCarloTable> {
    if cfg.nsim == 0 {
        return Err(Error::validation("need at least one replication"));
    }
    let mut rows = Vec::new();
    for &psi_target in &cfg.psi_list {
        let (b0, b1) = solve_dgp_params(cfg.mu, psi_target)?;
        let psi_oracle = oracle_moments(b0, b1)?.psi;
        for &n in &cfg.n_list {
            let outcomes: Vec<Result<RepOutcome>> = (0..cfg.nsim)
                .into_par_iter()
                .map(|i| replicate(cfg, b0, b1, n, psi_oracle, cfg.seed.wrapping_add(i as u64)))
                .collect();
            let mut ok = Vec::new();
            let mut failures = 0usize;
            for o in outcomes {
                match o {
                    Ok(rep) => ok.push(rep),
                    Err(_) => failures += 1,
                }
            }
            if ok.is_empty() {
                return Err(Error::computation(format!(
                    "all {} replications failed at psi={psi_target}, n={n}",
                    cfg.nsim
                )));
            }
            let collect = |f: &dyn Fn(&RepOutcome) -> f64| -> Vec<f64> {
                ok.iter().map(f).collect()
            };
            let psi_hats = collect(&|r| r.psi_hat);
            rows.push(MonteCarloRow {
                psi_target,
                psi_oracle,
                n,
                replications: ok.len(),
                failures,
                err_h0: mean(&collect(&|r| r.err_h0)),
                err_hq: mean(&collect(&|r| r.err_hq)),
                err_hs: mean(&collect(&|r| r.err_hs)),
                len_ate: mean(&collect(&|r| r.len_ate)),
                len_hq: mean(&collect(&|r| r.len_hq)),
                cover_ate: mean(&collect(&|r| f64::from(r.cover_ate))),
                cover_hq: mean(&collect(&|r| f64::from(r.cover_hq))),
                mu_mean: mean(&collect(&|r| r.mu_hat)),
                psi_bias: mean(&psi_hats) - psi_oracle,
                psi_sd: sample_sd(&psi_hats),
                psi_cover: mean(&collect(&|r| f64::from(r.cover_psi))),
                psi_cover_wald: mean(&collect(&|r| f64::from(r.cover_psi_wald))),
            });
        }
    }
    Ok(MonteCarloTable { config: cfg.clone(), rows })
}
