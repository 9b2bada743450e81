//! Simulation laboratory: the probit-compliance data-generating process,
//! quadrature oracles for its population moments, a solver mapping target
//! (strength, sharpness) pairs to DGP coefficients, the Monte Carlo harness,
//! the first-stage F-statistic demonstration, and margin-curve fitting.
//!
//! The DGP draws, per unit,
//!
//! ```text
//! X ~ N(0,1),        gamma(x) = Phi(b0 + b1 x),   C | X ~ Bern(gamma)
//! Z | X ~ Bern(expit(x))
//! A = C Z + (1-C) A*,            A* ~ Bern(1/2)
//! Y^a ~ Bern(1/2 + (a - 1/2) beta),   Y = A Y^1 + (1-A) Y^0
//! ```
//!
//! so the average effect equals `beta` in the population and in every
//! score-defined subgroup. Potential outcomes stay inside this module.

pub mod fstat;
pub mod margin;
pub mod montecarlo;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use ndarray::Array2;

use crate::data::IVDataset;
use crate::error::{Error, Result};
use crate::num::normal::{expit, norm_cdf, norm_pdf, norm_quantile};
use crate::num::quad::{integrate_adaptive, integrate_with_splits, NORMAL_SUPPORT};
use crate::num::roots::bisect;
use crate::num::Real;

/// Coefficients and sample size for the probit-compliance DGP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGPConfig<F: Real = f64> {
    /// Intercept in `gamma(x) = Phi(b0 + b1 x)`.
    pub b0: F,
    /// Slope in `gamma(x) = Phi(b0 + b1 x)`.
    pub b1: F,
    /// Treatment effect; `|beta| <= 1` keeps outcome probabilities in `[0,1]`.
    pub beta: F,
    pub n: usize,
    pub seed: u64,
}

impl<F: Real> DGPConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::validation("sample size must be positive"));
        }
        if self.beta.abs() > F::one() {
            return Err(Error::validation("|beta| must be at most 1"));
        }
        if !self.b0.is_finite() || !self.b1.is_finite() {
            return Err(Error::validation("DGP coefficients must be finite"));
        }
        Ok(())
    }
}

/// Population moments of the DGP, computed by closed form (`mu`, `q`) and
/// adaptive quadrature (everything else) to absolute tolerance `1e-10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments<F: Real = f64> {
    pub mu: F,
    pub q: F,
    /// `xi = E[gamma 1(gamma > q)]`.
    pub xi: F,
    pub psi: F,
    /// Error of the quantile rule, `2 E[gamma 1(gamma <= q)]`.
    pub e_q: F,
    /// Error of the stochastic rule, `2 E[gamma - gamma^2]`.
    pub e_s: F,
    /// Bayes error, `E[min(gamma, 1 - gamma)]`.
    pub e_h0: F,
    /// Bound length of the quantile subgroup, `E[1 - gamma | gamma > q]`.
    pub length_hq: F,
    /// Set when `b1 = 0`: the score is constant, the quantile is not unique,
    /// and `e_q`/`length_hq` are reported as their sharpness-identity limits.
    pub degenerate: bool,
}

const QUAD_TOL: f64 = 1e-10;

/// Quadrature tolerance floored at the scalar type's resolution (f32 cannot
/// honor 1e-10 absolute).
fn quad_tol<F: Real>() -> F {
    F::of(QUAD_TOL).max(F::epsilon() * F::of(64.0))
}

/// Population moments for `gamma(x) = Phi(b0 + b1 x)`, `X ~ N(0,1)`.
///
/// Negative `b1` is handled by the `x -> -x` symmetry. The threshold in
/// x-space is `x_q = -Phi^{-1}(mu)`; all integrals split there and at the
/// sigmoid center so the adaptive rule converges even for near-indicator
/// scores.
pub fn oracle_moments<F: Real>(b0: F, b1: F) -> Result<OracleMoments<F>> {
    if !b0.is_finite() || !b1.is_finite() {
        return Err(Error::validation("coefficients must be finite"));
    }
    let b1 = b1.abs();
    let scale = (F::one() + b1 * b1).sqrt();
    let mu = norm_cdf(b0 / scale);
    if mu <= F::of(1e-8) || mu >= F::of(1.0 - 1e-8) {
        return Err(Error::validation(format!(
            "strength {mu} too extreme for stable quadrature"
        )));
    }
    if b1 == F::zero() {
        // constant score: psi = 0 and the quantile rule is degenerate; the
        // Theorem-7 limits are reported for the rule-dependent quantities
        let e_s = F::two() * (mu - mu * mu);
        return Ok(OracleMoments {
            mu,
            q: mu,
            xi: mu * mu,
            psi: F::zero(),
            e_q: e_s,
            e_s,
            e_h0: mu.min(F::one() - mu),
            length_hq: F::one() - mu,
            degenerate: true,
        });
    }
    let q = norm_cdf(b0 - b0 * b1 / scale);
    let gamma = move |x: F| norm_cdf(b0 + b1 * x);
    let lim = F::of(NORMAL_SUPPORT);
    // gamma > q exactly when x > x_q
    let x_q = -norm_quantile(mu);
    let x_q = x_q.clamp_to(-lim, lim);
    // gamma = 1/2 at the sigmoid center; kink of min(gamma, 1-gamma)
    let x_mid = (-b0 / b1).clamp_to(-lim, lim);
    let tol = quad_tol::<F>();

    let xi = integrate_with_splits(
        &mut |x| gamma(x) * norm_pdf(x),
        x_q,
        lim,
        &[x_mid],
        tol,
    )?;
    let e_q = F::two()
        * integrate_with_splits(&mut |x| gamma(x) * norm_pdf(x), -lim, x_q, &[x_mid], tol)?;
    let e_s = F::two()
        * integrate_with_splits(
            &mut |x| {
                let g = gamma(x);
                (g - g * g) * norm_pdf(x)
            },
            -lim,
            lim,
            &[x_mid],
            tol,
        )?;
    let e_h0 = integrate_with_splits(
        &mut |x| {
            let g = gamma(x);
            g.min(F::one() - g) * norm_pdf(x)
        },
        -lim,
        lim,
        &[x_mid],
        tol,
    )?;
    // subgroup mass by quadrature keeps the length an independent route
    let hq_mass = integrate_adaptive(&mut |x| norm_pdf(x), x_q, lim, tol)?;
    let non_complier = integrate_with_splits(
        &mut |x| (F::one() - gamma(x)) * norm_pdf(x),
        x_q,
        lim,
        &[x_mid],
        tol,
    )?;
    if hq_mass <= F::zero() {
        return Err(Error::computation("quantile subgroup has no mass"));
    }
    let psi = (xi - mu * mu) / (mu * (F::one() - mu));
    Ok(OracleMoments {
        mu,
        q,
        xi,
        psi,
        e_q,
        e_s,
        e_h0,
        length_hq: non_complier / hq_mass,
        degenerate: false,
    })
}

/// Sharpness of the DGP with strength pinned to `mu` (so
/// `b0 = Phi^{-1}(mu) sqrt(1 + b1^2)`), as a function of `b1` alone.
fn psi_given_mu<F: Real>(mu: F, b1: F) -> Result<F> {
    let b0 = norm_quantile(mu) * (F::one() + b1 * b1).sqrt();
    let x_q = -norm_quantile(mu);
    let lim = F::of(NORMAL_SUPPORT);
    let x_mid = (-b0 / b1).clamp_to(-lim, lim);
    let xi = integrate_with_splits(
        &mut |x| norm_cdf(b0 + b1 * x) * norm_pdf(x),
        x_q.clamp_to(-lim, lim),
        lim,
        &[x_mid],
        quad_tol::<F>(),
    )?;
    Ok((xi - mu * mu) / (mu * (F::one() - mu)))
}

/// Bracket for the sharpness-in-slope bisection (log-spaced endpoints).
pub const SOLVER_B1_MIN_LOG: f64 = -2.8;
pub const SOLVER_B1_MAX_LOG: f64 = 5.5;

/// Finds `(b0, b1)` such that the DGP has strength `mu_target` and
/// sharpness `psi_target`.
///
/// `b1` comes from a monotone bisection of the quadrature sharpness over
/// `b1 in [e^-2.8, e^5.5]` to `|psi - target| <= 1e-4`; then
/// `b0 = Phi^{-1}(mu) sqrt(1 + b1^2)`. `psi_target = 0` maps to the
/// constant-score special case `(Phi^{-1}(mu), 0)`.
pub fn solve_dgp_params<F: Real>(mu_target: F, psi_target: F) -> Result<(F, F)> {
    if !(mu_target > F::zero() && mu_target < F::one()) {
        return Err(Error::validation("target strength must lie in (0,1)"));
    }
    if psi_target < F::zero() || psi_target >= F::one() {
        return Err(Error::validation("target sharpness must lie in [0,1)"));
    }
    if psi_target == F::zero() {
        return Ok((norm_quantile(mu_target), F::zero()));
    }
    let lo = F::of(SOLVER_B1_MIN_LOG.exp());
    let hi = F::of(SOLVER_B1_MAX_LOG.exp());
    let psi_lo = psi_given_mu(mu_target, lo)?;
    let psi_hi = psi_given_mu(mu_target, hi)?;
    if psi_target < psi_lo || psi_target > psi_hi {
        return Err(Error::computation(format!(
            "sharpness {psi_target} outside achievable range [{psi_lo}, {psi_hi}] on the b1 bracket"
        )));
    }
    let mut objective = |b1: F| psi_given_mu(mu_target, b1).unwrap_or(F::nan()) - psi_target;
    let b1 = bisect(&mut objective, lo, hi, F::of(1e-10), 200)?;
    let achieved = psi_given_mu(mu_target, b1)?;
    if (achieved - psi_target).abs() > F::of(1e-4) {
        return Err(Error::computation(format!(
            "bisection stalled: achieved sharpness {achieved} vs target {psi_target}"
        )));
    }
    let b0 = norm_quantile(mu_target) * (F::one() + b1 * b1).sqrt();
    Ok((b0, b1))
}

/// A simulated dataset plus the latent quantities the estimators never see.
#[derive(Debug, Clone)]
pub struct SimulatedData<F: Real = f64> {
    /// Covariates are `[x, gamma(x)]`; the latent complier flag rides along
    /// in the dataset for simulation-mode scoring.
    pub data: IVDataset<F>,
    /// True compliance score per unit.
    pub gamma: Vec<F>,
    /// Potential outcome under treatment (never exposed to estimators).
    pub y1: Vec<u8>,
    /// Potential outcome under control.
    pub y0: Vec<u8>,
}

impl<F: Real> SimulatedData<F> {
    pub fn latent_c(&self) -> &[u8] {
        self.data.latent_c().expect("simulated data carries latent labels")
    }
}

/// Draws a dataset from the DGP; deterministic given the seed.
///
/// The covariate matrix carries both `x` and the score `gamma(x)`:
/// the score is a deterministic transform of `x` (not latent information),
/// and supplying it as a feature lets logistic nuisance models match the
/// design the way a correctly specified analysis would.
pub fn simulate_dataset<F: Real>(cfg: &DGPConfig<F>) -> Result<SimulatedData<F>> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = Array2::zeros((n, 2));
    let mut z = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let p1: F = F::half() + F::half() * cfg.beta;
    let p0: F = F::half() - F::half() * cfg.beta;
    for i in 0..n {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let xi = F::of(xi);
        let g: F = norm_cdf(cfg.b0 + cfg.b1 * xi);
        let ci = u8::from(F::of(rng.gen::<f64>()) < g);
        let zi = u8::from(F::of(rng.gen::<f64>()) < expit(xi));
        let a_star = u8::from(rng.gen::<f64>() < 0.5);
        let ai = if ci == 1 { zi } else { a_star };
        let y1i = u8::from(F::of(rng.gen::<f64>()) < p1);
        let y0i = u8::from(F::of(rng.gen::<f64>()) < p0);
        let yi = if ai == 1 { y1i } else { y0i };
        x[(i, 0)] = xi;
        x[(i, 1)] = g;
        gamma.push(g);
        c.push(ci);
        z.push(zi);
        a.push(ai);
        y.push(F::of(yi as f64));
        y1.push(y1i);
        y0.push(y0i);
    }
    let data = IVDataset::new(x, z, a, y, Some(c))?;
    Ok(SimulatedData { data, gamma, y1, y0 })
}

/// Streaming Monte Carlo cross-check of the quadrature sharpness: draws
/// latent `(gamma, C, h_q)` and returns the sample `cov(C, h_q)/var(C)`
/// with a delta-method standard error.
pub fn monte_carlo_sharpness<F: Real>(
    b0: F,
    b1: F,
    draws: usize,
    seed: u64,
) -> Result<(F, F)> {
    if draws < 2 {
        return Err(Error::validation("need at least two draws"));
    }
    let moments = oracle_moments(b0, b1)?;
    let q = moments.q;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // accumulate raw moments of (c, h, ch) in f64 for stability
    let (mut s_c, mut s_h, mut s_ch) = (0.0f64, 0.0f64, 0.0f64);
    let (mut s_cc, mut s_hh, mut s_chch) = (0.0f64, 0.0f64, 0.0f64);
    let (mut s_c_h, mut s_c_ch, mut s_h_ch) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..draws {
        let x: f64 = StandardNormal.sample(&mut rng);
        let g: F = norm_cdf(b0 + b1 * F::of(x));
        let c = f64::from(F::of(rng.gen::<f64>()) < g);
        let h = f64::from(g > q);
        let ch = c * h;
        s_c += c;
        s_h += h;
        s_ch += ch;
        s_cc += c * c;
        s_hh += h * h;
        s_chch += ch * ch;
        s_c_h += c * h;
        s_c_ch += c * ch;
        s_h_ch += h * ch;
    }
    let m = draws as f64;
    let (mc, mh, mch) = (s_c / m, s_h / m, s_ch / m);
    let var_c = mc - mc * mc;
    if var_c <= 0.0 {
        return Err(Error::computation("latent compliance is constant in the sample"));
    }
    let psi = (mch - mc * mh) / var_c;
    // delta method on g(mch, mc, mh) = (mch - mc mh) / (mc - mc^2)
    let d_mch = 1.0 / var_c;
    let d_mc = (-mh * var_c - (mch - mc * mh) * (1.0 - 2.0 * mc)) / (var_c * var_c);
    let d_mh = -mc / var_c;
    let cov = |sxy: f64, mx: f64, my: f64| sxy / m - mx * my;
    let var_psi = d_mch * d_mch * cov(s_chch, mch, mch)
        + d_mc * d_mc * cov(s_cc, mc, mc)
        + d_mh * d_mh * cov(s_hh, mh, mh)
        + 2.0 * d_mch * d_mc * cov(s_c_ch, mc, mch)
        + 2.0 * d_mch * d_mh * cov(s_h_ch, mh, mch)
        + 2.0 * d_mc * d_mh * cov(s_c_h, mc, mh);
    let se = (var_psi.max(0.0) / m).sqrt();
    Ok((F::of(psi), F::of(se)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::mean;

    #[test]
    fn constant_score_case() {
        let b0: f64 = norm_quantile(0.3);
        let m = oracle_moments(b0, 0.0).unwrap();
        assert!((m.mu - 0.3).abs() < 1e-12);
        assert_eq!(m.psi, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn near_indicator_scores_have_full_sharpness() {
        // 1 - psi decays like ~0.66/b1; cross-checked against independent
        // adaptive quadrature (psi(200) = 0.996697...)
        let b1 = 200.0f64;
        let b0 = norm_quantile(0.3) * (1.0 + b1 * b1).sqrt();
        let m = oracle_moments(b0, b1).unwrap();
        assert!((m.mu - 0.3).abs() < 1e-10);
        assert!((m.psi - 0.996_697_43).abs() < 1e-6, "psi = {}", m.psi);
        let b1 = 2000.0f64;
        let b0 = norm_quantile(0.3) * (1.0 + b1 * b1).sqrt();
        let m = oracle_moments(b0, b1).unwrap();
        assert!(m.psi > 1.0 - 1e-3, "psi = {}", m.psi);
        assert!(m.e_q < 1e-3);
        assert!(m.length_hq < 1e-3);
    }

    #[test]
    fn negative_slope_is_symmetric() {
        let a = oracle_moments(-0.7f64, 1.3).unwrap();
        let b = oracle_moments(-0.7f64, -1.3).unwrap();
        assert!((a.psi - b.psi).abs() < 1e-12);
        assert!((a.e_q - b.e_q).abs() < 1e-12);
    }

    #[test]
    fn solver_roundtrips() {
        for &psi in &[0.2f64, 0.5, 0.8] {
            let (b0, b1) = solve_dgp_params(0.3, psi).unwrap();
            let m = oracle_moments(b0, b1).unwrap();
            assert!((m.mu - 0.3).abs() < 1e-10);
            assert!((m.psi - psi).abs() < 1e-3, "psi {} vs {psi}", m.psi);
        }
        let (b0, b1) = solve_dgp_params(0.3f64, 0.0).unwrap();
        assert_eq!(b1, 0.0);
        assert!((b0 + 0.524_400_512_708_041).abs() < 1e-10);
    }

    #[test]
    fn solver_rejects_unreachable_targets() {
        assert!(solve_dgp_params(0.3f64, 0.9999).is_err());
        assert!(solve_dgp_params(0.3f64, 1.0).is_err());
        assert!(solve_dgp_params(1.2f64, 0.5).is_err());
    }

    #[test]
    fn sharpness_monotone_in_slope() {
        let mut last = -1.0f64;
        for i in 0..12 {
            let b1 = (-2.0f64 + i as f64 * 0.6).exp();
            let psi = psi_given_mu(0.3, b1).unwrap();
            assert!(psi > last, "psi({b1}) = {psi} not increasing");
            last = psi;
        }
    }

    #[test]
    fn simulation_matches_population_strength() {
        let (b0, b1) = solve_dgp_params(0.3f64, 0.5).unwrap();
        let cfg = DGPConfig { b0, b1, beta: 0.2, n: 200_000, seed: 9 };
        let sim = simulate_dataset(&cfg).unwrap();
        let c_mean = sim.latent_c().iter().map(|&c| c as f64).sum::<f64>() / cfg.n as f64;
        let tol = 4.0 * (0.3f64 * 0.7 / cfg.n as f64).sqrt();
        assert!((c_mean - 0.3).abs() < tol, "{c_mean}");
        // null effect: randomized difference among compliers with Z as coin
        let cfg0 = DGPConfig { b0, b1, beta: 0.0, n: 100_000, seed: 10 };
        let sim0 = simulate_dataset(&cfg0).unwrap();
        let diff = mean(
            &sim0
                .y1
                .iter()
                .zip(&sim0.y0)
                .map(|(&a, &b)| a as f64 - b as f64)
                .collect::<Vec<f64>>(),
        );
        assert!(diff.abs() < 0.01, "{diff}");
    }

    #[test]
    fn potential_outcome_effect_constant_across_score_subgroups() {
        // E(Y1 - Y0) = beta both overall and within the top-score subgroup,
        // by construction of the outcome hierarchy
        let (b0, b1) = (-1.7568266776809713f64, 3.197434208638404);
        let q = oracle_moments(b0, b1).unwrap().q;
        let cfg = DGPConfig { b0, b1, beta: 0.2, n: 400_000, seed: 12 };
        let sim = simulate_dataset(&cfg).unwrap();
        let diff = |keep: &dyn Fn(usize) -> bool| {
            let vals: Vec<f64> = (0..cfg.n)
                .filter(|&i| keep(i))
                .map(|i| sim.y1[i] as f64 - sim.y0[i] as f64)
                .collect();
            (mean(&vals), vals.len())
        };
        let (ate, _) = diff(&|_| true);
        let (sub, m) = diff(&|i| sim.gamma[i] > q);
        let tol = 4.0 * (0.5f64 / (m as f64).sqrt());
        assert!((ate - 0.2).abs() < tol, "{ate}");
        assert!((sub - 0.2).abs() < tol, "{sub}");
        // the subgroup holds roughly the complier share of units
        assert!((m as f64 / cfg.n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn noncompliers_ignore_instrument() {
        // among C = 0 units, A is an independent coin regardless of Z:
        // chi-square independence test on the 2x2 table
        let cfg = DGPConfig { b0: -0.5244f64, b1: 1.0, beta: 0.2, n: 50_000, seed: 3 };
        let sim = simulate_dataset(&cfg).unwrap();
        let mut table = [[0.0f64; 2]; 2];
        for i in 0..cfg.n {
            if sim.latent_c()[i] == 0 {
                table[sim.data.z()[i] as usize][sim.data.a()[i] as usize] += 1.0;
            }
        }
        let total: f64 = table.iter().flatten().sum();
        let row: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let col: Vec<f64> = (0..2).map(|j| table[0][j] + table[1][j]).collect();
        let mut chi2 = 0.0;
        for (r, row_sum) in row.iter().enumerate() {
            for (cidx, col_sum) in col.iter().enumerate() {
                let expected = row_sum * col_sum / total;
                let d = table[r][cidx] - expected;
                chi2 += d * d / expected;
            }
        }
        // 1 df, alpha = 1e-4
        assert!(chi2 < 15.14, "chi2 = {chi2}");
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = DGPConfig { b0: -0.6f64, b1: 1.5, beta: 0.2, n: 500, seed: 77 };
        let a = simulate_dataset(&cfg).unwrap();
        let b = simulate_dataset(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.y1, b.y1);
    }

    #[test]
    fn mc_sharpness_agrees_with_quadrature_smoke() {
        let (b0, b1) = solve_dgp_params(0.3f64, 0.5).unwrap();
        let m = oracle_moments(b0, b1).unwrap();
        let (psi_mc, se) = monte_carlo_sharpness(b0, b1, 200_000, 4).unwrap();
        assert!(
            (psi_mc - m.psi).abs() < 4.0 * se,
            "MC {psi_mc} +- {se} vs quadrature {}",
            m.psi
        );
    }
}
