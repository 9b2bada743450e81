//! First-stage F-statistic demonstration: two equally strong instruments,
//! one of them sharp, where the conventional F-statistic ranks the blunt
//! instrument higher.
//!
//! Instrument 1: `E(A | X, Z1) = 0.2 X + 0.25 Z1` (constant compliance
//! score 0.25, zero sharpness). Instrument 2:
//! `E(A | X, Z2) = 0.3 X + 0.5 X Z2` (score `0.5 X`, sharpness 25%). Both
//! have strength 25% for `X ~ Unif(0,1)`, `Z ~ Bern(1/2)` independent of
//! `X`. Linear probability models are fit by least squares and tested with
//! HC0-robust Wald F statistics: the instrument term alone in the
//! no-interaction models, the instrument and interaction jointly in the
//! interaction model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::linalg::{invert, solve};
use crate::num::split_seed;

/// Average F statistics over the replications, plus the population
/// strength/sharpness of each instrument for reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FstatDemo {
    pub mean_f_z1: f64,
    /// Instrument 2 tested without the interaction term (misspecified).
    pub mean_f_z2_nointer: f64,
    /// Instrument 2 tested with the interaction term (correctly specified).
    pub mean_f_z2_inter: f64,
    pub strength_z1: f64,
    pub strength_z2: f64,
    pub sharpness_z1: f64,
    pub sharpness_z2: f64,
    pub n: usize,
    pub nsim: usize,
}

/// Population strength and sharpness of the two demo instruments, from the
/// closed forms for `gamma_2(x) = x/2` on `Unif(0,1)`:
/// `mu = 1/4`, `xi = E[gamma 1(gamma > q)] = (1 - (3/4)^2)/4`.
pub fn demo_oracle() -> (f64, f64, f64, f64) {
    let mu = 0.25;
    let xi = (1.0 - 0.75f64.powi(2)) / 4.0;
    let psi2 = (xi - mu * mu) / (mu * (1.0 - mu));
    (mu, mu, 0.0, psi2)
}

/// HC0-robust Wald F statistic for the null that the coefficients at
/// `test_idx` are zero, in the OLS fit of `y` on the design `x` (row-major,
/// `n x p`).
fn hc0_wald_f(x: &[f64], n: usize, p: usize, y: &[f64], test_idx: &[usize]) -> Result<f64> {
    // X'X and X'y
    let mut xtx = vec![0.0f64; p * p];
    let mut xty = vec![0.0f64; p];
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        for j in 0..p {
            xty[j] += row[j] * y[i];
            for l in j..p {
                xtx[j * p + l] += row[j] * row[l];
            }
        }
    }
    for j in 0..p {
        for l in 0..j {
            xtx[j * p + l] = xtx[l * p + j];
        }
    }
    let beta = solve(xtx.clone(), xty)?;
    let xtx_inv = invert(&xtx, p)?;
    // meat = X' diag(e^2) X
    let mut meat = vec![0.0f64; p * p];
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        let mut fit = 0.0;
        for j in 0..p {
            fit += row[j] * beta[j];
        }
        let e2 = (y[i] - fit).powi(2);
        for j in 0..p {
            for l in j..p {
                meat[j * p + l] += e2 * row[j] * row[l];
            }
        }
    }
    for j in 0..p {
        for l in 0..j {
            meat[j * p + l] = meat[l * p + j];
        }
    }
    // V = (X'X)^{-1} meat (X'X)^{-1}
    let mut tmp = vec![0.0f64; p * p];
    for r in 0..p {
        for cidx in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                s += xtx_inv[r * p + k] * meat[k * p + cidx];
            }
            tmp[r * p + cidx] = s;
        }
    }
    let mut v = vec![0.0f64; p * p];
    for r in 0..p {
        for cidx in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                s += tmp[r * p + k] * xtx_inv[k * p + cidx];
            }
            v[r * p + cidx] = s;
        }
    }
    // Wald statistic on the tested subset
    let r = test_idx.len();
    let mut v_sub = vec![0.0f64; r * r];
    for (a, &ia) in test_idx.iter().enumerate() {
        for (b, &ib) in test_idx.iter().enumerate() {
            v_sub[a * r + b] = v[ia * p + ib];
        }
    }
    let beta_sub: Vec<f64> = test_idx.iter().map(|&i| beta[i]).collect();
    let solved = solve(v_sub, beta_sub.clone())?;
    let wald: f64 = beta_sub.iter().zip(&solved).map(|(b, s)| b * s).sum();
    Ok(wald / r as f64)
}

/// Runs the demonstration: `nsim` replications of size `n`, returning the
/// three mean F statistics. Deterministic given the seed.
pub fn first_stage_fstat_demo(n: usize, nsim: usize, seed: u64) -> Result<FstatDemo> {
    if n < 10 || nsim == 0 {
        return Err(Error::validation("need n >= 10 and at least one replication"));
    }
    let mut sums = [0.0f64; 3];
    for rep in 0..nsim {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, rep as u64));
        let mut x = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            x.push(rng.gen::<f64>());
            z.push(f64::from(rng.gen::<f64>() < 0.5));
        }
        // blunt instrument: A ~ Bern(0.2 x + 0.25 z)
        let a1: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.gen::<f64>() < 0.2 * x[i] + 0.25 * z[i]))
            .collect();
        // sharp instrument: A ~ Bern(0.3 x + 0.5 x z)
        let a2: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.gen::<f64>() < 0.3 * x[i] + 0.5 * x[i] * z[i]))
            .collect();

        let mut design3: Vec<f64> = Vec::with_capacity(n * 3);
        for i in 0..n {
            design3.extend_from_slice(&[1.0, x[i], z[i]]);
        }
        let mut design4: Vec<f64> = Vec::with_capacity(n * 4);
        for i in 0..n {
            design4.extend_from_slice(&[1.0, x[i], z[i], x[i] * z[i]]);
        }

        sums[0] += hc0_wald_f(&design3, n, 3, &a1, &[2])?;
        sums[1] += hc0_wald_f(&design3, n, 3, &a2, &[2])?;
        sums[2] += hc0_wald_f(&design4, n, 4, &a2, &[2, 3])?;
    }
    let (strength_z1, strength_z2, sharpness_z1, sharpness_z2) = demo_oracle();
    Ok(FstatDemo {
        mean_f_z1: sums[0] / nsim as f64,
        mean_f_z2_nointer: sums[1] / nsim as f64,
        mean_f_z2_inter: sums[2] / nsim as f64,
        strength_z1,
        strength_z2,
        sharpness_z1,
        sharpness_z2,
        n,
        nsim,
    })
}
