//! Monte Carlo check that a design delivers its predicted variance for `beta_3`.
//!
//! Each replicate draws `n` subjects, assigns treatment independently with
//! probability `p(x)`, simulates the two-line model and fits it by least
//! squares. Replicate `r` owns the ChaCha stream `(attempt << 32) | r` under the
//! configured seed, so parallel and serial runs give identical output.

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{det_m, m11};
use crate::design::DesignFunction;
use crate::dist::Distribution;
use crate::error::{Error, Result};

/// Redraw budget per replicate before giving up.
const MAX_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub beta: [f64; 4],
    pub noise_sd: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 10_000,
            reps: 2_000,
            seed: 0,
            beta: [0.0; 4],
            noise_sd: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::Invalid(format!("n = {} must be at least 8", self.n)));
        }
        if self.reps < 2 {
            return Err(Error::Invalid(format!("reps = {} must be at least 2", self.reps)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Invalid(format!("noise_sd = {} must be finite and nonnegative", self.noise_sd)));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Invalid("beta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub design: DesignFunction,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub empirical: f64,
    pub predicted: f64,
    pub rel_error: f64,
    pub rejected_replicates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Solves the normal equations `G beta = b` by Cholesky, rejecting
/// numerically singular Gram matrices.
fn solve_normal(gram: Matrix4<f64>, xty: Vector4<f64>) -> Result<Vector4<f64>> {
    let scale = (0..4).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let Some(chol) = gram.cholesky() else {
        return Err(Error::Singular("design matrix is rank deficient".into()));
    };
    let l = chol.l();
    let min_pivot = (0..4).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * scale) {
        return Err(Error::Singular("design matrix is rank deficient".into()));
    }
    Ok(chol.solve(&xty))
}

fn row(x: f64, z: f64) -> Vector4<f64> {
    Vector4::new(1.0, x, z, x * z)
}

/// OLS fit of `y = b0 + b1 x + b2 z + b3 x z`.
pub fn fit_two_line(xs: &[f64], zs: &[f64], ys: &[f64]) -> Result<[f64; 4]> {
    if xs.len() != zs.len() || xs.len() != ys.len() {
        return Err(Error::Invalid("xs, zs and ys differ in length".into()));
    }
    let mut gram = Matrix4::zeros();
    let mut xty = Vector4::zeros();
    for ((&x, &z), &y) in xs.iter().zip(zs).zip(ys) {
        let v = row(x, z);
        gram += v * v.transpose();
        xty += v * y;
    }
    let b = solve_normal(gram, xty)?;
    Ok([b[0], b[1], b[2], b[3]])
}

/// Asymptotic `n Var(beta_3 hat)` for design `p` under `F`.
pub fn predicted_variance(dist: &Distribution, p: &DesignFunction, noise_sd: f64) -> f64 {
    let m = p.moments(dist);
    let ex2 = dist.second_moment();
    noise_sd * noise_sd * m11(m.ez, m.exz, ex2) / det_m(m.ez, m.exz, m.ex2z, ex2)
}

/// One replicate's `beta_3 hat` and the number of singular redraws it needed.
fn replicate(dist: &Distribution, p: &DesignFunction, cfg: &SimConfig, r: usize) -> Result<(f64, usize)> {
    let beta = Vector4::from(cfg.beta);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream((attempt << 32) | r as u64);
        let mut gram = Matrix4::zeros();
        let mut xty = Vector4::zeros();
        for _ in 0..cfg.n {
            let x = dist.sample(&mut rng);
            let treat: f64 = rng.random();
            let z = if treat < p.eval(x) { 1.0 } else { -1.0 };
            let noise: f64 = rng.sample(StandardNormal);
            let v = row(x, z);
            let y = beta.dot(&v) + cfg.noise_sd * noise;
            gram += v * v.transpose();
            xty += v * y;
        }
        match solve_normal(gram, xty) {
            Ok(b) => return Ok((b[3], attempt as usize)),
            Err(Error::Singular(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Singular(format!(
        "replicate {r} stayed singular after {MAX_ATTEMPTS} draws"
    )))
}

/// Simulated and predicted `n Var(beta_3 hat)`.
pub fn simulate_variance(dist: &Distribution, p: &DesignFunction, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let predicted = predicted_variance(dist, p, cfg.noise_sd);
    let draws: Vec<(f64, usize)> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| replicate(dist, p, cfg, r))
        .collect::<Result<_>>()?;
    let rejected: usize = draws.iter().map(|d| d.1).sum();
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / cfg.reps as f64;
    let ss: f64 = draws.iter().map(|d| (d.0 - mean).powi(2)).sum();
    let empirical = cfg.n as f64 * ss / (cfg.reps - 1) as f64;
    let rel_error = if predicted != 0.0 {
        (empirical - predicted).abs() / predicted.abs()
    } else {
        empirical.abs()
    };
    let warning = (rejected as f64 > 0.01 * cfg.reps as f64)
        .then(|| format!("{rejected} singular replicates were redrawn (more than 1% of {})", cfg.reps));
    Ok(SimReport {
        design: p.clone(),
        n: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        empirical,
        predicted,
        rel_error,
        rejected_replicates: rejected,
        warning,
    })
}
