//! Two-stage England–Verrall bootstrap of the chain-ladder.
//!
//! Stage one resamples scaled Pearson residuals of the backfitted
//! incrementals and refits the chain-ladder on each pseudo-triangle. Stage two
//! draws future incrementals from an over-dispersed Poisson, realized as a
//! gamma with mean `m` and variance `φ m`, rounded to the nearest integer.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sorted_copy};

use super::chain_ladder::{development_factors, RunOff};

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub process_error: bool,
    /// When false every replicate reuses the observed residuals, so stage one
    /// reproduces the chain-ladder fit.
    pub resample_residuals: bool,
    /// Redraws allowed per replicate when a pseudo-triangle cannot be fitted.
    pub max_retries: usize,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            process_error: true,
            resample_residuals: true,
            max_retries: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub replicates: usize,
    /// `reserve_draws[i][b]`: reserve of origin `i` in replicate `b`.
    pub reserve_draws: Vec<Vec<f64>>,
    /// Median ultimate per origin.
    pub point: Vec<f64>,
    /// Unscaled Pearson dispersion of the chain-ladder fit.
    pub dispersion: f64,
}

impl BootstrapResult {
    pub fn total_reserve_draws(&self) -> Vec<f64> {
        (0..self.replicates)
            .map(|b| self.reserve_draws.iter().map(|row| row[b]).sum())
            .collect()
    }
}

/// Backfitted cumulative values: the latest diagonal divided back through
/// the development factors.
fn backfit(data: &RunOff, f: &[f64]) -> Vec<Vec<f64>> {
    (0..data.origins())
        .map(|i| {
            let n = data.observed_len(i);
            let mut row = vec![0.0; n];
            row[n - 1] = data.latest(i);
            for k in (0..n - 1).rev() {
                row[k] = row[k + 1] / f[k];
            }
            row
        })
        .collect()
}

fn incrementals(cum: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    cum.iter()
        .map(|&c| {
            let v = c - prev;
            prev = c;
            v
        })
        .collect()
}

struct Fit {
    fitted: Vec<Vec<f64>>,
    // adjusted residual pool, and each cell's own adjusted residual
    pool: Vec<f64>,
    own: Vec<Vec<f64>>,
    phi: f64,
}

fn fit(data: &RunOff) -> Result<Fit> {
    let f = development_factors(data)?;
    let fitted: Vec<Vec<f64>> = backfit(data, &f.0).iter().map(|r| incrementals(r)).collect();
    let n_cells: usize = (0..data.origins()).map(|i| data.observed_len(i)).sum();
    let n_params = data.origins() + data.dev_periods() - 1;
    if n_cells <= n_params {
        return Err(Error::invalid(format!(
            "bootstrap needs more observed cells ({n_cells}) than parameters ({n_params})"
        )));
    }
    let adjust = (n_cells as f64 / (n_cells - n_params) as f64).sqrt();
    let mut pool = Vec::new();
    let mut own = Vec::with_capacity(data.origins());
    let mut chi2 = 0.0;
    for (i, m_row) in fitted.iter().enumerate() {
        let c_row = data.incrementals(i);
        if c_row.iter().any(|&c| c < 0.0) {
            return Err(Error::invalid(format!(
                "origin {} has a negative incremental value",
                i + 1
            )));
        }
        let mut row = Vec::with_capacity(m_row.len());
        for (&c, &m) in c_row.iter().zip(m_row) {
            if m > 0.0 {
                let r = (c - m) / m.sqrt();
                chi2 += r * r;
                row.push(r * adjust);
                pool.push(r * adjust);
            } else {
                row.push(0.0);
            }
        }
        own.push(row);
    }
    if pool.is_empty() {
        return Err(Error::invalid("no cell has a positive fitted mean"));
    }
    Ok(Fit {
        fitted,
        pool,
        own,
        phi: chi2 / (n_cells - n_params) as f64,
    })
}

fn process_draw(mean: f64, phi: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean <= 0.0 || phi <= 0.0 {
        return mean.max(0.0);
    }
    match Gamma::new(mean / phi, phi) {
        Ok(g) => g.sample(rng).round(),
        Err(_) => mean,
    }
}

/// One replicate: per-origin reserves, or `None` if the pseudo-triangle
/// cannot be fitted or projects a negative mean.
fn replicate(data: &RunOff, base: &Fit, cfg: &BootstrapConfig, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let mut cum = Vec::with_capacity(data.origins());
    for (i, m_row) in base.fitted.iter().enumerate() {
        let mut acc = 0.0;
        let mut row = Vec::with_capacity(m_row.len());
        for (k, &m) in m_row.iter().enumerate() {
            let r = if !cfg.resample_residuals {
                base.own[i][k]
            } else if m > 0.0 {
                base.pool[rng.random_range(0..base.pool.len())]
            } else {
                0.0
            };
            acc += m + r * m.max(0.0).sqrt();
            row.push(acc);
        }
        cum.push(row);
    }
    let pseudo = RunOff::from_cumulative(data.dev_periods(), cum).ok()?;
    let f = development_factors(&pseudo).ok()?;
    if f.0.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut reserves = Vec::with_capacity(data.origins());
    for i in 0..data.origins() {
        let mut s = pseudo.latest(i);
        let mut reserve = 0.0;
        for k in pseudo.observed_len(i) - 1..data.dev_periods() - 1 {
            let mean = s * (f.0[k] - 1.0);
            if mean < 0.0 {
                return None;
            }
            s += mean;
            reserve += if cfg.process_error {
                process_draw(mean, base.phi, rng)
            } else {
                mean
            };
        }
        reserves.push(reserve);
    }
    Some(reserves)
}

pub fn bootstrap_chain_ladder(data: &RunOff, cfg: &BootstrapConfig) -> Result<BootstrapResult> {
    if cfg.replicates == 0 {
        return Err(Error::invalid("bootstrap needs at least one replicate"));
    }
    let base = fit(data)?;
    let draws: Vec<Result<Vec<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            for _ in 0..=cfg.max_retries {
                if let Some(r) = replicate(data, &base, cfg, &mut rng) {
                    return Ok(r);
                }
            }
            Err(Error::numerical(format!(
                "bootstrap replicate {b} failed after {} redraws",
                cfg.max_retries
            )))
        })
        .collect();

    let mut reserve_draws = vec![Vec::with_capacity(cfg.replicates); data.origins()];
    for d in draws {
        for (row, v) in reserve_draws.iter_mut().zip(d?) {
            row.push(v);
        }
    }
    let point = reserve_draws
        .iter()
        .enumerate()
        .map(|(i, row)| data.latest(i) + quantile_sorted(&sorted_copy(row), 0.5))
        .collect();
    Ok(BootstrapResult {
        replicates: cfg.replicates,
        reserve_draws,
        point,
        dispersion: base.phi,
    })
}
