//! Multi-chain posterior sampling and convergence checks.
//!
//! Chains run independently (in parallel when a thread pool is available),
//! each with a private ChaCha stream selected by `(seed, chain index)`, so
//! results do not depend on scheduling.

pub mod diagnostics;
pub mod sampler;
pub mod target;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nbmodel::ModelParams;
use crate::stats::{quantile_sorted, sorted_copy};
use crate::triangle::ReportingTriangle;

use self::diagnostics::{ess_chains, mpsrf_chains, psrf_chains};
use self::sampler::{run_chain, CoordinateTarget, SamplerSettings};
use self::target::NbPosterior;

const INIT_RETRIES: usize = 100;
const ADAPT_BATCH: usize = 50;

/// Chain initialisation.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Coefficients from `N(0, 1)`, scales from `Exp(1)`.
    FromPriors,
    /// One starting point per chain, or a single one shared by all chains.
    UserSupplied(Vec<ModelParams>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub total_iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: Init,
    pub target_accept: f64,
}

impl ChainConfig {
    /// Laptop-scale defaults: 3 chains, 2·10⁴ burn-in, 5·10⁴ total, thin 10.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_chains: 3,
            burn_in: 20_000,
            total_iterations: 50_000,
            thin: 10,
            seed,
            init: Init::FromPriors,
            target_accept: 0.30,
        }
    }

    /// The long-run settings of the reference synthetic study:
    /// 10⁶ burn-in, 1.1·10⁶ total, thin 100.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            burn_in: 1_000_000,
            total_iterations: 1_100_000,
            thin: 100,
            ..Self::desk(seed)
        }
    }

    /// The long-run settings of the reference empirical study:
    /// 2·10⁶ burn-in, 2.1·10⁶ total, thin 100.
    pub fn paper_empirical(seed: u64) -> Self {
        Self {
            burn_in: 2_000_000,
            total_iterations: 2_100_000,
            thin: 100,
            ..Self::desk(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(seed)),
            "paper-scale" => Ok(Self::paper_scale(seed)),
            "paper-empirical" => Ok(Self::paper_empirical(seed)),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?} (expected desk, paper-scale or paper-empirical)"
            ))),
        }
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.total_iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::invalid("need at least one chain"));
        }
        if self.total_iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "total iterations {} must exceed burn-in {}",
                self.total_iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning interval must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target acceptance rate must lie in (0, 1)"));
        }
        if let Init::UserSupplied(v) = &self.init {
            if v.len() != 1 && v.len() != self.n_chains {
                return Err(Error::invalid(format!(
                    "{} initial points supplied for {} chains",
                    v.len(),
                    self.n_chains
                )));
            }
        }
        Ok(())
    }
}

/// Retained posterior draws with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    /// `draws[chain][i]`.
    pub draws: Vec<Vec<ModelParams>>,
    /// Iteration number of each retained draw (same for every chain).
    pub iterations: Vec<usize>,
    /// `accept_rates[chain][coordinate]`, after burn-in.
    pub accept_rates: Vec<[f64; 12]>,
    /// Proposal scales per chain recorded after each adaptation batch.
    pub step_history: Vec<Vec<[f64; 12]>>,
    pub config: ChainConfig,
}

impl PosteriorSamples {
    /// Wraps externally produced draws (e.g. read back from CSV).
    pub fn from_draws(draws: Vec<Vec<ModelParams>>, config: ChainConfig) -> Result<Self> {
        if draws.is_empty() || draws.iter().all(|c| c.is_empty()) {
            return Err(Error::invalid("posterior has no draws"));
        }
        let n = draws[0].len();
        Ok(Self {
            accept_rates: vec![[f64::NAN; 12]; draws.len()],
            step_history: vec![Vec::new(); draws.len()],
            iterations: (1..=n).map(|i| config.burn_in + i * config.thin).collect(),
            draws,
            config,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn total_draws(&self) -> usize {
        self.draws.iter().map(Vec::len).sum()
    }

    /// All draws, chain by chain.
    pub fn pooled(&self) -> impl Iterator<Item = &ModelParams> {
        self.draws.iter().flatten()
    }

    /// Parameter `index` (in [`ModelParams::NAMES`] order) per chain.
    pub fn parameter_chains(&self, index: usize) -> Vec<Vec<f64>> {
        self.draws
            .iter()
            .map(|c| c.iter().map(|p| p.to_array()[index]).collect())
            .collect()
    }
}

fn initial_point(cfg: &ChainConfig, chain: usize, rng: &mut ChaCha8Rng) -> Option<ModelParams> {
    match &cfg.init {
        Init::UserSupplied(v) => Some(if v.len() == 1 { v[0] } else { v[chain] }),
        Init::FromPriors => {
            let mut a = [0.0; 12];
            for x in &mut a[..6] {
                *x = rng.sample(StandardNormal);
            }
            for s in &mut a[6..] {
                *s = rng.sample::<f64, _>(Exp1).max(1e-12);
            }
            let _ = chain;
            Some(ModelParams::from_array(&a))
        }
    }
}

fn initial_steps(tri: &ReportingTriangle) -> [f64; 12] {
    let t_scale = (tri.rows() as f64).max(1.0);
    let base = 0.1;
    [
        base,
        base / t_scale,
        base,
        base,
        base / t_scale,
        base,
        0.5,
        0.5,
        0.5,
        0.5,
        0.5,
        0.5,
    ]
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Samples the posterior of the model given `tri`.
pub fn run_chains(tri: &ReportingTriangle, cfg: &ChainConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    if tri.observed_cell_count() == 0 {
        return Err(Error::invalid("triangle has no observed cells"));
    }
    let base = NbPosterior::new(tri);
    let steps = initial_steps(tri);
    let settings = SamplerSettings {
        burn_in: cfg.burn_in,
        total_iterations: cfg.total_iterations,
        thin: cfg.thin,
        target_accept: cfg.target_accept,
        batch: ADAPT_BATCH,
    };

    let runs: Vec<Result<_>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chain_rng(cfg.seed, chain);
            let mut target = base.clone();
            let mut start = None;
            for _ in 0..INIT_RETRIES {
                let Some(p) = initial_point(cfg, chain, &mut rng) else {
                    break;
                };
                let theta = base.to_unconstrained(&p);
                if target.set_state(&theta).is_finite() {
                    start = Some(theta);
                    break;
                }
                if matches!(cfg.init, Init::UserSupplied(_)) {
                    break;
                }
            }
            let start = start.ok_or_else(|| {
                Error::numerical(format!("chain {chain}: log posterior not finite at any initial point"))
            })?;
            log::debug!("chain {chain}: starting at {start:?}");
            Ok(run_chain(&mut target, &start, &steps, &settings, &mut rng))
        })
        .collect();

    let mut draws = Vec::with_capacity(cfg.n_chains);
    let mut accept_rates = Vec::with_capacity(cfg.n_chains);
    let mut step_history = Vec::with_capacity(cfg.n_chains);
    let mut iterations = Vec::new();
    for run in runs {
        let run = run?;
        draws.push(run.draws.iter().map(|z| base.to_params(z)).collect());
        accept_rates.push(to12(&run.accept_rates));
        step_history.push(run.step_history.iter().map(|s| to12(s)).collect());
        iterations = run.iterations;
    }
    Ok(PosteriorSamples {
        draws,
        iterations,
        accept_rates,
        step_history,
        config: cfg.clone(),
    })
}

fn to12(v: &[f64]) -> [f64; 12] {
    let mut a = [0.0; 12];
    a.copy_from_slice(v);
    a
}

/// Univariate PSRF of parameter `index`.
pub fn psrf(samples: &PosteriorSamples, index: usize) -> Result<f64> {
    let chains = samples.parameter_chains(index);
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    psrf_chains(&refs)
}

/// Multivariate PSRF over all twelve parameters.
pub fn mpsrf(samples: &PosteriorSamples) -> Result<f64> {
    let rows: Vec<Vec<Vec<f64>>> = samples
        .draws
        .iter()
        .map(|c| c.iter().map(|p| p.to_array().to_vec()).collect())
        .collect();
    let refs: Vec<&[Vec<f64>]> = rows.iter().map(Vec::as_slice).collect();
    mpsrf_chains(&refs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub psrf: [f64; 12],
    pub mpsrf: f64,
    pub ess: [f64; 12],
}

impl ConvergenceReport {
    pub fn max_psrf(&self) -> f64 {
        self.psrf.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether every PSRF and the multivariate PSRF are below `threshold`.
    pub fn converged(&self, threshold: f64) -> bool {
        self.max_psrf() < threshold && self.mpsrf < threshold
    }
}

pub fn convergence(samples: &PosteriorSamples) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport {
        psrf: [0.0; 12],
        mpsrf: mpsrf(samples)?,
        ess: [0.0; 12],
    };
    for j in 0..ModelParams::DIM {
        let chains = samples.parameter_chains(j);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        report.psrf[j] = psrf_chains(&refs)?;
        report.ess[j] = ess_chains(&refs);
    }
    Ok(report)
}

/// Posterior summary of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

impl ParamSummary {
    pub fn of(values: &[f64]) -> Self {
        let sorted = sorted_copy(values);
        let mean = crate::stats::mean(values);
        Self {
            mean,
            sd: crate::stats::variance(values).sqrt(),
            q025: quantile_sorted(&sorted, 0.025),
            q50: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
        }
    }

    pub fn covers(&self, x: f64) -> bool {
        self.q025 <= x && x <= self.q975
    }
}

/// Pooled summaries for all twelve parameters.
pub fn summarize(samples: &PosteriorSamples) -> Result<[ParamSummary; 12]> {
    if samples.total_draws() == 0 {
        return Err(Error::invalid("posterior has no draws"));
    }
    let mut out = [ParamSummary::of(&[0.0]); 12];
    for (j, slot) in out.iter_mut().enumerate() {
        let pooled: Vec<f64> = samples.parameter_chains(j).concat();
        *slot = ParamSummary::of(&pooled);
    }
    Ok(out)
}
