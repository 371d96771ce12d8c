//! Shared fixtures for the benchmarks.

use ibnr_core::baselines::RunOff;
use ibnr_core::mcmc::run_chains;
use ibnr_core::synth::{generate, SynthConfig};
use ibnr_core::{ChainConfig, PosteriorSamples, ReportingTriangle};

pub const SEED: u64 = 2024;

/// The reference 72 × 12 synthetic triangle seen at T = 73.
pub fn reference_triangle() -> ReportingTriangle {
    generate(&SynthConfig::with_seed(SEED))
        .and_then(|s| s.at_present(73))
        .expect("reference triangle")
        .triangle
}

pub fn reference_runoff() -> RunOff {
    RunOff::from_triangle(&reference_triangle()).expect("run-off")
}

/// A short three-chain fit of the reference triangle.
pub fn short_posterior(tri: &ReportingTriangle) -> PosteriorSamples {
    let cfg = ChainConfig {
        burn_in: 2_000,
        total_iterations: 3_000,
        thin: 3,
        ..ChainConfig::desk(SEED)
    };
    run_chains(tri, &cfg).expect("short fit")
}
