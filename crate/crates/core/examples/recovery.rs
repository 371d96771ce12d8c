//! Fits the reference synthetic triangle and prints a parameter table.
//!
//! cargo run --release -p ibnr-core --example recovery -- [seed]

use std::time::Instant;

use ibnr_core::mcmc::{convergence, run_chains, summarize};
use ibnr_core::synth::{generate, SynthConfig};
use ibnr_core::{ChainConfig, ModelParams};

fn main() -> ibnr_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let data = generate(&SynthConfig::with_seed(seed))?;
    let tri = data.at_present(73)?.triangle;
    let start = Instant::now();
    let samples = run_chains(&tri, &ChainConfig::desk(seed))?;
    let elapsed = start.elapsed();
    let summary = summarize(&samples)?;
    let report = convergence(&samples)?;
    let truth = data.config.truth.to_array();
    println!(
        "{:<9} {:>9} {:>21} {:>8} {:>7} {:>8}",
        "param", "mean", "95% interval", "true", "psrf", "ess"
    );
    for (j, name) in ModelParams::NAMES.iter().enumerate() {
        let s = summary[j];
        let t = truth.get(j).map(|v| format!("{v}")).unwrap_or_else(|| "--".into());
        println!(
            "{name:<9} {:>9.4} ({:>9.4}, {:>9.4}) {t:>8} {:>7.4} {:>8.0}",
            s.mean, s.q025, s.q975, report.psrf[j], report.ess[j]
        );
    }
    println!(
        "mpsrf {:.4}; {:.1?} for {} chains",
        report.mpsrf,
        elapsed,
        samples.n_chains()
    );
    println!(
        "acceptance {:?}",
        samples.accept_rates[0].map(|a| (a * 100.0).round() / 100.0)
    );
    Ok(())
}
