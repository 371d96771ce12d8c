//! Backtest scoring and model comparison.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{bootstrap_chain_ladder, chain_ladder, mack, odp_glm, BootstrapConfig, MackConfig, RunOff};
use crate::error::{Error, Result};
use crate::mcmc::{run_chains, ChainConfig};
use crate::nowcast::nowcast_totals;
use crate::triangle::MaskedTriangle;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions, {} observations",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no values to score"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sae: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sae / pred.len() as f64)
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if x.len() < 2 {
        return Err(Error::invalid("correlation needs at least 2 pairs"));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation undefined: zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// The compared models: the Bayesian NB model and four reserving baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelTag {
    /// Bayesian negative-binomial model.
    M0,
    /// Chain-ladder.
    M1,
    /// Mack chain-ladder.
    M2,
    /// Bootstrap chain-ladder.
    M3,
    /// Over-dispersed Poisson GLM.
    M4,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [ModelTag::M0, ModelTag::M1, ModelTag::M2, ModelTag::M3, ModelTag::M4];

    pub fn description(self) -> &'static str {
        match self {
            ModelTag::M0 => "Bayesian negative binomial",
            ModelTag::M1 => "chain-ladder",
            ModelTag::M2 => "Mack chain-ladder",
            ModelTag::M3 => "bootstrap chain-ladder",
            ModelTag::M4 => "over-dispersed Poisson GLM",
        }
    }

    /// Parses a comma-separated list such as `m0,m1,m4`.
    pub fn parse_list(s: &str) -> Result<Vec<ModelTag>> {
        let mut tags: Vec<ModelTag> = s.split(',').map(|t| t.trim().parse()).collect::<Result<_>>()?;
        tags.sort_unstable();
        tags.dedup();
        Ok(tags)
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", *self as u8)
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m0" => Ok(ModelTag::M0),
            "m1" => Ok(ModelTag::M1),
            "m2" => Ok(ModelTag::M2),
            "m3" => Ok(ModelTag::M3),
            "m4" => Ok(ModelTag::M4),
            _ => Err(Error::invalid(format!("unknown model tag {s:?} (expected m0..m4)"))),
        }
    }
}

/// Point predictions of one model: `(t, predicted total)` per origin row.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPredictions {
    pub model: ModelTag,
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelScore {
    pub model: ModelTag,
    pub rmse: f64,
    pub mae: f64,
}

/// Scores each model against `realized` (`(t, total)` pairs). Every model
/// must predict exactly the realized rows, in the same order.
pub fn comparison_table(models: &[ModelPredictions], realized: &[(usize, f64)]) -> Result<Vec<ModelScore>> {
    let truth: Vec<f64> = realized.iter().map(|r| r.1).collect();
    models
        .iter()
        .map(|m| {
            let aligned = m.points.len() == realized.len() && m.points.iter().zip(realized).all(|(a, b)| a.0 == b.0);
            if !aligned {
                return Err(Error::invalid(format!(
                    "{} predictions are not aligned with the realized rows",
                    m.model
                )));
            }
            let pred: Vec<f64> = m.points.iter().map(|p| p.1).collect();
            Ok(ModelScore {
                model: m.model,
                rmse: rmse(&pred, &truth)?,
                mae: mae(&pred, &truth)?,
            })
        })
        .collect()
}

/// Aligned plain-text rendering: one column per model, rows RMSE and MAE.
pub fn format_table(scores: &[ModelScore]) -> String {
    let mut out = format!("{:<6}", "");
    for s in scores {
        out.push_str(&format!("{:>10}", s.model.to_string()));
    }
    out.push('\n');
    for (label, get) in [
        ("RMSE", (|s: &ModelScore| s.rmse) as fn(&ModelScore) -> f64),
        ("MAE", |s| s.mae),
    ] {
        out.push_str(&format!("{label:<6}"));
        for s in scores {
            out.push_str(&format!("{:>10.4}", get(s)));
        }
        out.push('\n');
    }
    out
}

/// Settings for [`backtest`].
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub chains: ChainConfig,
    pub seed: u64,
    pub bootstrap_replicates: usize,
}

impl BacktestConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            chains: ChainConfig::desk(seed),
            seed,
            bootstrap_replicates: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backtest {
    pub realized: Vec<(usize, f64)>,
    pub predictions: Vec<ModelPredictions>,
    pub scores: Vec<ModelScore>,
}

/// Predicted totals of `model` for `rows` of the masked triangle.
pub fn predict(
    model: ModelTag,
    masked: &MaskedTriangle,
    rows: &[usize],
    cfg: &BacktestConfig,
) -> Result<Vec<(usize, f64)>> {
    let tri = &masked.triangle;
    let ultimates: Vec<f64> = match model {
        ModelTag::M0 => {
            let samples = run_chains(tri, &cfg.chains)?;
            let nc = nowcast_totals(&samples, tri, cfg.seed)?;
            let by_row = |t: usize| nc.rows.iter().find(|r| r.t == t).map(|r| r.point);
            return rows
                .iter()
                .map(|&t| {
                    by_row(t)
                        .or_else(|| tri.is_row_complete(t).then(|| tri.partial_total(t) as f64))
                        .map(|v| (t, v))
                        .ok_or_else(|| Error::invalid(format!("row {t} was not nowcast")))
                })
                .collect();
        }
        ModelTag::M1 => {
            let data = RunOff::from_triangle(tri)?;
            let cl = chain_ladder(&data)?;
            (0..data.origins()).map(|i| cl.ultimate(i)).collect()
        }
        ModelTag::M2 => {
            let data = RunOff::from_triangle(tri)?;
            let m = mack(&data, &MackConfig::default())?;
            (0..data.origins()).map(|i| m.ultimate(i)).collect()
        }
        ModelTag::M3 => {
            let data = RunOff::from_triangle(tri)?;
            bootstrap_chain_ladder(&data, &BootstrapConfig::new(cfg.bootstrap_replicates, cfg.seed))?.point
        }
        ModelTag::M4 => {
            let data = RunOff::from_triangle(tri)?;
            let g = odp_glm(&data)?;
            (0..data.origins()).map(|i| g.ultimate(i)).collect()
        }
    };
    Ok(rows.iter().map(|&t| (t, ultimates[t - 1])).collect())
}

/// Nowcasts the window rows of `masked` with each model and scores them
/// against the held-out totals. Rows without a complete held-out total are
/// skipped.
pub fn backtest(masked: &MaskedTriangle, models: &[ModelTag], cfg: &BacktestConfig) -> Result<Backtest> {
    let tri = &masked.triangle;
    let mut realized = Vec::new();
    for t in tri.nowcast_window() {
        match masked.realized_total(t) {
            Some(v) => realized.push((t, v as f64)),
            None => log::warn!("row {t} has no complete held-out total; skipped"),
        }
    }
    if realized.is_empty() {
        return Err(Error::invalid("no nowcast row has a complete held-out total"));
    }
    let rows: Vec<usize> = realized.iter().map(|r| r.0).collect();
    let predictions = models
        .iter()
        .map(|&m| {
            log::info!("backtest: fitting {m} ({})", m.description());
            Ok(ModelPredictions {
                model: m,
                points: predict(m, masked, &rows, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = comparison_table(&predictions, &realized)?;
    Ok(Backtest {
        realized,
        predictions,
        scores,
    })
}
