//! Posterior-predictive completion of partially observed rows.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::nbmodel::{CellParams, ModelParams};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::synth::nb_sample;
use crate::triangle::{MaskedTriangle, ReportingTriangle, YearMonth};

/// One draw of cell `(t, d)` from its predictive distribution under `draw`.
pub fn predictive_cell<R: Rng + ?Sized>(
    draw: &ModelParams,
    t: usize,
    d: usize,
    max_delay: usize,
    rng: &mut R,
) -> Result<u64> {
    let p = draw.link_p(t, d, max_delay);
    if p >= 1.0 {
        return Ok(0);
    }
    if !(p > 0.0) {
        return Err(Error::numerical(format!(
            "predictive mean is unbounded at (t={t}, d={d}): p underflows to 0"
        )));
    }
    let r = draw.link_r(t, d, max_delay)?;
    Ok(nb_sample(CellParams::new(p, r)?, rng))
}

/// Simulated unobserved cells for a set of rows, one simulation per
/// posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    /// Rows covered, ascending.
    pub rows: Vec<usize>,
    /// Unobserved cells `(t, d)` in row-major order.
    pub cells: Vec<(usize, usize)>,
    /// `simulated[s][c]`: count of `cells[c]` under posterior draw `s`.
    pub simulated: Vec<Vec<u64>>,
    /// `totals[j][s]`: observed partial plus simulated cells of `rows[j]`.
    pub totals: Vec<Vec<u64>>,
}

/// Simulates every unobserved cell of `rows` once per pooled posterior draw.
///
/// Draw `s` uses the ChaCha8 stream `s` of `seed`, so results do not depend
/// on scheduling.
pub fn predictive_draws(
    draws: &[ModelParams],
    tri: &ReportingTriangle,
    rows: &[usize],
    seed: u64,
) -> Result<PredictiveDraws> {
    if draws.is_empty() {
        return Err(Error::invalid("posterior has no draws"));
    }
    if let Some(&t) = rows.iter().find(|&&t| t == 0 || t > tri.rows()) {
        return Err(Error::invalid(format!(
            "row {t} outside the triangle's rows 1..={}",
            tri.rows()
        )));
    }
    let mut rows = rows.to_vec();
    rows.sort_unstable();
    rows.dedup();
    let d_max = tri.max_delay();
    let cells: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&t| (tri.observed_len(t) + 1..=d_max).map(move |d| (t, d)))
        .collect();

    let simulated: Vec<Vec<u64>> = draws
        .par_iter()
        .enumerate()
        .map(|(s, draw)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            cells
                .iter()
                .map(|&(t, d)| predictive_cell(draw, t, d, d_max, &mut rng))
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<_>>()?;

    let mut totals = Vec::with_capacity(rows.len());
    for &t in &rows {
        let partial = tri.partial_total(t);
        let idx: Vec<usize> = (0..cells.len()).filter(|&c| cells[c].0 == t).collect();
        totals.push(
            simulated
                .iter()
                .map(|sim| idx.iter().fold(partial, |acc, &c| acc.saturating_add(sim[c])))
                .collect(),
        );
    }
    Ok(PredictiveDraws {
        rows,
        cells,
        simulated,
        totals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NowcastRow {
    pub t: usize,
    pub origin_month: YearMonth,
    pub observed_partial: u64,
    /// Median predictive total.
    pub point: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub realized: Option<u64>,
}

impl NowcastRow {
    /// Predicted count still to be reported.
    pub fn ibnr(&self) -> f64 {
        self.point - self.observed_partial as f64
    }

    pub fn covers_realized(&self) -> Option<bool> {
        self.realized.map(|r| self.lo95 <= r as f64 && r as f64 <= self.hi95)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NowcastResult {
    pub rows: Vec<NowcastRow>,
    pub draws: usize,
}

impl NowcastResult {
    /// Fills `realized` from the held-out truth where it is complete.
    pub fn attach_realized(&mut self, masked: &MaskedTriangle) {
        for row in &mut self.rows {
            row.realized = masked.realized_total(row.t);
        }
    }
}

/// Nowcasts the given rows: the median and 2.5/97.5 % quantiles of the
/// predictive row totals.
pub fn nowcast_rows(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    rows: &[usize],
    seed: u64,
) -> Result<NowcastResult> {
    let pooled: Vec<ModelParams> = samples.pooled().copied().collect();
    let pred = predictive_draws(&pooled, tri, rows, seed)?;
    let rows = pred
        .rows
        .iter()
        .zip(&pred.totals)
        .map(|(&t, totals)| {
            let sorted = sorted_copy(&totals.iter().map(|&v| v as f64).collect::<Vec<_>>());
            NowcastRow {
                t,
                origin_month: tri.origin_month(t),
                observed_partial: tri.partial_total(t),
                point: quantile_sorted(&sorted, 0.5),
                lo95: quantile_sorted(&sorted, 0.025),
                hi95: quantile_sorted(&sorted, 0.975),
                realized: tri.is_row_complete(t).then(|| tri.partial_total(t)),
            }
        })
        .collect();
    Ok(NowcastResult {
        rows,
        draws: pooled.len(),
    })
}

/// Nowcasts every row of the nowcast window.
pub fn nowcast_totals(samples: &PosteriorSamples, tri: &ReportingTriangle, seed: u64) -> Result<NowcastResult> {
    let window: Vec<usize> = tri.nowcast_window().collect();
    nowcast_rows(samples, tri, &window, seed)
}

/// `(point, realized)` pairs of the rows whose realized total is known.
pub fn scatter_pairs(result: &NowcastResult) -> Vec<(f64, f64)> {
    let mut pairs = Vec::with_capacity(result.rows.len());
    for row in &result.rows {
        match row.realized {
            Some(r) => pairs.push((row.point, r as f64)),
            None => log::warn!("row {} has no realized total; excluded", row.t),
        }
    }
    pairs
}

/// A static SVG line chart of observed, nowcast, bounds and realized
/// totals per origin month.
pub fn svg_chart(result: &NowcastResult) -> String {
    const W: f64 = 720.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let rows = &result.rows;
    let mut out =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n");
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if rows.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let y_max = rows
        .iter()
        .map(|r| r.hi95.max(r.realized.unwrap_or(0) as f64))
        .fold(1.0f64, f64::max)
        * 1.05;
    let n = rows.len();
    let x = |j: usize| {
        if n == 1 {
            W / 2.0
        } else {
            PAD + j as f64 * (W - 2.0 * PAD) / (n - 1) as f64
        }
    };
    let y = |v: f64| H - PAD - v / y_max * (H - 2.0 * PAD);

    out.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - PAD,
        W - PAD
    ));
    out.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - PAD
    ));
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{:.0}</text>\n",
            PAD - 4.0,
            y(v) + 3.0,
            v
        ));
    }
    for (j, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            x(j),
            H - PAD + 14.0,
            r.origin_month.short_label()
        ));
    }

    let series: [(&str, &str, &str, Vec<Option<f64>>); 5] = [
        (
            "observed",
            "#555555",
            "",
            rows.iter().map(|r| Some(r.observed_partial as f64)).collect(),
        ),
        ("nowcast", "#1f77b4", "", rows.iter().map(|r| Some(r.point)).collect()),
        (
            "95 lower bound",
            "#1f77b4",
            "5,4",
            rows.iter().map(|r| Some(r.lo95)).collect(),
        ),
        (
            "95 upper bound",
            "#1f77b4",
            "5,4",
            rows.iter().map(|r| Some(r.hi95)).collect(),
        ),
        (
            "realized",
            "#d62728",
            "",
            rows.iter().map(|r| r.realized.map(|v| v as f64)).collect(),
        ),
    ];
    for (k, (name, color, dash, values)) in series.iter().enumerate() {
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter_map(|(j, v)| v.map(|v| format!("{:.1},{:.1}", x(j), y(v))))
            .collect();
        if !points.is_empty() {
            let dash = if dash.is_empty() {
                String::new()
            } else {
                format!(" stroke-dasharray=\"{dash}\"")
            };
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
        let ly = PAD + 14.0 * k as f64;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{ly}\" font-size=\"11\" fill=\"{color}\">{name}</text>\n",
            W - PAD - 90.0
        ));
    }
    out.push_str("</svg>\n");
    out
}
