//! Monetary reserve tables from incident nowcasts.

use crate::error::{Error, Result};
use crate::nowcast::NowcastRow;
use crate::triangle::YearMonth;

/// Average cost per incident, in millions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    cost_per_incident: f64,
}

impl CostModel {
    pub const DEFAULT_COST: f64 = 4.35;

    pub fn new(cost_per_incident: f64) -> Result<Self> {
        if !(cost_per_incident >= 0.0 && cost_per_incident.is_finite()) {
            return Err(Error::invalid(format!(
                "cost per incident must be finite and nonnegative, got {cost_per_incident}"
            )));
        }
        Ok(Self { cost_per_incident })
    }

    pub fn cost_per_incident(&self) -> f64 {
        self.cost_per_incident
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            cost_per_incident: Self::DEFAULT_COST,
        }
    }
}

/// The counts a reserve row is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReserveInput {
    pub month: YearMonth,
    pub observed: f64,
    pub point: f64,
    pub realized: Option<f64>,
}

impl From<&NowcastRow> for ReserveInput {
    fn from(r: &NowcastRow) -> Self {
        Self {
            month: r.origin_month,
            observed: r.observed_partial as f64,
            point: r.point,
            realized: r.realized.map(|v| v as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReserveRow {
    pub month: YearMonth,
    pub estimated: f64,
    pub paid: f64,
    pub ibnr: f64,
    pub ultimate: Option<f64>,
    pub ibnr_change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReserveTable {
    pub rows: Vec<ReserveRow>,
    pub total_estimated: f64,
    pub total_paid: f64,
    pub total_ibnr: f64,
    /// Sum of the ultimates, when every row has one.
    pub total_ultimate: Option<f64>,
}

/// `100 (ibnr_t − ibnr_{t−1}) / ibnr_{t−1}`; `None` for the first row and
/// after a zero.
pub fn ibnr_change_rate(ibnr: &[f64]) -> Vec<Option<f64>> {
    (0..ibnr.len())
        .map(|i| {
            if i == 0 || ibnr[i - 1] == 0.0 {
                None
            } else {
                Some(100.0 * (ibnr[i] - ibnr[i - 1]) / ibnr[i - 1])
            }
        })
        .collect()
}

pub fn reserve_table(inputs: &[ReserveInput], cost: CostModel) -> Result<ReserveTable> {
    for w in inputs.windows(2) {
        if w[1].month != w[0].month.plus_months(1) {
            return Err(Error::invalid(format!(
                "reserve months must be contiguous: {} follows {}",
                w[1].month, w[0].month
            )));
        }
    }
    let c = cost.cost_per_incident();
    let mut rows: Vec<ReserveRow> = inputs
        .iter()
        .map(|r| {
            let estimated = r.point * c;
            let paid = r.observed * c;
            ReserveRow {
                month: r.month,
                estimated,
                paid,
                ibnr: estimated - paid,
                ultimate: r.realized.map(|v| v * c),
                ibnr_change_pct: None,
            }
        })
        .collect();
    let rates = ibnr_change_rate(&rows.iter().map(|r| r.ibnr).collect::<Vec<_>>());
    for (row, rate) in rows.iter_mut().zip(rates) {
        row.ibnr_change_pct = rate;
    }
    let total_estimated = rows.iter().map(|r| r.estimated).sum();
    let total_paid = rows.iter().map(|r| r.paid).sum();
    let total_ibnr = rows.iter().map(|r| r.ibnr).sum();
    let total_ultimate = rows.iter().map(|r| r.ultimate).sum::<Option<f64>>();
    Ok(ReserveTable {
        rows,
        total_estimated,
        total_paid,
        total_ibnr,
        total_ultimate,
    })
}

/// Fixed-point currency with 3 decimals.
pub fn format_currency(v: f64) -> String {
    // round half away from zero on the decimal value, then drop "-0"
    let v = (v * 1000.0).round() / 1000.0 + 0.0;
    format!("{v:.3}")
}

/// Change rate with 2 decimals, `--` when undefined.
pub fn format_rate(v: Option<f64>) -> String {
    v.map_or_else(
        || "--".to_string(),
        |v| format!("{:.2}", (v * 100.0).round() / 100.0 + 0.0),
    )
}
