//! Reporting-delay triangles.
//!
//! A triangle holds incremental counts `n[t][d]` indexed by origin period
//! `t = 1..=rows` and reporting delay `d = 1..=D` (both one-based, one month
//! per period). With present time `T`, cell `(t, d)` has been observed exactly
//! when `t + d − 1 ≤ T − 1`, i.e. when its reporting month lies strictly
//! before the present month. Rows `1..=T−D` are fully observed; the rows after
//! that form the nowcast window.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} out of range 1..=12")));
        }
        Ok(Self { year, month })
    }

    pub fn of_date(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0 (`year × 12 + month − 1`).
    pub fn index(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_index(index: i64) -> Self {
        Self {
            year: index.div_euclid(12) as i32,
            month: index.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn plus_months(self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    /// `MM/YY`, the label used in reserve tables.
    pub fn short_label(self) -> String {
        format!("{:02}/{:02}", self.month, self.year.rem_euclid(100))
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("expected YYYY-MM, got {s:?}"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Self::new(year, month)
    }
}

/// One reported incident.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidentRecord {
    id: String,
    breach_date: NaiveDate,
    report_date: NaiveDate,
}

impl IncidentRecord {
    pub fn new(id: impl Into<String>, breach_date: NaiveDate, report_date: NaiveDate) -> Result<Self> {
        let id = id.into();
        if report_date < breach_date {
            return Err(Error::Record {
                id,
                reason: format!("report date {report_date} precedes breach date {breach_date}"),
            });
        }
        Ok(Self {
            id,
            breach_date,
            report_date,
        })
    }

    /// Parses ISO-8601 (`YYYY-MM-DD`) dates.
    pub fn parse(id: &str, breach_date: &str, report_date: &str) -> Result<Self> {
        let parse = |field: &str, s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Record {
                id: id.to_string(),
                reason: format!("unparseable {field} {s:?}: {e}"),
            })
        };
        Self::new(
            id,
            parse("breach_date", breach_date)?,
            parse("report_date", report_date)?,
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn breach_date(&self) -> NaiveDate {
        self.breach_date
    }

    pub fn report_date(&self) -> NaiveDate {
        self.report_date
    }

    /// Reporting delay in calendar months, starting at 1 for same-month reports.
    pub fn delay(&self) -> i64 {
        YearMonth::of_date(self.report_date).index() - YearMonth::of_date(self.breach_date).index() + 1
    }
}

/// Incremental counts on a (origin × delay) grid with the staircase mask
/// implied by the present time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportingTriangle {
    origin: YearMonth,
    present: usize,
    max_delay: usize,
    // rows × max_delay; unobserved cells hold 0
    counts: Vec<Vec<u64>>,
}

impl ReportingTriangle {
    /// Builds a triangle from a full grid of counts.
    ///
    /// `counts` has one row per origin period, each of length `max_delay`.
    /// Cells that are unobserved at `present` must be zero.
    pub fn new(origin: YearMonth, present: usize, max_delay: usize, counts: Vec<Vec<u64>>) -> Result<Self> {
        if max_delay == 0 {
            return Err(Error::invalid("maximum delay must be at least 1"));
        }
        if counts.is_empty() {
            return Err(Error::invalid("triangle needs at least one origin period"));
        }
        if present < counts.len() + 1 {
            return Err(Error::invalid(format!(
                "present time {present} leaves rows beyond {} unobservable",
                present.saturating_sub(1)
            )));
        }
        let tri = Self {
            origin,
            present,
            max_delay,
            counts,
        };
        for (i, row) in tri.counts.iter().enumerate() {
            let t = i + 1;
            if row.len() != max_delay {
                return Err(Error::invalid(format!(
                    "row {t} has {} delay columns, expected {max_delay}",
                    row.len()
                )));
            }
            for (j, &n) in row.iter().enumerate() {
                if n != 0 && !tri.is_observed(t, j + 1) {
                    return Err(Error::invalid(format!(
                        "cell (t={t}, d={}) is unobserved at present time {present} but holds {n}",
                        j + 1
                    )));
                }
            }
        }
        Ok(tri)
    }

    /// Treats every cell of `counts` as observed (present = rows + D).
    pub fn fully_observed(origin: YearMonth, max_delay: usize, counts: Vec<Vec<u64>>) -> Result<Self> {
        let present = counts.len() + max_delay;
        Self::new(origin, present, max_delay, counts)
    }

    pub fn origin(&self) -> YearMonth {
        self.origin
    }

    /// Present time `T`.
    pub fn present(&self) -> usize {
        self.present
    }

    /// Maximum delay `D`.
    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// Number of origin periods held (at most `T − 1`).
    pub fn rows(&self) -> usize {
        self.counts.len()
    }

    pub fn origin_month(&self, t: usize) -> YearMonth {
        self.origin.plus_months(t as i64 - 1)
    }

    /// Whether cell `(t, d)` (one-based) has been reported by the present time.
    pub fn is_observed(&self, t: usize, d: usize) -> bool {
        t >= 1 && d >= 1 && t <= self.rows() && d <= self.max_delay && t + d < self.present + 1
    }

    /// Number of observed delay columns in row `t`.
    pub fn observed_len(&self, t: usize) -> usize {
        if t == 0 || t > self.rows() {
            return 0;
        }
        (self.present - t).min(self.max_delay)
    }

    pub fn is_row_complete(&self, t: usize) -> bool {
        self.observed_len(t) == self.max_delay
    }

    /// Count in cell `(t, d)`; zero for unobserved cells.
    pub fn count(&self, t: usize, d: usize) -> u64 {
        self.counts[t - 1][d - 1]
    }

    pub fn row(&self, t: usize) -> &[u64] {
        &self.counts[t - 1]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Observed cells as `(t, d, count)`, row-major.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (1..=self.rows()).flat_map(move |t| (1..=self.observed_len(t)).map(move |d| (t, d, self.count(t, d))))
    }

    pub fn observed_cell_count(&self) -> usize {
        (1..=self.rows()).map(|t| self.observed_len(t)).sum()
    }

    /// Rows with at least one unobserved cell.
    pub fn nowcast_window(&self) -> std::ops::RangeInclusive<usize> {
        let first = self.present.saturating_sub(self.max_delay) + 1;
        first.max(1)..=self.rows()
    }

    pub fn partial_total(&self, t: usize) -> u64 {
        self.row(t)[..self.observed_len(t)].iter().sum()
    }

    pub fn origin_totals(&self) -> Vec<OriginTotal> {
        (1..=self.rows())
            .map(|t| {
                let partial = self.partial_total(t);
                OriginTotal {
                    t,
                    total: self.is_row_complete(t).then_some(partial),
                    partial_observed_total: partial,
                }
            })
            .collect()
    }

    /// Cumulative counts `S[t][k] = Σ_{d ≤ k} n[t][d]` over the observed
    /// prefix of each row. Row `t` has `observed_len(t)` entries.
    pub fn cumulate(&self) -> Vec<Vec<u64>> {
        (1..=self.rows())
            .map(|t| {
                self.row(t)[..self.observed_len(t)]
                    .iter()
                    .scan(0u64, |acc, &n| {
                        *acc += n;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect()
    }

    /// Moves the present time back to `present`, hiding the cells reported
    /// from then on. Rows that would be entirely in the future are dropped.
    /// Hidden counts are kept as ground truth.
    pub fn mask_to_present(&self, present: usize) -> Result<MaskedTriangle> {
        if present > self.present {
            return Err(Error::invalid(format!(
                "cut {present} lies after the present time {}",
                self.present
            )));
        }
        if present < self.max_delay + 1 {
            return Err(Error::invalid(format!(
                "cut {present} < D + 1 = {} leaves no fully observed row",
                self.max_delay + 1
            )));
        }
        let rows = self.rows().min(present - 1);
        let mut counts = Vec::with_capacity(rows);
        let mut hidden = Vec::with_capacity(rows);
        for t in 1..=rows {
            let mut row = vec![0; self.max_delay];
            let mut hidden_row = vec![None; self.max_delay];
            for d in 1..=self.max_delay {
                let still_observed = t + d < present + 1;
                if still_observed {
                    row[d - 1] = self.count(t, d);
                } else if self.is_observed(t, d) {
                    hidden_row[d - 1] = Some(self.count(t, d));
                }
            }
            counts.push(row);
            hidden.push(hidden_row);
        }
        let triangle = ReportingTriangle {
            origin: self.origin,
            present,
            max_delay: self.max_delay,
            counts,
        };
        Ok(MaskedTriangle { triangle, hidden })
    }
}

/// Per-row totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OriginTotal {
    pub t: usize,
    /// `n_t`, known only once the row is complete.
    pub total: Option<u64>,
    pub partial_observed_total: u64,
}

/// A triangle cut back to an earlier present time, with the counts it hides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedTriangle {
    pub triangle: ReportingTriangle,
    // hidden[t-1][d-1]: count of a cell hidden by the cut, when known
    hidden: Vec<Vec<Option<u64>>>,
}

impl MaskedTriangle {
    /// A masked triangle with no held-out truth.
    pub fn without_truth(triangle: ReportingTriangle) -> Self {
        let hidden = vec![vec![None; triangle.max_delay()]; triangle.rows()];
        Self { triangle, hidden }
    }

    pub fn hidden(&self, t: usize, d: usize) -> Option<u64> {
        self.hidden[t - 1][d - 1]
    }

    /// Full-delay total of row `t` when every cell is observed or held out.
    pub fn realized_total(&self, t: usize) -> Option<u64> {
        let tri = &self.triangle;
        let mut total = tri.partial_total(t);
        for d in tri.observed_len(t) + 1..=tri.max_delay() {
            total += self.hidden(t, d)?;
        }
        Some(total)
    }
}

/// Bins incident records into a triangle.
///
/// Records sharing an id are counted once (first occurrence wins). Records
/// with delay above `max_delay`, origin outside `1..T−1`, or reported at or
/// after the present month are discarded.
pub fn ingest_incidents(
    records: &[IncidentRecord],
    origin: YearMonth,
    present: usize,
    max_delay: usize,
) -> Result<ReportingTriangle> {
    if max_delay == 0 || present < max_delay || present < 2 {
        return Err(Error::invalid(format!(
            "need T ≥ D ≥ 1 and T ≥ 2, got T = {present}, D = {max_delay}"
        )));
    }
    if records.is_empty() {
        return Err(Error::invalid("no incident records"));
    }
    let rows = present - 1;
    let mut counts = vec![vec![0u64; max_delay]; rows];
    let mut seen = HashSet::new();
    let mut kept = 0usize;
    for rec in records {
        if !seen.insert(rec.id.as_str()) {
            continue;
        }
        let t = YearMonth::of_date(rec.breach_date).index() - origin.index() + 1;
        let d = rec.delay();
        if t < 1 || t > rows as i64 || d > max_delay as i64 || t + d > present as i64 {
            continue;
        }
        counts[t as usize - 1][d as usize - 1] += 1;
        kept += 1;
    }
    log::debug!(
        "ingested {kept} of {} records ({} unique ids)",
        records.len(),
        seen.len()
    );
    ReportingTriangle::new(origin, present, max_delay, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn rec(id: &str, b: &str, r: &str) -> IncidentRecord {
        IncidentRecord::parse(id, b, r).unwrap()
    }

    #[test]
    fn same_month_report_is_delay_one() {
        let tri = ingest_incidents(&[rec("a", "2018-01-15", "2018-01-20")], ym("2018-01"), 13, 12).unwrap();
        assert_eq!(tri.count(1, 1), 1);
    }

    #[test]
    fn month_boundary_counts_calendar_months() {
        let r = rec("a", "2018-01-31", "2018-03-01");
        assert_eq!(r.delay(), 3);
        let tri = ingest_incidents(&[r], ym("2018-01"), 13, 12).unwrap();
        assert_eq!(tri.count(1, 3), 1);
    }

    #[test]
    fn delay_beyond_window_is_excluded() {
        let recs = [
            rec("a", "2018-01-10", "2019-02-03"),
            rec("b", "2018-01-10", "2018-02-03"),
        ];
        let tri = ingest_incidents(&recs, ym("2018-01"), 25, 12).unwrap();
        assert_eq!(recs[0].delay(), 14);
        assert_eq!(tri.counts().iter().flatten().sum::<u64>(), 1);
        assert_eq!(tri.count(1, 2), 1);
    }

    #[test]
    fn duplicates_and_out_of_window_dropped() {
        let recs = [
            rec("a", "2018-02-10", "2018-02-11"),
            rec("a", "2018-02-10", "2018-02-11"),
            rec("early", "2017-12-10", "2018-01-11"),
            // reported in the present month: not yet observable
            rec("late", "2018-03-01", "2018-04-02"),
        ];
        let tri = ingest_incidents(&recs, ym("2018-01"), 4, 2).unwrap();
        assert_eq!(tri.count(2, 1), 1);
        assert_eq!(tri.counts().iter().flatten().sum::<u64>(), 1);
    }

    #[test]
    fn bad_records_are_rejected_with_id() {
        match IncidentRecord::parse("x9", "2018-02-30", "2018-03-01") {
            Err(Error::Record { id, .. }) => assert_eq!(id, "x9"),
            other => panic!("{other:?}"),
        }
        match IncidentRecord::parse("x7", "2018-03-02", "2018-03-01") {
            Err(Error::Record { id, .. }) => assert_eq!(id, "x7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ingest_preconditions() {
        assert!(ingest_incidents(&[], ym("2018-01"), 13, 12).is_err());
        let r = [rec("a", "2018-01-01", "2018-01-01")];
        assert!(ingest_incidents(&r, ym("2018-01"), 11, 12).is_err());
    }

    fn full(rows: usize, d: usize) -> ReportingTriangle {
        let counts = (0..rows)
            .map(|t| (0..d).map(|j| (t * d + j) as u64 % 7).collect())
            .collect();
        ReportingTriangle::fully_observed(ym("2018-01"), d, counts).unwrap()
    }

    #[test]
    fn mask_back_to_sixty_one_leaves_eleven_partial_rows() {
        // 72 rows, present 73, cut back to 61
        let tri = full(72, 12).mask_to_present(73).unwrap().triangle;
        let cut = tri.mask_to_present(61).unwrap().triangle;
        assert_eq!(cut.rows(), 60);
        let partial: Vec<usize> = (1..=60).filter(|&t| !cut.is_row_complete(t)).collect();
        assert_eq!(partial, (50..=60).collect::<Vec<_>>());
        assert_eq!(cut.nowcast_window(), 50..=60);
        assert_eq!(cut.observed_len(60), 1);
    }

    #[test]
    fn mask_identity_at_present() {
        let tri = full(30, 12).mask_to_present(31).unwrap().triangle;
        let same = tri.mask_to_present(31).unwrap();
        assert_eq!(same.triangle, tri);
        for t in 1..=tri.rows() {
            for d in 1..=12 {
                assert_eq!(same.hidden(t, d), None);
            }
        }
    }

    #[test]
    fn mask_enumeration_small_cut() {
        let tri = full(23, 12).mask_to_present(24).unwrap().triangle;
        let cut = tri.mask_to_present(13).unwrap().triangle;
        let complete: Vec<usize> = (1..=cut.rows()).filter(|&t| cut.is_row_complete(t)).collect();
        assert_eq!(complete, vec![1]);
        // brute-force the rule t + d − 1 ≤ T − 1
        for t in 1..=cut.rows() {
            for d in 1..=12 {
                assert_eq!(cut.is_observed(t, d), t + d - 1 <= 12);
            }
        }
        assert!(tri.mask_to_present(12).is_err());
        assert!(tri.mask_to_present(25).is_err());
    }

    #[test]
    fn masked_truth_recovers_row_totals() {
        let tri = full(20, 4);
        let m = tri.mask_to_present(15).unwrap();
        for t in 1..=m.triangle.rows() {
            assert_eq!(m.realized_total(t), Some(tri.row(t).iter().sum()));
        }
        // without the full-grid source, recent rows have no truth
        let m2 = m.triangle.mask_to_present(14).unwrap();
        assert_eq!(m2.hidden(13, 2), Some(m.triangle.count(13, 2)));
        assert_eq!(m2.hidden(13, 3), None);
        assert_eq!(m2.realized_total(13), None);
        assert!(m2.realized_total(10).is_some());
    }

    #[test]
    fn cumulate_prefix_sums() {
        let tri = ReportingTriangle::fully_observed(ym("2020-01"), 3, vec![vec![5, 3, 2], vec![0, 0, 0]]).unwrap();
        assert_eq!(tri.cumulate(), vec![vec![5, 8, 10], vec![0, 0, 0]]);
    }

    #[test]
    fn unobserved_cells_must_be_zero() {
        let err = ReportingTriangle::new(ym("2020-01"), 3, 2, vec![vec![1, 1], vec![1, 1]]);
        assert!(err.is_err());
        assert!(ReportingTriangle::new(ym("2020-01"), 3, 2, vec![vec![1, 1], vec![1, 0]]).is_ok());
    }

    #[test]
    fn origin_totals_track_completeness() {
        let tri = ReportingTriangle::new(ym("2020-01"), 3, 2, vec![vec![4, 1], vec![2, 0]]).unwrap();
        let tot = tri.origin_totals();
        assert_eq!(tot[0].total, Some(5));
        assert_eq!(tot[1].total, None);
        assert_eq!(tot[1].partial_observed_total, 2);
    }

    #[test]
    fn year_month_arithmetic() {
        assert_eq!(ym("2018-01").plus_months(13), ym("2019-02"));
        assert_eq!(ym("2018-01").plus_months(-1), ym("2017-12"));
        assert_eq!(ym("2022-02").short_label(), "02/22");
        assert_eq!(ym("2022-02").to_string(), "2022-02");
        assert!("2022-13".parse::<YearMonth>().is_err());
    }
}
