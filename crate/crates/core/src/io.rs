//! CSV readers and writers.
//!
//! Floats are written with Rust's shortest round-trip representation unless
//! a fixed number of decimals is part of the format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Writer, WriterBuilder};

use crate::error::{Error, Result};
use crate::eval::{Backtest, ModelScore};
use crate::mcmc::{ChainConfig, ConvergenceReport, ParamSummary, PosteriorSamples};
use crate::nbmodel::{Coefficients, ModelParams};
use crate::nowcast::{NowcastResult, NowcastRow};
use crate::reserve::{format_currency, format_rate, ReserveTable};
use crate::triangle::{IncidentRecord, ReportingTriangle, YearMonth};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

fn writer<W: Write>(w: W) -> Writer<W> {
    WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_err(rec: &StringRecord, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line_of(rec),
        message: message.into(),
    }
}

fn records<R: Read>(r: R, expected: &[&str]) -> Result<(StringRecord, Vec<StringRecord>)> {
    let mut rdr = ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if !expected.is_empty() && header.iter().take(expected.len()).ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header starting {}, got {}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok((header, out))
}

fn field<T: std::str::FromStr>(rec: &StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| parse_err(rec, format!("missing field {name}")))?;
    raw.parse()
        .map_err(|_| parse_err(rec, format!("invalid {name} {raw:?}")))
}

fn opt_field<T: std::str::FromStr>(rec: &StringRecord, i: usize, name: &str) -> Result<Option<T>> {
    match rec.get(i) {
        None | Some("") => Ok(None),
        Some(_) => field(rec, i, name).map(Some),
    }
}

// incidents

pub fn read_incidents<R: Read>(r: R) -> Result<Vec<IncidentRecord>> {
    let (_, recs) = records(r, &["id", "breach_date", "report_date"])?;
    recs.iter()
        .map(|rec| {
            if rec.len() != 3 {
                return Err(parse_err(rec, format!("expected 3 fields, got {}", rec.len())));
            }
            IncidentRecord::parse(&rec[0], &rec[1], &rec[2]).map_err(|e| parse_err(rec, e.to_string()))
        })
        .collect()
}

pub fn write_incidents<W: Write>(w: W, records: &[IncidentRecord]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["id", "breach_date", "report_date"])?;
    for r in records {
        wtr.write_record([
            r.id().to_string(),
            r.breach_date().to_string(),
            r.report_date().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

// triangles

pub fn write_triangle<W: Write>(w: W, tri: &ReportingTriangle) -> Result<()> {
    let mut wtr = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((1..=tri.max_delay()).map(|d| format!("d{d}")));
    wtr.write_record(&header)?;
    for t in 1..=tri.rows() {
        let mut rec = vec![t.to_string()];
        rec.extend((1..=tri.max_delay()).map(|d| {
            if tri.is_observed(t, d) {
                tri.count(t, d).to_string()
            } else {
                String::new()
            }
        }));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a triangle CSV. The present time is inferred from the observed
/// pattern; a triangle whose last row is complete is taken as fully
/// observed (present = rows + D).
pub fn read_triangle<R: Read>(r: R, origin: YearMonth) -> Result<ReportingTriangle> {
    let (header, recs) = records(r, &["t"])?;
    let d_max = header.len() - 1;
    if d_max == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "triangle needs at least one delay column".into(),
        });
    }
    for (d, name) in header.iter().skip(1).enumerate() {
        if name != format!("d{}", d + 1) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column d{}, got {name:?}", d + 1),
            });
        }
    }
    if recs.is_empty() {
        return Err(Error::invalid("triangle has no rows"));
    }
    let mut counts = Vec::with_capacity(recs.len());
    let mut lens = Vec::with_capacity(recs.len());
    for (i, rec) in recs.iter().enumerate() {
        if rec.len() != d_max + 1 {
            return Err(parse_err(
                rec,
                format!("expected {} fields, got {}", d_max + 1, rec.len()),
            ));
        }
        let t: usize = field(rec, 0, "t")?;
        if t != i + 1 {
            return Err(parse_err(rec, format!("expected row t = {}, got {t}", i + 1)));
        }
        let mut row = vec![0u64; d_max];
        let mut len = 0;
        for (d, cell) in row.iter_mut().enumerate() {
            match opt_field::<u64>(rec, d + 1, &format!("count d{}", d + 1))? {
                Some(v) if len == d => {
                    *cell = v;
                    len += 1;
                }
                Some(_) => {
                    return Err(parse_err(
                        rec,
                        format!("observed cell d{} follows an empty cell", d + 1),
                    ))
                }
                None => {}
            }
        }
        if len == 0 {
            return Err(parse_err(rec, "row has no observed cells"));
        }
        counts.push(row);
        lens.push(len);
    }
    let rows = counts.len();
    let present = rows + lens[rows - 1];
    for (i, (&len, rec)) in lens.iter().zip(&recs).enumerate() {
        let expected = (present - (i + 1)).min(d_max);
        if len != expected {
            return Err(parse_err(
                rec,
                format!("row has {len} observed cells but the mask implies {expected}"),
            ));
        }
    }
    ReportingTriangle::new(origin, present, d_max, counts)
}

// posterior draws and summaries

const POSTERIOR_HEAD: [&str; 2] = ["chain", "iter"];

pub fn write_posterior<W: Write>(w: W, samples: &PosteriorSamples) -> Result<()> {
    let mut wtr = writer(w);
    let mut header: Vec<&str> = POSTERIOR_HEAD.to_vec();
    header.extend(ModelParams::NAMES);
    wtr.write_record(&header)?;
    for (c, chain) in samples.draws.iter().enumerate() {
        for (p, iter) in chain.iter().zip(&samples.iterations) {
            let mut rec = vec![(c + 1).to_string(), iter.to_string()];
            rec.extend(p.to_array().iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads posterior draws; chains must be numbered from 1 and hold equal
/// numbers of draws.
pub fn read_posterior<R: Read>(r: R) -> Result<PosteriorSamples> {
    let mut expected: Vec<&str> = POSTERIOR_HEAD.to_vec();
    expected.extend(ModelParams::NAMES);
    let (_, recs) = records(r, &expected)?;
    let mut draws: Vec<Vec<ModelParams>> = Vec::new();
    let mut iterations: Vec<usize> = Vec::new();
    for rec in &recs {
        if rec.len() != expected.len() {
            return Err(parse_err(
                rec,
                format!("expected {} fields, got {}", expected.len(), rec.len()),
            ));
        }
        let chain: usize = field(rec, 0, "chain")?;
        let iter: usize = field(rec, 1, "iter")?;
        let mut v = [0.0; 12];
        for (j, x) in v.iter_mut().enumerate() {
            *x = field(rec, j + 2, ModelParams::NAMES[j])?;
        }
        if chain == 0 || chain > draws.len() + 1 {
            return Err(parse_err(rec, format!("chain {chain} out of sequence")));
        }
        if chain == draws.len() + 1 {
            draws.push(Vec::new());
        }
        let p = ModelParams::from_array(&v);
        if !p.scales_positive() || p.to_array().iter().any(|x| !x.is_finite()) {
            return Err(parse_err(rec, "draw has non-finite values or nonpositive scales"));
        }
        if chain == 1 {
            iterations.push(iter);
        }
        draws[chain - 1].push(p);
    }
    if draws.iter().any(|c| c.len() != iterations.len()) {
        return Err(Error::invalid("posterior chains have unequal lengths"));
    }
    let thin = match iterations.as_slice() {
        [a, b, ..] if b > a => b - a,
        _ => 1,
    };
    let first = iterations.first().copied().unwrap_or(0);
    let config = ChainConfig {
        n_chains: draws.len(),
        burn_in: first.saturating_sub(thin),
        total_iterations: iterations.last().copied().unwrap_or(0),
        thin,
        ..ChainConfig::desk(0)
    };
    let mut s = PosteriorSamples::from_draws(draws, config)?;
    s.iterations = iterations;
    Ok(s)
}

pub fn write_summary<W: Write>(w: W, summary: &[ParamSummary; 12]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["param", "mean", "sd", "q2.5", "q50", "q97.5"])?;
    for (name, s) in ModelParams::NAMES.iter().zip(summary) {
        wtr.write_record([
            name.to_string(),
            format!("{:.4}", s.mean),
            format!("{:.4}", s.sd),
            format!("{:.4}", s.q025),
            format!("{:.4}", s.q50),
            format!("{:.4}", s.q975),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(w: W, report: &ConvergenceReport) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["param", "psrf", "ess"])?;
    for (j, name) in ModelParams::NAMES.iter().enumerate() {
        wtr.write_record([
            name.to_string(),
            format!("{:.4}", report.psrf[j]),
            format!("{:.1}", report.ess[j]),
        ])?;
    }
    wtr.write_record(["mpsrf".to_string(), format!("{:.4}", report.mpsrf), String::new()])?;
    wtr.flush()?;
    Ok(())
}

// nowcasts

pub fn write_nowcast<W: Write>(w: W, result: &NowcastResult) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record([
        "t",
        "origin_month",
        "observed_partial",
        "point",
        "lo95",
        "hi95",
        "realized",
    ])?;
    for r in &result.rows {
        wtr.write_record([
            r.t.to_string(),
            r.origin_month.to_string(),
            r.observed_partial.to_string(),
            r.point.to_string(),
            r.lo95.to_string(),
            r.hi95.to_string(),
            r.realized.map_or_else(String::new, |v| v.to_string()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_nowcast<R: Read>(r: R) -> Result<NowcastResult> {
    let (_, recs) = records(
        r,
        &[
            "t",
            "origin_month",
            "observed_partial",
            "point",
            "lo95",
            "hi95",
            "realized",
        ],
    )?;
    let rows = recs
        .iter()
        .map(|rec| {
            let row = NowcastRow {
                t: field(rec, 0, "t")?,
                origin_month: field(rec, 1, "origin_month")?,
                observed_partial: field(rec, 2, "observed_partial")?,
                point: field(rec, 3, "point")?,
                lo95: field(rec, 4, "lo95")?,
                hi95: field(rec, 5, "hi95")?,
                realized: opt_field(rec, 6, "realized")?,
            };
            if !(row.lo95 <= row.point && row.point <= row.hi95) {
                return Err(parse_err(rec, "point lies outside its interval"));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NowcastResult { rows, draws: 0 })
}

// comparisons

/// Per-row predictions: `model,t,point,realized`.
pub fn write_comparison_points<W: Write>(w: W, bt: &Backtest) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["model", "t", "point", "realized"])?;
    for m in &bt.predictions {
        for (&(t, point), &(_, realized)) in m.points.iter().zip(&bt.realized) {
            wtr.write_record([
                m.model.to_string(),
                t.to_string(),
                point.to_string(),
                realized.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One row per model with RMSE and MAE to 4 decimals.
pub fn write_comparison_table<W: Write>(w: W, scores: &[ModelScore]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["model", "rmse", "mae"])?;
    for s in scores {
        wtr.write_record([s.model.to_string(), format!("{:.4}", s.rmse), format!("{:.4}", s.mae)])?;
    }
    wtr.flush()?;
    Ok(())
}

// reserves

pub fn write_reserve<W: Write>(w: W, table: &ReserveTable) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["month", "estimated", "paid", "ibnr", "ultimate", "ibnr_change_pct"])?;
    for r in &table.rows {
        wtr.write_record([
            r.month.short_label(),
            format_currency(r.estimated),
            format_currency(r.paid),
            format_currency(r.ibnr),
            r.ultimate.map_or_else(String::new, format_currency),
            format_rate(r.ibnr_change_pct),
        ])?;
    }
    wtr.write_record([
        "total".to_string(),
        format_currency(table.total_estimated),
        format_currency(table.total_paid),
        format_currency(table.total_ibnr),
        table.total_ultimate.map_or_else(String::new, format_currency),
        String::new(),
    ])?;
    wtr.flush()?;
    Ok(())
}

// truth sidecar

/// The generating parameters of a synthetic triangle, as `param,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub coef: Coefficients,
    pub seed: u64,
    pub rows: usize,
    pub max_delay: usize,
    pub origin: YearMonth,
}

const COEF_NAMES: [&str; 6] = ["alpha0", "alpha1", "alpha2", "beta0", "beta1", "beta2"];

pub fn write_truth<W: Write>(w: W, truth: &TruthRecord) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["param", "value"])?;
    for (name, v) in COEF_NAMES.iter().zip(truth.coef.to_array()) {
        wtr.write_record([name.to_string(), v.to_string()])?;
    }
    wtr.write_record(["seed".to_string(), truth.seed.to_string()])?;
    wtr.write_record(["rows".to_string(), truth.rows.to_string()])?;
    wtr.write_record(["delays".to_string(), truth.max_delay.to_string()])?;
    wtr.write_record(["origin".to_string(), truth.origin.to_string()])?;
    wtr.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R) -> Result<TruthRecord> {
    let (_, recs) = records(r, &["param", "value"])?;
    let get = |name: &str| -> Result<&StringRecord> {
        recs.iter()
            .find(|r| r.get(0) == Some(name))
            .ok_or_else(|| Error::invalid(format!("truth file lacks {name}")))
    };
    let mut coef = [0.0; 6];
    for (c, name) in coef.iter_mut().zip(COEF_NAMES) {
        *c = field(get(name)?, 1, name)?;
    }
    Ok(TruthRecord {
        coef: Coefficients::from_array(coef),
        seed: field(get("seed")?, 1, "seed")?,
        rows: field(get("rows")?, 1, "rows")?,
        max_delay: field(get("delays")?, 1, "delays")?,
        origin: field(get("origin")?, 1, "origin")?,
    })
}

/// Reads `path` with `f`.
pub fn read_path<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    f(open(path)?)
}

/// Writes `path` with `f`.
pub fn write_path(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn origin() -> YearMonth {
        YearMonth::new(2018, 1).unwrap()
    }

    fn to_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn triangle_round_trip_infers_present() {
        let s = generate(&SynthConfig {
            rows: 20,
            max_delay: 5,
            ..SynthConfig::with_seed(2)
        })
        .unwrap();
        for tri in [
            s.triangle.clone(),
            s.at_present(21).unwrap().triangle,
            s.at_present(12).unwrap().triangle,
        ] {
            let text = to_string(|b| write_triangle(b, &tri));
            let back = read_triangle(text.as_bytes(), origin()).unwrap();
            assert_eq!(back, tri);
        }
        let text = to_string(|b| write_triangle(b, &s.at_present(21).unwrap().triangle));
        assert!(text.starts_with("t,d1,d2,d3,d4,d5\n"));
        assert!(text.lines().last().unwrap().ends_with(",,,,"));
    }

    #[test]
    fn triangle_errors_carry_line_numbers() {
        let bad = "t,d1,d2\n1,3,4\n2,x,\n";
        match read_triangle(bad.as_bytes(), origin()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let gap = "t,d1,d2,d3\n1,3,,4\n";
        assert!(read_triangle(gap.as_bytes(), origin()).is_err());
        let mask = "t,d1,d2\n1,3,4\n2,1,\n3,2,5\n";
        assert!(read_triangle(mask.as_bytes(), origin()).is_err());
        assert!(read_triangle("x,d1\n1,2\n".as_bytes(), origin()).is_err());
    }

    #[test]
    fn incidents_round_trip_and_errors() {
        let text = "id,breach_date,report_date\na,2020-01-05,2020-02-01\nb,2020-03-01,2020-03-02\n";
        let recs = read_incidents(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(to_string(|b| write_incidents(b, &recs)), text);
        let bad = "id,breach_date,report_date\na,2020-01-05,2020-02-01\nb,2020-03-01,2020-02-02\n";
        match read_incidents(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_incidents("id,date\n".as_bytes()).is_err());
    }

    #[test]
    fn posterior_round_trip() {
        let a = ModelParams::new(Coefficients::REFERENCE, [0.1, 0.2, 0.3], [1.0 / 3.0, 2.0, 3.5]);
        let mut b = a;
        b.coef.alpha[1] = -0.0123456789;
        let cfg = ChainConfig {
            burn_in: 100,
            total_iterations: 120,
            thin: 10,
            ..ChainConfig::desk(0)
        };
        let mut s = PosteriorSamples::from_draws(vec![vec![a, b], vec![b, a]], cfg).unwrap();
        s.iterations = vec![110, 120];
        let text = to_string(|w| write_posterior(w, &s));
        let back = read_posterior(text.as_bytes()).unwrap();
        assert_eq!(back.draws, s.draws);
        assert_eq!(back.iterations, s.iterations);
        assert_eq!(back.config.thin, 10);
        assert!(read_posterior("chain,iter\n".as_bytes()).is_err());
    }

    #[test]
    fn truth_round_trip() {
        let t = TruthRecord {
            coef: Coefficients::REFERENCE,
            seed: 7,
            rows: 72,
            max_delay: 12,
            origin: origin(),
        };
        let text = to_string(|w| write_truth(w, &t));
        assert_eq!(read_truth(text.as_bytes()).unwrap(), t);
    }

    #[test]
    fn nowcast_round_trip() {
        let res = NowcastResult {
            rows: vec![
                NowcastRow {
                    t: 2,
                    origin_month: origin().plus_months(1),
                    observed_partial: 75,
                    point: 77.0,
                    lo95: 75.0,
                    hi95: 83.5,
                    realized: Some(77),
                },
                NowcastRow {
                    t: 3,
                    origin_month: origin().plus_months(2),
                    observed_partial: 99,
                    point: 103.5,
                    lo95: 99.0,
                    hi95: 115.0,
                    realized: None,
                },
            ],
            draws: 0,
        };
        let text = to_string(|w| write_nowcast(w, &res));
        assert!(text.contains("2,2018-02,75,77,75,83.5,77\n"));
        assert_eq!(read_nowcast(text.as_bytes()).unwrap(), res);
    }
}
