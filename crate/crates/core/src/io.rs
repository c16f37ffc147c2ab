//! CSV readers and writers.
//!
//! * returns: `date,<asset_1>,…,<asset_p>`, decimal fractions
//! * cost table: `asset,proportional_cost`, decimal fractions
//! * report: `stage,method,return_pct,cost_pct,turnover,leverage,sharpe`
//!   plus one `overall,<method>,,,,,<sharpe>` row per method
//! * universe: `asset,b1,b2,b3,sigma`
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! written file parses back to bit-identical values. Parse errors carry the
//! 1-based line number and the offending field.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::backtest::{BacktestResult, StageReport};
use crate::error::{Error, Result};
use crate::experiment::{AggregateRow, MeanSe, ReplicateRecord};
use crate::moments::{ReturnPanel, ReturnUnit};
use crate::simgen::SimulatedUniverse;
use crate::strategy::{CostKind, CostModel, TunePoint};

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(line, "record", format!("{kind:?}")),
    }
}

fn write_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::invalid(format!("csv write: {kind:?}")),
    }
}

/// Records with their 1-based line numbers, blank lines skipped.
fn records<R: Read>(r: R) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in reader(r).into_records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_f64(text: &str, line: usize, field: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|_| Error::parse(line, field, format!("`{text}` is not a number")))
}

/// Like [`parse_f64`] but an empty field reads as NaN.
fn parse_opt_f64(text: &str, line: usize, field: &str) -> Result<f64> {
    if text.is_empty() {
        Ok(f64::NAN)
    } else {
        parse_f64(text, line, field)
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn expect_header(rec: &csv::StringRecord, line: usize, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = rec.iter().collect();
    if got.len() != expected.len() || got.iter().zip(expected).any(|(g, e)| !g.eq_ignore_ascii_case(e)) {
        return Err(Error::parse(
            line,
            "header",
            format!("expected `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------- returns

/// Parses a returns CSV (decimal fractions).
///
/// Rows holding NaN or infinite values are collected and reported together;
/// the panel is rejected if there is any.
pub fn read_returns_csv<R: Read>(r: R) -> Result<ReturnPanel> {
    let recs = records(r)?;
    let Some(((hline, header), rows)) = recs.split_first() else {
        return Err(Error::parse(1, "header", "empty returns file"));
    };
    if header.len() < 2 {
        return Err(Error::parse(*hline, "header", "expected `date,<asset>,...`"));
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for a in &assets {
        if a.is_empty() {
            return Err(Error::parse(*hline, "header", "empty asset id"));
        }
        if !seen.insert(a.as_str()) {
            return Err(Error::parse(*hline, a.clone(), "duplicate asset id"));
        }
    }
    let p = assets.len();
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * p);
    let mut bad_rows = Vec::new();
    for (line, rec) in rows {
        if rec.len() != p + 1 {
            return Err(Error::parse(
                *line,
                "record",
                format!("expected {} fields, found {}", p + 1, rec.len()),
            ));
        }
        let date = rec[0].to_string();
        let mut finite = true;
        for (j, text) in rec.iter().skip(1).enumerate() {
            let v = parse_f64(text, *line, &assets[j])?;
            finite &= v.is_finite();
            values.push(v);
        }
        if !finite {
            bad_rows.push(format!("line {line} ({date})"));
        }
        dates.push(date);
    }
    if !bad_rows.is_empty() {
        return Err(Error::invalid(format!(
            "non-finite returns in {} row(s): {}",
            bad_rows.len(),
            bad_rows.join(", ")
        )));
    }
    let n = dates.len();
    let returns = DMatrix::from_row_slice(n, p, &values);
    ReturnPanel::new(dates, assets, returns, ReturnUnit::Decimal)
}

pub fn parse_returns_csv(text: &str) -> Result<ReturnPanel> {
    read_returns_csv(text.as_bytes())
}

pub fn read_returns_file(path: &Path) -> Result<ReturnPanel> {
    read_returns_csv(File::open(path)?)
}

/// Writes `panel` as decimal fractions.
pub fn write_returns_csv<W: Write>(panel: &ReturnPanel, w: W) -> Result<()> {
    let panel = panel.converted(ReturnUnit::Decimal);
    let mut out = writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(panel.assets().iter().cloned());
    out.write_record(&header).map_err(write_err)?;
    let r = panel.returns();
    for (i, date) in panel.dates().iter().enumerate() {
        let mut row = Vec::with_capacity(panel.p() + 1);
        row.push(date.clone());
        row.extend((0..panel.p()).map(|j| fmt(r[(i, j)])));
        out.write_record(&row).map_err(write_err)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- costs

/// Per-asset proportional cost coefficients `α_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    rows: Vec<(String, f64)>,
}

impl CostTable {
    pub fn new(rows: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (asset, alpha) in &rows {
            if !seen.insert(asset.as_str()) {
                return Err(Error::invalid(format!("duplicate asset `{asset}` in cost table")));
            }
            if !(*alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::invalid(format!(
                    "cost of `{asset}` must be finite and >= 0, got {alpha}"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }

    /// `β_j = 2 α_j²`
    pub fn quadratic_coefficient(alpha: f64) -> f64 {
        2.0 * alpha * alpha
    }

    /// Coefficients aligned with `assets`: `α_j` for proportional costs,
    /// `2 α_j²` for quadratic ones. Every asset must be listed.
    pub fn cost_model(&self, assets: &[String], kind: CostKind) -> Result<CostModel> {
        let lookup: HashMap<&str, f64> = self.rows.iter().map(|(a, v)| (a.as_str(), *v)).collect();
        let missing: Vec<&str> = assets
            .iter()
            .map(String::as_str)
            .filter(|a| !lookup.contains_key(a))
            .collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!(
                "cost table lacks {} asset(s): {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        let coef = DVector::from_iterator(
            assets.len(),
            assets.iter().map(|a| {
                let alpha = lookup[a.as_str()];
                match kind {
                    CostKind::Proportional => alpha,
                    CostKind::Quadratic => Self::quadratic_coefficient(alpha),
                }
            }),
        );
        CostModel::new(kind, coef)
    }
}

pub fn read_cost_csv<R: Read>(r: R) -> Result<CostTable> {
    let recs = records(r)?;
    let Some(((hline, header), rows)) = recs.split_first() else {
        return Err(Error::parse(1, "header", "empty cost file"));
    };
    expect_header(header, *hline, &["asset", "proportional_cost"])?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != 2 {
            return Err(Error::parse(
                *line,
                "record",
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let alpha = parse_f64(&rec[1], *line, "proportional_cost")?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::parse(*line, "proportional_cost", "must be finite and >= 0"));
        }
        out.push((rec[0].to_string(), alpha));
    }
    CostTable::new(out).map_err(|e| Error::parse(0, "asset", e.to_string()))
}

pub fn parse_cost_csv(text: &str) -> Result<CostTable> {
    read_cost_csv(text.as_bytes())
}

pub fn read_cost_file(path: &Path) -> Result<CostTable> {
    read_cost_csv(File::open(path)?)
}

pub fn write_cost_csv<W: Write>(table: &CostTable, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["asset", "proportional_cost"]).map_err(write_err)?;
    for (asset, alpha) in &table.rows {
        out.write_record([asset.clone(), fmt(*alpha)]).map_err(write_err)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- reports

pub const REPORT_HEADER: [&str; 7] = [
    "stage",
    "method",
    "return_pct",
    "cost_pct",
    "turnover",
    "leverage",
    "sharpe",
];

/// The report-table view of a [`BacktestResult`].
#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub stages: Vec<StageReport>,
    pub overall_sharpe: f64,
}

impl From<&BacktestResult> for MethodReport {
    fn from(r: &BacktestResult) -> Self {
        Self {
            method: r.method.clone(),
            stages: r.stages.clone(),
            overall_sharpe: r.overall_sharpe,
        }
    }
}

impl MethodReport {
    /// Field-wise equality treating NaN as equal to NaN.
    pub fn same_as(&self, other: &MethodReport) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.method == other.method
            && eq(self.overall_sharpe, other.overall_sharpe)
            && self.stages.len() == other.stages.len()
            && self.stages.iter().zip(&other.stages).all(|(a, b)| {
                a.stage == b.stage
                    && eq(a.gross_return_pct, b.gross_return_pct)
                    && eq(a.cost_pct, b.cost_pct)
                    && eq(a.turnover, b.turnover)
                    && eq(a.leverage, b.leverage)
                    && eq(a.sharpe, b.sharpe)
            })
    }
}

/// Writes reports stage-major (all methods for S1, then S2, …), followed by
/// one overall row per method.
pub fn write_report_csv<W: Write>(reports: &[MethodReport], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(REPORT_HEADER).map_err(write_err)?;
    let stages = reports.iter().map(|r| r.stages.len()).max().unwrap_or(0);
    for t in 0..stages {
        for r in reports {
            if let Some(s) = r.stages.get(t) {
                out.write_record([
                    s.stage.to_string(),
                    r.method.clone(),
                    fmt(s.gross_return_pct),
                    fmt(s.cost_pct),
                    fmt(s.turnover),
                    fmt(s.leverage),
                    fmt(s.sharpe),
                ])
                .map_err(write_err)?;
            }
        }
    }
    for r in reports {
        out.write_record([
            "overall".to_string(),
            r.method.clone(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            fmt(r.overall_sharpe),
        ])
        .map_err(write_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a report CSV back into per-method reports, in order of first appearance.
pub fn read_report_csv<R: Read>(r: R) -> Result<Vec<MethodReport>> {
    let recs = records(r)?;
    let Some(((hline, header), rows)) = recs.split_first() else {
        return Err(Error::parse(1, "header", "empty report file"));
    };
    expect_header(header, *hline, &REPORT_HEADER)?;
    let mut reports: Vec<MethodReport> = Vec::new();
    let mut overall_seen = HashSet::new();
    for (line, rec) in rows {
        let line = *line;
        if rec.len() != REPORT_HEADER.len() {
            return Err(Error::parse(
                line,
                "record",
                format!("expected {} fields, found {}", REPORT_HEADER.len(), rec.len()),
            ));
        }
        let method = rec[1].to_string();
        if method.is_empty() {
            return Err(Error::parse(line, "method", "empty method"));
        }
        let idx = match reports.iter().position(|r| r.method == method) {
            Some(i) => i,
            None => {
                reports.push(MethodReport {
                    method: method.clone(),
                    stages: Vec::new(),
                    overall_sharpe: f64::NAN,
                });
                reports.len() - 1
            }
        };
        if rec[0].eq_ignore_ascii_case("overall") {
            if !overall_seen.insert(method.clone()) {
                return Err(Error::parse(line, "stage", format!("second overall row for {method}")));
            }
            reports[idx].overall_sharpe = parse_opt_f64(&rec[6], line, "sharpe")?;
            continue;
        }
        let stage: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(line, "stage", format!("`{}` is not a stage number", &rec[0])))?;
        let expected = reports[idx].stages.len() + 1;
        if stage != expected {
            return Err(Error::parse(
                line,
                "stage",
                format!("{method}: expected stage {expected}, found {stage}"),
            ));
        }
        reports[idx].stages.push(StageReport {
            stage,
            gross_return_pct: parse_opt_f64(&rec[2], line, "return_pct")?,
            cost_pct: parse_opt_f64(&rec[3], line, "cost_pct")?,
            turnover: parse_opt_f64(&rec[4], line, "turnover")?,
            leverage: parse_opt_f64(&rec[5], line, "leverage")?,
            sharpe: parse_opt_f64(&rec[6], line, "sharpe")?,
        });
    }
    Ok(reports)
}

pub fn parse_report_csv(text: &str) -> Result<Vec<MethodReport>> {
    read_report_csv(text.as_bytes())
}

/// Per-replicate report: the report columns prefixed by `replicate`.
/// Failed runs are left out (they are logged by the runner).
pub fn write_replicates_csv<W: Write>(records: &[ReplicateRecord], w: W) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["replicate"];
    header.extend(REPORT_HEADER);
    out.write_record(&header).map_err(write_err)?;
    for rec in records {
        let ok: Vec<&BacktestResult> = rec.runs.iter().filter_map(|r| r.result.as_ref().ok()).collect();
        let stages = ok.iter().map(|b| b.stages.len()).max().unwrap_or(0);
        for t in 0..stages {
            for b in &ok {
                let s = &b.stages[t];
                out.write_record([
                    rec.replicate.to_string(),
                    s.stage.to_string(),
                    b.method.clone(),
                    fmt(s.gross_return_pct),
                    fmt(s.cost_pct),
                    fmt(s.turnover),
                    fmt(s.leverage),
                    fmt(s.sharpe),
                ])
                .map_err(write_err)?;
            }
        }
        for b in &ok {
            out.write_record([
                rec.replicate.to_string(),
                "overall".to_string(),
                b.method.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                fmt(b.overall_sharpe),
            ])
            .map_err(write_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub const AGGREGATE_HEADER: [&str; 13] = [
    "stage",
    "method",
    "return_pct",
    "return_pct_se",
    "cost_pct",
    "cost_pct_se",
    "turnover",
    "turnover_se",
    "leverage",
    "leverage_se",
    "sharpe",
    "sharpe_se",
    "replicates",
];

/// Replicate means and standard errors, ordered like the report table.
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(AGGREGATE_HEADER).map_err(write_err)?;
    let cell = |m: &MeanSe| {
        if m.count == 0 {
            [String::new(), String::new()]
        } else {
            [fmt(m.mean), fmt(m.se)]
        }
    };
    let max_stage = rows.iter().filter_map(|r| r.stage).max().unwrap_or(0);
    let ordered = (1..=max_stage)
        .flat_map(|t| rows.iter().filter(move |r| r.stage == Some(t)))
        .chain(rows.iter().filter(|r| r.stage.is_none()));
    for r in ordered {
        let mut rec = vec![
            r.stage.map_or_else(|| "overall".to_string(), |s| s.to_string()),
            r.method.clone(),
        ];
        for m in [&r.return_pct, &r.cost_pct, &r.turnover, &r.leverage, &r.sharpe] {
            rec.extend(cell(m));
        }
        rec.push(r.successes.to_string());
        out.write_record(&rec).map_err(write_err)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- universe

pub const UNIVERSE_HEADER: [&str; 5] = ["asset", "b1", "b2", "b3", "sigma"];

/// Writes loadings and idiosyncratic volatilities, one asset per row
/// (asset ids `a0000, a0001, …` as in generated panels).
pub fn write_universe_csv<W: Write>(universe: &SimulatedUniverse, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(UNIVERSE_HEADER).map_err(write_err)?;
    for i in 0..universe.p() {
        out.write_record([
            format!("a{i:04}"),
            fmt(universe.loadings[(i, 0)]),
            fmt(universe.loadings[(i, 1)]),
            fmt(universe.loadings[(i, 2)]),
            fmt(universe.idio_std[i]),
        ])
        .map_err(write_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a universe snapshot; `seed` is recorded on the result.
pub fn read_universe_csv<R: Read>(r: R, seed: u64) -> Result<(Vec<String>, SimulatedUniverse)> {
    let recs = records(r)?;
    let Some(((hline, header), rows)) = recs.split_first() else {
        return Err(Error::parse(1, "header", "empty universe file"));
    };
    expect_header(header, *hline, &UNIVERSE_HEADER)?;
    if rows.is_empty() {
        return Err(Error::parse(*hline, "record", "universe has no assets"));
    }
    let mut assets = Vec::with_capacity(rows.len());
    let mut loadings = DMatrix::zeros(rows.len(), 3);
    let mut sigma = DVector::zeros(rows.len());
    for (i, (line, rec)) in rows.iter().enumerate() {
        if rec.len() != 5 {
            return Err(Error::parse(
                *line,
                "record",
                format!("expected 5 fields, found {}", rec.len()),
            ));
        }
        assets.push(rec[0].to_string());
        for k in 0..3 {
            let v = parse_f64(&rec[k + 1], *line, UNIVERSE_HEADER[k + 1])?;
            if !v.is_finite() {
                return Err(Error::parse(*line, UNIVERSE_HEADER[k + 1], "not finite"));
            }
            loadings[(i, k)] = v;
        }
        let s = parse_f64(&rec[4], *line, "sigma")?;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::parse(*line, "sigma", "must be finite and > 0"));
        }
        sigma[i] = s;
    }
    Ok((assets, SimulatedUniverse::new(loadings, sigma, seed)?))
}

// ---------------------------------------------------------------- tuning

/// `lambda,sharpe,error`; failed points have an empty Sharpe and a reason.
pub fn write_tune_curve_csv<W: Write>(curve: &[TunePoint], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["lambda", "sharpe", "error"]).map_err(write_err)?;
    for pt in curve {
        let (sr, err) = match &pt.sharpe {
            Ok(v) => (fmt(*v), String::new()),
            Err(e) => (String::new(), e.clone()),
        };
        out.write_record([fmt(pt.lambda), sr, err]).map_err(write_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tune_curve_csv<R: Read>(r: R) -> Result<Vec<TunePoint>> {
    let recs = records(r)?;
    let Some(((hline, header), rows)) = recs.split_first() else {
        return Err(Error::parse(1, "header", "empty curve file"));
    };
    expect_header(header, *hline, &["lambda", "sharpe", "error"])?;
    rows.iter()
        .map(|(line, rec)| {
            if rec.len() != 3 {
                return Err(Error::parse(*line, "record", "expected 3 fields"));
            }
            let lambda = parse_f64(&rec[0], *line, "lambda")?;
            let sharpe = if rec[1].is_empty() {
                Err(rec[2].to_string())
            } else {
                Ok(parse_f64(&rec[1], *line, "sharpe")?)
            };
            Ok(TunePoint { lambda, sharpe })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_roundtrip() {
        let text = "date,A,B\n2020-01-02,0.01,-0.02\n2020-01-03,0,0.5\n";
        let panel = parse_returns_csv(text).unwrap();
        assert_eq!(panel.assets(), ["A", "B"]);
        assert_eq!(panel.returns()[(0, 1)], -0.02);
        let mut buf = Vec::new();
        write_returns_csv(&panel, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn non_finite_rows_are_listed() {
        let text = "date,A\nd1,0.1\nd2,NaN\nd3,0.2\nd4,inf\n";
        let err = parse_returns_csv(text).unwrap_err().to_string();
        assert!(err.contains("line 3 (d2)"), "{err}");
        assert!(err.contains("line 5 (d4)"), "{err}");
        assert!(err.contains("2 row(s)"), "{err}");
    }

    #[test]
    fn bad_number_has_line_and_field() {
        let err = parse_returns_csv("date,A,B\nd1,0.1,0.2\nd2,0.1,abc\n").unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "B");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn quadratic_from_proportional() {
        assert!((CostTable::quadratic_coefficient(0.01) - 0.0002).abs() < 1e-18);
        let table = parse_cost_csv("asset,proportional_cost\nA,0.01\nB,0.002\n").unwrap();
        let assets = vec!["B".to_string(), "A".to_string()];
        let m = table.cost_model(&assets, CostKind::Quadratic).unwrap();
        assert_eq!(m.coefficients()[0], 2.0 * 0.002 * 0.002);
        assert_eq!(m.coefficients()[1], 2.0 * 0.01 * 0.01);
        let m = table.cost_model(&assets, CostKind::Proportional).unwrap();
        assert_eq!(m.coefficients()[1], 0.01);
    }

    #[test]
    fn missing_cost_assets_are_listed() {
        let table = parse_cost_csv("asset,proportional_cost\nA,0.01\n").unwrap();
        let assets = vec!["A".to_string(), "X".to_string(), "Y".to_string()];
        let err = table.cost_model(&assets, CostKind::Quadratic).unwrap_err().to_string();
        assert!(err.contains("X, Y"), "{err}");
    }

    #[test]
    fn report_roundtrip_with_nan() {
        let reports = vec![MethodReport {
            method: "CAPE-S".into(),
            stages: vec![
                StageReport {
                    stage: 1,
                    gross_return_pct: 7.723,
                    cost_pct: 0.1 + 0.2,
                    turnover: 1.0 / 3.0,
                    leverage: 0.0,
                    sharpe: f64::NAN,
                },
                StageReport {
                    stage: 2,
                    gross_return_pct: -1e-300,
                    cost_pct: 5e-324,
                    turnover: 1e20,
                    leverage: 2.5,
                    sharpe: -0.25,
                },
            ],
            overall_sharpe: 1.234567890123,
        }];
        let mut buf = Vec::new();
        write_report_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("overall,CAPE-S,,,,,1.234567890123\n"), "{text}");
        let back = parse_report_csv(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].same_as(&reports[0]));
    }

    #[test]
    fn report_rejects_out_of_order_stage() {
        let text = "stage,method,return_pct,cost_pct,turnover,leverage,sharpe\n2,MV,1,1,1,1,1\n";
        assert!(matches!(parse_report_csv(text), Err(Error::Parse { line: 2, .. })));
    }
}
