//! Persisting a [`RunResult`]: `result.json`, a quantile summary, and CSV
//! tables for plotting.
//!
//! CSV layouts:
//! - per-trajectory curves (`rho_growth.csv`, `norm_growth.csv`): `trial,n,value`
//! - probability curves (`lde_<kind>.csv`, `geometry_<i>_<event>.csv`): `n,value,ci_lo,ci_hi`
//! - `lyapunov.csv`: `index,lambda,std_error`
//! - `cylinders.csv`: `word,measure` with symbols joined by `-`
//! - `correlation.csv`: `gap,exact,estimate,half_width`

use std::fs;
use std::path::{Path, PathBuf};

use cocycle_lab::deviations::DeviationKind;
use cocycle_lab::geometry::{GeometryEvent, GeometryPoint};
use cocycle_lab::lyapunov::{GrowthCurve, LyapunovEstimate};
use cocycle_lab::stats::Proportion;
use serde::Serialize;

use crate::error::HarnessError;
use crate::output::{fmt_f64, to_json_string};
use crate::run::{GeometryResult, Payload, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const RESULT_FILE: &str = "result.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// One CSV table, kept in memory so tests can inspect rows without touching disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        let path = dir.join(&self.name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::io(&path, e))?;
        w.write_record(&self.header).map_err(|e| HarnessError::io(&path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| HarnessError::io(&path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    }
}

fn growth_table(name: &str, ns: &[usize], per_trial: &[Vec<f64>]) -> Table {
    let mut t = Table::new(name, &["trial", "n", "value"]);
    for (trial, row) in per_trial.iter().enumerate() {
        for (&n, &v) in ns.iter().zip(row) {
            t.rows.push(vec![trial.to_string(), n.to_string(), fmt_f64(v)]);
        }
    }
    t
}

fn proportion_table<'a>(name: String, points: impl Iterator<Item = (usize, &'a Proportion)>) -> Table {
    let mut t = Table::new(name, &["n", "value", "ci_lo", "ci_hi"]);
    for (n, p) in points {
        t.rows.push(vec![n.to_string(), fmt_f64(p.estimate), fmt_f64(p.ci_lo), fmt_f64(p.ci_hi)]);
    }
    t
}

fn spectrum_table(name: &str, est: &LyapunovEstimate) -> Table {
    let mut t = Table::new(name, &["index", "lambda", "std_error"]);
    for (i, (l, se)) in est.lambdas.iter().zip(&est.std_errors).enumerate() {
        t.rows.push(vec![(i + 1).to_string(), fmt_f64(*l), fmt_f64(*se)]);
    }
    t
}

fn kind_name(kind: DeviationKind) -> &'static str {
    match kind {
        DeviationKind::NormUpper => "norm_upper",
        DeviationKind::NormTwoSided => "norm_two_sided",
        DeviationKind::VectorTwoSided => "vector_two_sided",
        DeviationKind::WedgeUpper => "wedge_upper",
    }
}

fn event_name(event: &GeometryEvent) -> &'static str {
    match event {
        GeometryEvent::ImageAlignment { .. } => "image_alignment",
        GeometryEvent::UStabilization { .. } => "u_stabilization",
        GeometryEvent::HyperplaneAvoidance { .. } => "hyperplane_avoidance",
        GeometryEvent::UsSeparation => "us_separation",
    }
}

/// All CSV tables for a result, in a fixed order.
pub fn tables(result: &RunResult) -> Vec<Table> {
    let mut out = Vec::new();
    match &result.payload {
        Payload::Validate(_) | Payload::Irreducibility(_) => {}
        Payload::Measure(p) => {
            let mut t = Table::new("cylinders.csv", &["word", "measure"]);
            for c in &p.cylinders {
                let w: Vec<String> = c.word.symbols().iter().map(|s| s.to_string()).collect();
                t.rows.push(vec![w.join("-"), fmt_f64(c.measure)]);
            }
            out.push(t);
            if let Some(corr) = &p.correlation {
                let mut t = Table::new("correlation.csv", &["gap", "exact", "estimate", "half_width"]);
                for pt in &corr.points {
                    t.rows.push(vec![pt.gap.to_string(), fmt_f64(pt.exact), fmt_f64(pt.estimate), fmt_f64(pt.half_width)]);
                }
                out.push(t);
            }
        }
        Payload::Lyapunov(p) => {
            out.push(spectrum_table("lyapunov.csv", &p.estimate));
            if let Some(ext) = &p.exterior {
                out.push(spectrum_table("lyapunov_wedge.csv", ext));
            }
        }
        Payload::RhoGrowth(p) => {
            out.push(growth_table("rho_growth.csv", &p.curve.ns, &p.curve.rho));
            out.push(growth_table("norm_growth.csv", &p.curve.ns, &p.curve.norm));
        }
        Payload::Lde(p) => {
            for c in &p.curves {
                let name = format!("lde_{}.csv", kind_name(c.event.kind));
                out.push(proportion_table(name, c.points.iter().map(|pt| (pt.n, &pt.probability))));
            }
        }
        Payload::Geometry(p) => {
            for (i, r) in p.results.iter().enumerate() {
                if let GeometryResult::Curve(c) = r {
                    let name = format!("geometry_{i}_{}.csv", event_name(&c.event));
                    out.push(proportion_table(name, c.points.iter().map(|pt: &GeometryPoint| (pt.n, &pt.probability))));
                }
            }
        }
    }
    out
}

#[derive(Serialize)]
struct GrowthSummaryDoc<'a> {
    ns: &'a [usize],
    summary: &'a [cocycle_lab::lyapunov::GrowthSummary],
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    kind: &'static str,
    config_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth: Option<GrowthSummaryDoc<'a>>,
    discards: crate::run::DiscardSummary,
}

fn growth_of(result: &RunResult) -> Option<&GrowthCurve> {
    match &result.payload {
        Payload::RhoGrowth(p) => Some(&p.curve),
        _ => None,
    }
}

/// Writes the requested outputs into `dir`, returning the paths written.
/// `Json` writes `result.json` and `summary.json`; `Csv` writes the tables.
pub fn emit_report(result: &RunResult, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = dir.join(RESULT_FILE);
            write_json(&path, result)?;
            written.push(path);
            let summary = SummaryDoc {
                kind: result.config.experiment.kind(),
                config_hash: &result.config_hash,
                growth: growth_of(result).map(|c| GrowthSummaryDoc { ns: &c.ns, summary: &c.summary }),
                discards: result.discards,
            };
            let path = dir.join(SUMMARY_FILE);
            write_json(&path, &summary)?;
            written.push(path);
        }
        ReportFormat::Csv => {
            for t in tables(result) {
                written.push(t.write(dir)?);
            }
        }
    }
    Ok(written)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = to_json_string(value).map_err(|e| HarnessError::io(path, e))?;
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Reads a previously written `result.json`.
pub fn read_result(path: &Path) -> Result<RunResult, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: not a result document: {e}", path.display())))
}
