//! Report types and their CSV/JSON emission. Output depends only on the
//! report contents.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateStatus {
    Pass,
    Fail,
    Skip,
}

impl GateStatus {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            GateStatus::Pass
        } else {
            GateStatus::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GateStatus::Pass => "pass",
            GateStatus::Fail => "fail",
            GateStatus::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    /// Soft gates are reported but never fail a run.
    pub hard: bool,
    pub status: GateStatus,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Gate {
    /// Passes when `statistic < threshold`.
    pub fn below(name: &str, hard: bool, statistic: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Gate {
            name: name.into(),
            hard,
            status: GateStatus::from_bool(statistic < threshold),
            statistic: finite(statistic),
            threshold: Some(threshold),
            detail: detail.into(),
        }
    }

    /// Passes when `statistic > threshold` (p-values).
    pub fn above(name: &str, hard: bool, statistic: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Gate {
            status: GateStatus::from_bool(statistic > threshold),
            ..Gate::below(name, hard, statistic, threshold, detail)
        }
    }

    pub fn skip(name: &str, hard: bool, detail: impl Into<String>) -> Self {
        Gate {
            name: name.into(),
            hard,
            status: GateStatus::Skip,
            statistic: None,
            threshold: None,
            detail: detail.into(),
        }
    }

    /// A gate whose computation errored counts as failed.
    pub fn error(name: &str, hard: bool, err: &Error) -> Self {
        Gate {
            name: name.into(),
            hard,
            status: GateStatus::Fail,
            statistic: None,
            threshold: None,
            detail: err.to_string(),
        }
    }

    pub fn hard_failure(&self) -> bool {
        self.hard && self.status == GateStatus::Fail
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub preset: String,
    pub seed: u64,
    pub gates: Vec<Gate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n: u64,
    pub c: Vec<f64>,
    /// Realized level, l_n(c) or the fixed grid level.
    pub l: Vec<i64>,
    pub theta: Vec<f64>,
    pub reps: u64,
    pub ratio_mean: f64,
    pub ratio_std: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub ks_pool: f64,
    pub pool_mean: f64,
    pub boundary_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub n: u64,
    /// Median over seeds of max_c |ratio - pool mean|.
    pub median_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub preset: String,
    pub seed: u64,
    pub points: Vec<ConvergencePoint>,
    pub trend: Vec<TrendRow>,
    pub gates: Vec<Gate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub preset: String,
    pub seed: u64,
    pub suite: String,
    pub identity: Option<IdentityReport>,
    pub convergence: Option<ConvergenceReport>,
}

pub trait Report: Serialize {
    fn to_csv(&self) -> String;

    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Quote a CSV field when it contains a separator, quote or newline.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:e}"))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

const GATE_HEADER: &str = "suite,gate,hard,status,statistic,threshold,detail";

fn gate_rows(out: &mut String, suite: &str, gates: &[Gate]) {
    for g in gates {
        let _ = writeln!(
            out,
            "{suite},{},{},{},{},{},{}",
            field(&g.name),
            g.hard,
            g.status.as_str(),
            opt(g.statistic),
            opt(g.threshold),
            field(&g.detail)
        );
    }
}

impl Report for IdentityReport {
    fn to_csv(&self) -> String {
        let mut out = format!("{GATE_HEADER}\n");
        gate_rows(&mut out, "identity", &self.gates);
        out
    }
}

impl Report for ConvergenceReport {
    fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,c,l,theta,reps,ratio_mean,ratio_std,ratio_min,ratio_max,ks_pool,pool_mean,boundary_distance\n",
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                p.n,
                join(&p.c),
                join(&p.l),
                join(&p.theta),
                p.reps,
                p.ratio_mean,
                p.ratio_std,
                p.ratio_min,
                p.ratio_max,
                p.ks_pool,
                p.pool_mean,
                p.boundary_distance
            );
        }
        out
    }
}

impl Report for VerifyReport {
    /// The gate table of every suite that ran.
    fn to_csv(&self) -> String {
        let mut out = format!("{GATE_HEADER}\n");
        if let Some(r) = &self.identity {
            gate_rows(&mut out, "identity", &r.gates);
        }
        if let Some(r) = &self.convergence {
            gate_rows(&mut out, "convergence", &r.gates);
        }
        out
    }
}

impl VerifyReport {
    pub fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.identity
            .iter()
            .flat_map(|r| r.gates.iter())
            .chain(self.convergence.iter().flat_map(|r| r.gates.iter()))
    }

    pub fn all_hard_pass(&self) -> bool {
        !self.gates().any(Gate::hard_failure)
    }
}

/// Write a report to `path`, or to stdout when no path is given.
pub fn emit_report<R: Report>(report: &R, format: OutputFormat, path: Option<&Path>) -> Result<()> {
    let text = report.render(format);
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
