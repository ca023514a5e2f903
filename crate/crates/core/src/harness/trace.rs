//! Per-iteration traces and their CSV representation.

use std::fmt::Write as _;

use crate::error::{Result, SegaError};

/// Schema tag written as the first header comment.
pub const CSV_SCHEMA: &str = "sega-trace v1";

/// Column names of the CSV body, in order.
pub const CSV_COLUMNS: [&str; 6] = ["k", "oracle_calls", "cost_units", "f_gap", "dist_sq_b", "lyapunov"];

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub oracle_calls: u64,
    pub cost_units: f64,
    pub f_gap: f64,
    pub dist_sq_b: f64,
    pub lyapunov: Option<f64>,
    /// Wall time since the start of the run. Not part of the CSV body.
    pub wall_ns: u64,
}

/// Logged solver state for offline recomputation.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub k: usize,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    /// Auxiliary iterates (y, z for the accelerated method).
    pub extra: Vec<Vec<f64>>,
}

/// Result of one solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub method: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub checkpoints: Vec<Checkpoint>,
    /// Iterates (k, x) when path recording is enabled.
    pub path: Vec<(usize, Vec<f64>)>,
    /// Free-form key/value pairs written as header comments.
    pub metadata: Vec<(String, String)>,
}

/// Quantity used to decide when a trace has reached a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMetric {
    FGap,
    DistSq,
    Lyapunov,
}

/// Horizontal axis of a convergence plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    Iterations,
    OracleCalls,
    CostUnits,
}

impl TraceRow {
    pub fn metric(&self, m: TraceMetric) -> Option<f64> {
        match m {
            TraceMetric::FGap => Some(self.f_gap),
            TraceMetric::DistSq => Some(self.dist_sq_b),
            TraceMetric::Lyapunov => self.lyapunov,
        }
    }

    pub fn axis(&self, x: XAxis) -> f64 {
        match x {
            XAxis::Iterations => self.k as f64,
            XAxis::OracleCalls => self.oracle_calls as f64,
            XAxis::CostUnits => self.cost_units,
        }
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trace {
    pub fn new(method: impl Into<String>, seed: u64) -> Self {
        Self { method: method.into(), seed, ..Default::default() }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn first(&self) -> Option<&TraceRow> {
        self.rows.first()
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    /// First row whose metric is at most `threshold`.
    pub fn first_reaching(&self, m: TraceMetric, threshold: f64) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.metric(m).is_some_and(|v| v <= threshold))
    }

    /// First row whose metric is at most `fraction` times the initial value.
    pub fn first_reaching_relative(&self, m: TraceMetric, fraction: f64) -> Option<&TraceRow> {
        let start = self.first()?.metric(m)?;
        self.first_reaching(m, fraction * start)
    }

    /// CSV body: header row and data rows, no comments. Deterministic given the rows.
    pub fn csv_body(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.oracle_calls.to_string(),
                fmt_float(r.cost_units),
                fmt_float(r.f_gap),
                fmt_float(r.dist_sq_b),
                r.lyapunov.map(fmt_float).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    /// Full CSV: `#` header comments followed by [`Trace::csv_body`].
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# schema: {CSV_SCHEMA}");
        let _ = writeln!(out, "# method: {}", self.method);
        let _ = writeln!(out, "# seed: {}", self.seed);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {}", v.replace('\n', " "));
        }
        if let Some(r) = self.last() {
            let _ = writeln!(out, "# wall_ns: {}", r.wall_ns);
        }
        out.push_str(&self.csv_body());
        out
    }
}

/// Parsed CSV trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
}

impl ParsedTrace {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Strips `#` comment lines.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

/// Parses a file produced by [`Trace::to_csv`].
pub fn parse_trace_csv(text: &str) -> Result<ParsedTrace> {
    let metadata: Vec<(String, String)> = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    match metadata.iter().find(|(k, _)| k == "schema") {
        Some((_, v)) if v == CSV_SCHEMA => {}
        Some((_, v)) => return Err(SegaError::Parse { line: 1, message: format!("unsupported schema '{v}'") }),
        None => return Err(SegaError::Parse { line: 1, message: "missing schema comment".into() }),
    }
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| SegaError::Parse { line: 0, message: e.to_string() })?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(SegaError::Parse { line: 0, message: format!("unexpected columns {:?}", header.iter().collect::<Vec<_>>()) });
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| SegaError::Parse { line: 0, message: e.to_string() })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |what: &str| SegaError::Parse { line, message: format!("invalid {what}") };
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        rows.push(TraceRow {
            k: rec[0].parse().map_err(|_| bad("k"))?,
            oracle_calls: rec[1].parse().map_err(|_| bad("oracle_calls"))?,
            cost_units: num(2, "cost_units")?,
            f_gap: num(3, "f_gap")?,
            dist_sq_b: num(4, "dist_sq_b")?,
            lyapunov: if rec[5].is_empty() { None } else { Some(num(5, "lyapunov")?) },
            wall_ns: 0,
        });
    }
    Ok(ParsedTrace { metadata, rows })
}
