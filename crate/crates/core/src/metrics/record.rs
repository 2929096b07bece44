//! Per-run trajectories, the recording monitor, and CSV I/O.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::ControlFlow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Counters;

/// One CSV row. `work` is the raw counter (gradient evaluations or block
/// updates) the pass value was derived from; it is not written to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub pass: f64,
    pub objective: f64,
    pub grad_norm_sq: f64,
    pub feasibility_sq: Option<f64>,
    pub wall_ms: u64,
    #[serde(skip)]
    pub work: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// All configured outer iterations ran.
    Completed,
    /// The stationarity measure fell below the stopping tolerance.
    Tolerance,
    /// The pass budget was exhausted.
    PassBudget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    pub rows: Vec<RecordRow>,
    pub counters: Counters,
    /// Counter units per pass: `m` for finite sums, `m − 1` for multi-block.
    pub pass_unit: u64,
    pub stop_reason: StopReason,
    pub config: serde_json::Value,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl RunRecord {
    pub fn final_row(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    /// First recorded pass at which `grad_norm_sq < tol`.
    pub fn passes_to_tolerance(&self, tol: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.grad_norm_sq < tol).map(|r| r.pass)
    }

    /// Checks `pass = work / pass_unit` on every row and that passes never
    /// decrease.
    pub fn pass_column_consistent(&self) -> bool {
        let unit = self.pass_unit as f64;
        self.rows.iter().all(|r| r.pass == r.work as f64 / unit)
            && self.rows.windows(2).all(|w| w[0].pass <= w[1].pass)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(&self.rows, w)
    }
}

pub fn write_csv<W: Write>(rows: &[RecordRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<RecordRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let expected = ["pass", "objective", "grad_norm_sq", "feasibility_sq", "wall_ms"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!("unexpected CSV header {headers:?}")));
    }
    let rows: Vec<RecordRow> = rd.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    if rows.is_empty() {
        return Err(Error::Parse("CSV has no rows".into()));
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn interpolate(rows: &[RecordRow], pass: f64, field: impl Fn(&RecordRow) -> Option<f64>) -> Option<f64> {
    let k = rows.partition_point(|r| r.pass < pass);
    if k == 0 {
        return field(&rows[0]);
    }
    if k == rows.len() {
        return field(&rows[rows.len() - 1]);
    }
    let (a, b) = (&rows[k - 1], &rows[k]);
    let (fa, fb) = (field(a)?, field(b)?);
    if b.pass == a.pass {
        return Some(fb);
    }
    let w = (pass - a.pass) / (b.pass - a.pass);
    Some(fa + w * (fb - fa))
}

/// Averages trajectories on the union of their pass grids, restricted to the
/// range every run covers. Values are linearly interpolated.
pub fn mean_trajectory(runs: &[&[RecordRow]]) -> Vec<RecordRow> {
    let runs: Vec<&[RecordRow]> = runs.iter().copied().filter(|r| !r.is_empty()).collect();
    if runs.is_empty() {
        return Vec::new();
    }
    let end = runs.iter().map(|r| r[r.len() - 1].pass).fold(f64::INFINITY, f64::min);
    let mut grid: Vec<f64> = runs.iter().flat_map(|r| r.iter().map(|row| row.pass)).filter(|&p| p <= end).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let k = runs.len() as f64;
    grid.into_iter()
        .map(|pass| {
            let mean = |f: &dyn Fn(&RecordRow) -> Option<f64>| -> Option<f64> {
                runs.iter().map(|r| interpolate(r, pass, f)).sum::<Option<f64>>().map(|s| s / k)
            };
            RecordRow {
                pass,
                objective: mean(&|r| Some(r.objective)).unwrap_or(f64::NAN),
                grad_norm_sq: mean(&|r| Some(r.grad_norm_sq)).unwrap_or(f64::NAN),
                feasibility_sq: mean(&|r| r.feasibility_sq),
                wall_ms: mean(&|r| Some(r.wall_ms as f64)).map_or(0, |v| v.round() as u64),
                work: 0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorOptions {
    /// Record a row every this many passes.
    pub record_every: f64,
    /// Stop once the stationarity measure drops below this value.
    pub stop_tol: Option<f64>,
    pub max_passes: f64,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        Self {
            record_every: 1.0,
            stop_tol: None,
            max_passes: f64::INFINITY,
        }
    }
}

/// Decides when to record a row and when the stopping rules fire.
#[derive(Debug, Clone)]
pub struct Monitor {
    opts: MonitorOptions,
    pass_unit: u64,
    next_at: f64,
    start: Instant,
    rows: Vec<RecordRow>,
}

impl Monitor {
    pub fn new(opts: MonitorOptions, pass_unit: u64) -> Self {
        Self {
            opts,
            pass_unit: pass_unit.max(1),
            next_at: f64::NEG_INFINITY,
            start: Instant::now(),
            rows: Vec::new(),
        }
    }

    pub fn pass_of(&self, work: u64) -> f64 {
        work as f64 / self.pass_unit as f64
    }

    /// Whether a row should be recorded at this counter value.
    pub fn due(&self, work: u64) -> bool {
        let p = self.pass_of(work);
        p >= self.next_at || p >= self.opts.max_passes
    }

    pub fn budget_exhausted(&self, work: u64) -> bool {
        self.pass_of(work) >= self.opts.max_passes
    }

    /// Appends a row and reports whether a stopping rule fired.
    pub fn record(&mut self, work: u64, objective: f64, grad_norm_sq: f64, feasibility_sq: Option<f64>) -> ControlFlow<StopReason> {
        let pass = self.pass_of(work);
        if self.rows.last().is_some_and(|r| r.work == work) {
            self.rows.pop();
        }
        self.rows.push(RecordRow {
            pass,
            objective,
            grad_norm_sq,
            feasibility_sq,
            wall_ms: self.start.elapsed().as_millis() as u64,
            work,
        });
        self.next_at = pass + self.opts.record_every;
        if self.opts.stop_tol.is_some_and(|tol| grad_norm_sq < tol) {
            return ControlFlow::Break(StopReason::Tolerance);
        }
        if pass >= self.opts.max_passes {
            return ControlFlow::Break(StopReason::PassBudget);
        }
        ControlFlow::Continue(())
    }

    pub fn rows(&self) -> &[RecordRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<RecordRow> {
        self.rows
    }

    pub fn options(&self) -> &MonitorOptions {
        &self.opts
    }
}
