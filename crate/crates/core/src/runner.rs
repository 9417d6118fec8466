//! Executes a [`RunConfig`]: runs the simulation, streams the trace to disk
//! and summarizes tracking quality.

use std::fmt;

use crate::config::{linear_header, train_header, Problem, RunConfig, TraceWriter};
use crate::error::{Error, Result};
use crate::linsolve::solve_linear;
use crate::trainer::{segments, Segment, TraceRecord, Trainer};

/// Process exit codes of the `paramodel` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitStatus {
    Converged = 0,
    NotConverged = 1,
    ConfigError = 2,
    Diverged = 3,
    IoError = 4,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn for_error(err: &Error) -> Self {
        match err {
            Error::Divergence { .. } => ExitStatus::Diverged,
            Error::Io { .. } | Error::Trace(_) => ExitStatus::IoError,
            _ => ExitStatus::ConfigError,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub name: String,
    pub iterations: u64,
    pub tol: f64,
    pub final_y: f64,
    pub final_y_ref: f64,
    pub final_weights: Vec<f64>,
    pub segments: Vec<Segment>,
    /// Largest `|w_i|` seen at any iteration.
    pub max_abs_weight: f64,
}

impl TrainSummary {
    pub fn final_error(&self) -> f64 {
        (self.final_y - self.final_y_ref).abs()
    }

    pub fn converged(&self) -> bool {
        self.final_error() < self.tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinsolveSummary {
    pub name: String,
    pub iterations: u64,
    pub tol: f64,
    pub final_x: Vec<f64>,
    pub final_y: Vec<f64>,
    pub final_residual: f64,
    pub settled_at: Option<u64>,
}

impl LinsolveSummary {
    pub fn converged(&self) -> bool {
        self.final_residual < self.tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Train(TrainSummary),
    Linsolve(LinsolveSummary),
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        match self {
            RunOutcome::Train(s) => s.converged(),
            RunOutcome::Linsolve(s) => s.converged(),
        }
    }

    pub fn exit_status(&self) -> ExitStatus {
        if self.converged() {
            ExitStatus::Converged
        } else {
            ExitStatus::NotConverged
        }
    }
}

fn fmt_settled(at: Option<u64>, start: u64) -> String {
    match at {
        Some(k) => format!("settled at k={k} ({} iterations)", k - start.min(k)),
        None => "not settled".to_string(),
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunOutcome::Train(s) => {
                writeln!(f, "run {} (train), {} iterations", s.name, s.iterations)?;
                for seg in &s.segments {
                    writeln!(
                        f,
                        "  segment k={}..{}: {}",
                        seg.start,
                        seg.end,
                        fmt_settled(seg.settled_at, seg.start)
                    )?;
                }
                let w: Vec<String> = s.final_weights.iter().map(|w| format!("{w:.6}")).collect();
                writeln!(f, "  final weights [{}]", w.join(", "))?;
                writeln!(f, "  max |w_i| over run {:.6}", s.max_abs_weight)?;
                write!(
                    f,
                    "  final |y - y_ref| = {:.3e} (y = {:.6}, y_ref = {}), tol {} -> {}",
                    s.final_error(),
                    s.final_y,
                    s.final_y_ref,
                    s.tol,
                    if s.converged() { "converged" } else { "NOT converged" }
                )
            }
            RunOutcome::Linsolve(s) => {
                writeln!(f, "run {} (linsolve), {} iterations", s.name, s.iterations)?;
                let x: Vec<String> = s.final_x.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(f, "  final x [{}]", x.join(", "))?;
                writeln!(f, "  {}", fmt_settled(s.settled_at, 0))?;
                write!(
                    f,
                    "  max residual max_j |y_j - b_j| = {:.3e}, tol {} -> {}",
                    s.final_residual,
                    s.tol,
                    if s.converged() { "converged" } else { "NOT converged" }
                )
            }
        }
    }
}

/// Runs `cfg`, writing the decimated trace when an output path is set.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    match &cfg.problem {
        Problem::Train(scenario) => {
            let mut trainer = Trainer::new(scenario)?;
            let mut writer = match &cfg.output {
                Some(path) => Some(TraceWriter::create(
                    path,
                    &train_header(scenario.net.weight_count()),
                    cfg.decimate,
                )?),
                None => None,
            };
            // settling only needs the output and reference
            let mut compact = Vec::with_capacity(scenario.horizon as usize);
            let mut max_abs_weight = 0.0f64;
            let mut last: Option<TraceRecord> = None;
            while !trainer.is_finished() {
                let r = trainer.step()?;
                if let Some(w) = writer.as_mut() {
                    w.write_train(&r)?;
                }
                max_abs_weight = r.w.iter().fold(max_abs_weight, |m, w| m.max(w.abs()));
                compact.push(TraceRecord {
                    k: r.k,
                    t: r.t,
                    y: r.y,
                    y_ref: r.y_ref,
                    w: Vec::new(),
                    u: Vec::new(),
                });
                last = Some(r);
            }
            if let Some(w) = writer {
                w.finish()?;
            }
            let last = last.expect("horizon is at least one iteration");
            Ok(RunOutcome::Train(TrainSummary {
                name: scenario.name.clone(),
                iterations: last.k,
                tol: cfg.tol,
                final_y: last.y,
                final_y_ref: last.y_ref,
                final_weights: last.w,
                segments: segments(&compact, &scenario.event_iterations(), cfg.tol),
                max_abs_weight,
            }))
        }
        Problem::Linsolve(setup) => {
            let problem = setup.problem()?;
            let trace = solve_linear(&problem)?;
            if let Some(path) = &cfg.output {
                let mut w = TraceWriter::create(path, &linear_header(problem.dimension()), cfg.decimate)?;
                for r in &trace.records {
                    w.write_linear(r, &trace.b)?;
                }
                w.finish()?;
            }
            let last = trace.last().expect("horizon is at least one iteration");
            Ok(RunOutcome::Linsolve(LinsolveSummary {
                name: setup.name.clone(),
                iterations: last.k,
                tol: cfg.tol,
                final_x: last.x.clone(),
                final_y: last.y.clone(),
                final_residual: trace.final_residual(),
                settled_at: trace.settling_iteration(cfg.tol),
            }))
        }
    }
}
