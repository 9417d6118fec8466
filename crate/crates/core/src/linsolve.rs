//! Solving `A x = b` as a distributed tracking problem.
//!
//! Unknown `x_j` is the (filtered) output of its own controller, which tracks
//! `b_j` through the measured row product `y_j = (A x)_j`. The other unknowns
//! are disturbances from that controller's point of view.

use crate::controller::{ControllerParams, ControllerState};
use crate::dynamics::FirstOrderFilter;
use crate::error::{Error, Result};

/// Geometric gain schedule: `kp` and `ki` of controller `j` (zero-based) are
/// scaled by `rho^j`; `k_alpha`, `k_beta` and `dt` are shared.
pub fn stagger_params(base: &ControllerParams, n: usize, rho: f64) -> Result<Vec<ControllerParams>> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one controller"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid("stagger_rho", format!("must lie in (0, 1], got {rho}")));
    }
    let mut scale = 1.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(ControllerParams {
            kp: base.kp * scale,
            ki: base.ki * scale,
            ..*base
        });
        scale *= rho;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTrackingProblem {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub controllers: Vec<ControllerParams>,
    pub filters: Vec<FirstOrderFilter>,
    pub horizon: u64,
}

impl LinearTrackingProblem {
    pub fn new(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        controllers: Vec<ControllerParams>,
        filters: Vec<FirstOrderFilter>,
        horizon: u64,
    ) -> Result<Self> {
        let problem = Self {
            a,
            b,
            controllers,
            filters,
            horizon,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// One staggered controller and one filter of time constant `tau` per unknown.
    pub fn staggered(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        base: &ControllerParams,
        rho: f64,
        tau: f64,
        horizon: u64,
    ) -> Result<Self> {
        let n = b.len();
        let controllers = stagger_params(base, n, rho)?;
        let filters = vec![FirstOrderFilter::new(tau, 0.0)?; n];
        Self::new(a, b, controllers, filters, horizon)
    }

    pub fn dimension(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.b.len();
        if n == 0 {
            return Err(Error::invalid("b", "empty system"));
        }
        if self.a.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.a.len(),
            });
        }
        for row in &self.a {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        for len in [self.controllers.len(), self.filters.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        if !self.a.iter().flatten().chain(&self.b).all(|v| v.is_finite()) {
            return Err(Error::invalid("a", "matrix and right-hand side must be finite"));
        }
        for c in &self.controllers {
            c.validate()?;
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        Ok(())
    }
}

/// State after iteration `k`; `y` is always recomputed as `A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRecord {
    pub k: u64,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTrace {
    pub b: Vec<f64>,
    pub records: Vec<LinearRecord>,
}

impl LinearTrace {
    pub fn last(&self) -> Option<&LinearRecord> {
        self.records.last()
    }

    pub fn residual(&self, record: &LinearRecord) -> f64 {
        record
            .y
            .iter()
            .zip(&self.b)
            .map(|(y, b)| (y - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max_j |y_j - b_j|` at the final iterate.
    pub fn final_residual(&self) -> f64 {
        self.last().map_or(f64::INFINITY, |r| self.residual(r))
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.final_residual() < tol
    }

    /// First iteration from which the residual stays below `tol` until the end.
    pub fn settling_iteration(&self, tol: f64) -> Option<u64> {
        let mut settled = None;
        for r in &self.records {
            if self.residual(r) < tol {
                settled.get_or_insert(r.k);
            } else {
                settled = None;
            }
        }
        settled
    }
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(a, x)| a * x).sum())
        .collect()
}

/// Runs every controller synchronously against the same measured `y` for
/// `horizon` iterations, starting from `x = filter states` (zero by default).
pub fn solve_linear(problem: &LinearTrackingProblem) -> Result<LinearTrace> {
    problem.validate()?;
    let n = problem.dimension();
    let mut states = problem
        .controllers
        .iter()
        .map(|p| ControllerState::new(p, 0.0, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let mut filters = problem.filters.clone();
    let mut x: Vec<f64> = filters.iter().map(FirstOrderFilter::state).collect();
    let mut y = mat_vec(&problem.a, &x);
    let mut records = Vec::with_capacity(problem.horizon as usize);

    for k in 1..=problem.horizon {
        for j in 0..n {
            let params = &problem.controllers[j];
            let (next, u) = states[j].step(params, problem.b[j], y[j])?;
            states[j] = next;
            filters[j] = filters[j]
                .step(u, params.dt)
                .map_err(|_| Error::diverged(k, format!("x{}", j + 1)))?;
            x[j] = filters[j].state();
        }
        y = mat_vec(&problem.a, &x);
        if let Some(j) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::diverged(k, format!("y{}", j + 1)));
        }
        records.push(LinearRecord {
            k,
            y: y.clone(),
            x: x.clone(),
        });
    }

    Ok(LinearTrace {
        b: problem.b.clone(),
        records,
    })
}

/// Coefficients of the three-unknown demonstration system.
pub fn demo_system() -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        vec![vec![3.0, 0.5, 8.0], vec![4.0, 7.0, 4.5], vec![1.0, 9.0, 3.0]],
        vec![7.95, 6.30, 3.80],
    )
}

/// Gains used for the demonstration system. The initialization amplitude is
/// larger than the training one so that `psi` stays positive over the whole
/// horizon with right-hand sides near 8.
pub fn demo_params() -> ControllerParams {
    ControllerParams {
        kp: 1.0,
        ki: 0.01,
        k_alpha: 1000.0,
        k_beta: 40.0,
        dt: 1e-5,
        decay_clock: Default::default(),
    }
}

pub const DEMO_RHO: f64 = 0.5;
pub const DEMO_TAU: f64 = 1e-5;
pub const DEMO_HORIZON: u64 = 200_000;

pub fn demo_problem() -> LinearTrackingProblem {
    let (a, b) = demo_system();
    LinearTrackingProblem::staggered(a, b, &demo_params(), DEMO_RHO, DEMO_TAU, DEMO_HORIZON)
        .expect("demo problem is valid")
}
