//! Discrete para-model control law.
//!
//! A controller instance pairs a recursive series `psi` with a left Riemann
//! sum of the tracking error. Each step produces the control
//!
//! ```text
//! psi'      = psi + kp * (k_alpha * exp(-k_beta * clock(k')) - y_meas)
//! integral' = integral + ki * (y_ref - y_meas) * dt
//! u         = psi' * integral'
//! ```
//!
//! where `clock(k')` is the elapsed time `k' * dt` by default, or the bare
//! iteration index when [`DecayClock::Index`] is selected.
//!
//! The state is a plain value: [`ControllerState::step`] never mutates its
//! receiver, so a closed loop is simply a fold over measurements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Argument of the decaying initialization term `k_alpha * exp(-k_beta * .)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClock {
    /// Elapsed time `k * dt`.
    #[default]
    Time,
    /// Bare iteration index `k`.
    Index,
}

/// Tuning gains of one controller plus the simulation step.
///
/// Fields are public so the raw law can be exercised on degenerate gain sets
/// (e.g. `kp = 0` freezes `psi`). Anything built from user input goes through
/// [`ControllerParams::new`] or [`ControllerParams::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub kp: f64,
    pub ki: f64,
    pub k_alpha: f64,
    pub k_beta: f64,
    pub dt: f64,
    pub decay_clock: DecayClock,
}

impl ControllerParams {
    pub fn new(kp: f64, ki: f64, k_alpha: f64, k_beta: f64, dt: f64) -> Result<Self> {
        let params = Self {
            kp,
            ki,
            k_alpha,
            k_beta,
            dt,
            decay_clock: DecayClock::Time,
        };
        params.validate()?;
        Ok(params)
    }

    /// Gain set used for every weight in the training scenarios.
    pub fn training_default() -> Self {
        Self {
            kp: 1.0,
            ki: 1.0 / 100.0,
            k_alpha: 333.0 / 2.0,
            k_beta: 40.0,
            dt: 1e-5,
            decay_clock: DecayClock::Time,
        }
    }

    pub fn with_decay_clock(mut self, clock: DecayClock) -> Self {
        self.decay_clock = clock;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be a real positive value, got {v}")))
            }
        }
        fn non_negative(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")))
            }
        }
        positive("kp", self.kp)?;
        positive("ki", self.ki)?;
        non_negative("k_alpha", self.k_alpha)?;
        non_negative("k_beta", self.k_beta)?;
        positive("dt", self.dt)
    }

    /// Value of the initialization term at iteration `k`.
    pub fn initialization(&self, k: u64) -> f64 {
        let clock = match self.decay_clock {
            DecayClock::Time => k as f64 * self.dt,
            DecayClock::Index => k as f64,
        };
        self.k_alpha * (-self.k_beta * clock).exp()
    }
}

/// Evolving internal state of one controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub psi: f64,
    pub integral: f64,
    pub k: u64,
    pub last_y: f64,
}

impl ControllerState {
    pub fn new(params: &ControllerParams, psi0: f64, y0: f64) -> Result<Self> {
        params.validate()?;
        if !psi0.is_finite() {
            return Err(Error::invalid("psi0", "must be finite"));
        }
        if !y0.is_finite() {
            return Err(Error::invalid("y0", "must be finite"));
        }
        Ok(Self {
            psi: psi0,
            integral: 0.0,
            k: 0,
            last_y: y0,
        })
    }

    /// Advances the law by one iteration and returns the new state with the
    /// raw control `u`.
    ///
    /// `y_meas` is the output measured before this update (`y_{k-1}`).
    pub fn step(&self, params: &ControllerParams, y_ref: f64, y_meas: f64) -> Result<(Self, f64)> {
        let k = self.k + 1;
        if !y_ref.is_finite() {
            return Err(Error::diverged(k, "reference"));
        }
        if !y_meas.is_finite() {
            return Err(Error::diverged(k, "measurement"));
        }

        let psi = self.psi + params.kp * (params.initialization(k) - y_meas);
        let error = y_ref - y_meas;
        let integral = self.integral + params.ki * error * params.dt;
        let u = psi * integral;

        if !psi.is_finite() {
            return Err(Error::diverged(k, "psi"));
        }
        if !integral.is_finite() {
            return Err(Error::diverged(k, "integral"));
        }
        if !u.is_finite() {
            return Err(Error::diverged(k, "control"));
        }

        let next = Self {
            psi,
            integral,
            k,
            last_y: y_meas,
        };
        Ok((next, u))
    }
}
