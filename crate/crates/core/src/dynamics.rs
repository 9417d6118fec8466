//! First-order low-pass filter `tau * x' = input - x`, stepped with classical RK4.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFilter {
    tau: f64,
    state: f64,
}

impl FirstOrderFilter {
    pub fn new(tau: f64, state: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
        }
        if !state.is_finite() {
            return Err(Error::invalid("state", "must be finite"));
        }
        Ok(Self { tau, state })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn state(&self) -> f64 {
        self.state
    }

    fn derivative(&self, x: f64, input: f64) -> f64 {
        (input - x) / self.tau
    }

    /// One RK4 step of length `dt` with the input held constant over the step.
    pub fn step(&self, input: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        let x = self.state;
        let k1 = self.derivative(x, input);
        let k2 = self.derivative(x + 0.5 * dt * k1, input);
        let k3 = self.derivative(x + 0.5 * dt * k2, input);
        let k4 = self.derivative(x + dt * k3, input);
        let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return Err(Error::Divergence {
                iteration: 0,
                what: "filter state".into(),
            });
        }
        Ok(Self {
            tau: self.tau,
            state: next,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_is_preserved() {
        for &(c, tau, dt) in &[(0.3, 1e-5, 1e-5), (-2.0, 0.1, 0.05), (7.5, 1.0, 3.0)] {
            let f = FirstOrderFilter::new(tau, c).unwrap();
            assert_eq!(f.step(c, dt).unwrap().state(), c);
        }
    }

    #[test]
    fn unit_step_at_dt_equal_tau() {
        let tau = 1e-5;
        let f = FirstOrderFilter::new(tau, 0.0).unwrap().step(1.0, tau).unwrap();
        // amplification at dt/tau = 1 is 1 - 1 + 1/2 - 1/6 + 1/24 = 0.375
        approx::assert_relative_eq!(f.state(), 0.625, max_relative = 1e-12);
        let exact = 1.0 - (-1.0f64).exp();
        let err = (f.state() - exact).abs();
        assert!((err - 7.1205588e-3).abs() < 1e-9, "{err}");
    }

    #[test]
    fn decay_tracks_exponential() {
        let tau = 0.2;
        let dt = tau / 10.0;
        let mut f = FirstOrderFilter::new(tau, 1.0).unwrap();
        for n in 1..=200 {
            f = f.step(0.0, dt).unwrap();
            let exact = (-(n as f64) / 10.0).exp();
            // local error at dt/tau = 0.1 is 8.1964e-8
            assert!((f.state() - exact).abs() < 8.2e-8 * n as f64, "n={n}");
        }
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(FirstOrderFilter::new(0.0, 0.0).is_err());
        assert!(FirstOrderFilter::new(-1.0, 0.0).is_err());
        assert!(FirstOrderFilter::new(1.0, f64::INFINITY).is_err());
        let f = FirstOrderFilter::new(1.0, 0.0).unwrap();
        assert!(f.step(1.0, 0.0).is_err());
        assert!(f.step(f64::NAN, 0.1).is_err());
    }
}
