//! Online weight tuning: one controller and one filter per synaptic weight.
//!
//! All controllers see the same pair `(y_train, y)` and differ only by their
//! gains. Each iteration runs, in order: scheduled events, measurement of the
//! network output, controller and filter steps for every enabled weight,
//! clamping to `[-w_max, w_max]`, and emission of a [`TraceRecord`].

use crate::controller::{ControllerParams, ControllerState};
use crate::dynamics::FirstOrderFilter;
use crate::error::{Error, Result};
use crate::linsolve::stagger_params;
use crate::network::{FeedforwardNet, TrainingSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    SetInput { index: usize, value: f64 },
    SetReference { value: f64 },
    DropWeight { index: usize },
    RestoreWeight { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioEvent {
    /// Iteration at which the event fires, before that iteration's
    /// measurement. `at = 0` applies to the initial configuration.
    pub at: u64,
    pub kind: EventKind,
}

impl ScenarioEvent {
    pub fn new(at: u64, kind: EventKind) -> Self {
        Self { at, kind }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub net: FeedforwardNet,
    pub base_params: ControllerParams,
    pub stagger_rho: f64,
    pub tau: f64,
    /// Initial value of every controller's `psi`.
    pub psi0: f64,
    pub initial_sample: TrainingSample,
    pub events: Vec<ScenarioEvent>,
    pub horizon: u64,
}

impl Scenario {
    pub fn w_max(&self) -> f64 {
        self.net.w_max()
    }

    pub fn validate(&self) -> Result<()> {
        self.base_params.validate()?;
        stagger_params(&self.base_params, 1, self.stagger_rho)?;
        FirstOrderFilter::new(self.tau, 0.0)?;
        if !self.psi0.is_finite() {
            return Err(Error::invalid("psi0", "must be finite"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        self.initial_sample.validate()?;
        if self.initial_sample.x.len() != self.net.input_count() {
            return Err(Error::DimensionMismatch {
                expected: self.net.input_count(),
                got: self.initial_sample.x.len(),
            });
        }
        check_reference(self.initial_sample.y)?;
        let mut prev = 0;
        for (i, ev) in self.events.iter().enumerate() {
            if ev.at < prev {
                return Err(Error::InvalidEvent(format!(
                    "event {i} is out of order (at = {})",
                    ev.at
                )));
            }
            if ev.at > self.horizon {
                return Err(Error::InvalidEvent(format!(
                    "event {i} at {} is beyond the horizon {}",
                    ev.at, self.horizon
                )));
            }
            prev = ev.at;
            check_event(&self.net, &ev.kind)?;
        }
        Ok(())
    }

    /// Iterations at which the active sample or topology changes, excluding 0.
    pub fn event_iterations(&self) -> Vec<u64> {
        let mut ks: Vec<u64> = self.events.iter().map(|e| e.at).filter(|&k| k > 0).collect();
        ks.dedup();
        ks
    }
}

fn check_reference(y: f64) -> Result<()> {
    if y.is_finite() && y.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEvent(format!(
            "reference {y} is unreachable: the output node is bounded by (-1, 1)"
        )))
    }
}

fn check_event(net: &FeedforwardNet, kind: &EventKind) -> Result<()> {
    match *kind {
        EventKind::SetInput { index, value } => {
            if index >= net.input_count() {
                return Err(Error::InvalidEvent(format!(
                    "input index {index} out of range for {} inputs",
                    net.input_count()
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidEvent("input value must be finite".into()));
            }
        }
        EventKind::SetReference { value } => check_reference(value)?,
        EventKind::DropWeight { index } | EventKind::RestoreWeight { index } => {
            if index >= net.weight_count() {
                return Err(Error::InvalidEvent(format!(
                    "weight index {index} out of range for {} weights",
                    net.weight_count()
                )));
            }
        }
    }
    Ok(())
}

/// Observable state after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub t: f64,
    /// Network output evaluated with the weights in `w`.
    pub y: f64,
    pub y_ref: f64,
    /// Post-filter, post-clamp weights.
    pub w: Vec<f64>,
    /// Raw controller outputs; 0 for dropped weights.
    pub u: Vec<f64>,
}

/// Stateful closed loop; [`train_online`] drives one to the horizon.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: FeedforwardNet,
    sample: TrainingSample,
    params: Vec<ControllerParams>,
    controllers: Vec<ControllerState>,
    filters: Vec<FirstOrderFilter>,
    events: Vec<ScenarioEvent>,
    next_event: usize,
    horizon: u64,
    k: u64,
}

impl Trainer {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let q = scenario.net.weight_count();
        let params = stagger_params(&scenario.base_params, q.max(1), scenario.stagger_rho)?;
        let controllers = params
            .iter()
            .map(|p| ControllerState::new(p, scenario.psi0, 0.0))
            .collect::<Result<Vec<_>>>()?;
        let filters = scenario
            .net
            .weights()
            .iter()
            .map(|&w| FirstOrderFilter::new(scenario.tau, w))
            .collect::<Result<Vec<_>>>()?;
        let mut trainer = Self {
            net: scenario.net.clone(),
            sample: scenario.initial_sample.clone(),
            params,
            controllers,
            filters,
            events: scenario.events.clone(),
            next_event: 0,
            horizon: scenario.horizon,
            k: 0,
        };
        for i in 0..q {
            if !trainer.net.mask()[i] {
                trainer.net.set_weight(i, 0.0)?;
            }
        }
        trainer.apply_due_events()?;
        Ok(trainer)
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn is_finished(&self) -> bool {
        self.k >= self.horizon
    }

    pub fn net(&self) -> &FeedforwardNet {
        &self.net
    }

    pub fn sample(&self) -> &TrainingSample {
        &self.sample
    }

    pub fn controllers(&self) -> &[ControllerState] {
        &self.controllers
    }

    pub fn filters(&self) -> &[FirstOrderFilter] {
        &self.filters
    }

    pub fn dt(&self) -> f64 {
        self.params[0].dt
    }

    fn apply_due_events(&mut self) -> Result<()> {
        while let Some(ev) = self.events.get(self.next_event).copied() {
            if ev.at > self.k {
                break;
            }
            self.apply_event(&ev.kind)?;
            self.next_event += 1;
        }
        Ok(())
    }

    /// Applies an event immediately.
    ///
    /// Dropping a weight masks its edge, zeroes it and freezes its controller
    /// and filter. Restoring unmasks the edge and reinstates the frozen
    /// filter output.
    pub fn apply_event(&mut self, kind: &EventKind) -> Result<()> {
        check_event(&self.net, kind)?;
        match *kind {
            EventKind::SetInput { index, value } => self.sample.x[index] = value,
            EventKind::SetReference { value } => self.sample.y = value,
            EventKind::DropWeight { index } => {
                self.net.set_mask(index, false)?;
                self.net.set_weight(index, 0.0)?;
            }
            EventKind::RestoreWeight { index } => {
                self.net.set_mask(index, true)?;
                self.net.set_weight(index, self.filters[index].state())?;
            }
        }
        Ok(())
    }

    /// Runs one iteration. Calling past the horizon keeps going; the horizon
    /// only bounds [`train_online`] and the scheduled events.
    pub fn step(&mut self) -> Result<TraceRecord> {
        self.k += 1;
        let k = self.k;
        self.apply_due_events()?;

        let y_ref = self.sample.y;
        let y = self.net.forward(&self.sample.x)?;
        if !y.is_finite() {
            return Err(Error::diverged(k, "y"));
        }

        let q = self.net.weight_count();
        let mut u = vec![0.0; q];
        for (i, slot) in u.iter_mut().enumerate() {
            if !self.net.mask()[i] {
                continue;
            }
            let params = &self.params[i];
            let (state, ui) = self.controllers[i]
                .step(params, y_ref, y)
                .map_err(|e| relabel(e, k, i))?;
            let filter = self.filters[i].step(ui, params.dt).map_err(|e| relabel(e, k, i))?;
            self.controllers[i] = state;
            self.filters[i] = filter;
            self.net.set_weight(i, filter.state())?;
            *slot = ui;
        }

        let y = self.net.forward(&self.sample.x)?;
        Ok(TraceRecord {
            k,
            t: k as f64 * self.dt(),
            y,
            y_ref,
            w: self.net.weights().to_vec(),
            u,
        })
    }
}

fn relabel(err: Error, k: u64, weight: usize) -> Error {
    match err {
        Error::Divergence { what, .. } => Error::Divergence {
            iteration: k,
            what: format!("{what} of weight w{}", weight + 1),
        },
        other => other,
    }
}

/// Runs a scenario from iteration 1 through its horizon.
pub fn train_online(scenario: &Scenario) -> Result<Vec<TraceRecord>> {
    let mut trainer = Trainer::new(scenario)?;
    let mut out = Vec::with_capacity(scenario.horizon as usize);
    while !trainer.is_finished() {
        out.push(trainer.step()?);
    }
    Ok(out)
}

/// Tracking quality between two consecutive events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Iteration of the event that opened the segment (0 for the start).
    pub start: u64,
    /// Last iteration of the segment.
    pub end: u64,
    /// First iteration from which `|y - y_ref| < tol` holds through `end`.
    pub settled_at: Option<u64>,
}

impl Segment {
    /// Iterations needed to re-enter the tolerance band after `start`.
    pub fn settling_time(&self) -> Option<u64> {
        self.settled_at.map(|s| s - self.start)
    }
}

/// Splits a trace at the scenario's event iterations and measures settling
/// in each part.
pub fn segments(records: &[TraceRecord], event_iterations: &[u64], tol: f64) -> Vec<Segment> {
    let Some(last) = records.last() else {
        return Vec::new();
    };
    let mut bounds = vec![0];
    bounds.extend(event_iterations.iter().copied().filter(|&k| k > 0 && k <= last.k));
    bounds.dedup();
    let mut out = Vec::with_capacity(bounds.len());
    for (i, &start) in bounds.iter().enumerate() {
        let end = bounds.get(i + 1).map_or(last.k, |&next| next - 1);
        let mut settled_at = None;
        for r in records.iter().filter(|r| r.k >= start.max(1) && r.k <= end) {
            if (r.y - r.y_ref).abs() < tol {
                settled_at.get_or_insert(r.k);
            } else {
                settled_at = None;
            }
        }
        out.push(Segment { start, end, settled_at });
    }
    out
}

/// Iteration of the events in the built-in scenarios: each one fires well
/// after the previous transient has settled.
pub const EVENT_K1: u64 = 25_000;
pub const EVENT_K2: u64 = 50_000;
pub const EVENT_K3: u64 = 75_000;
pub const BUILTIN_HORIZON: u64 = 100_000;
pub const BUILTIN_TAU: f64 = 1e-5;

fn builtin_base(name: &str, events: Vec<ScenarioEvent>) -> Scenario {
    Scenario {
        name: name.to_string(),
        net: FeedforwardNet::default_topology(),
        base_params: ControllerParams::training_default(),
        stagger_rho: 1.0,
        tau: BUILTIN_TAU,
        psi0: 0.0,
        initial_sample: TrainingSample {
            x: vec![0.2, 0.6],
            y: 0.55,
        },
        events,
        horizon: BUILTIN_HORIZON,
    }
}

/// The four training scenarios: `fig4`, `fig5`, `fig6`, `fig7`.
pub fn builtin_scenarios() -> Vec<Scenario> {
    use EventKind::*;
    let ev = ScenarioEvent::new;
    let drop_w7 = ev(0, DropWeight { index: 6 });
    vec![
        builtin_base("fig4", vec![drop_w7]),
        builtin_base(
            "fig5",
            vec![
                drop_w7,
                ev(EVENT_K1, SetInput { index: 0, value: 0.15 }),
                ev(EVENT_K1, SetInput { index: 1, value: 0.7 }),
                ev(EVENT_K2, SetReference { value: 0.6 }),
            ],
        ),
        builtin_base("fig6", vec![drop_w7, ev(EVENT_K1, DropWeight { index: 3 })]),
        builtin_base(
            "fig7",
            vec![
                ev(EVENT_K1, SetInput { index: 0, value: 0.15 }),
                ev(EVENT_K1, SetInput { index: 1, value: 0.8 }),
                ev(EVENT_K2, DropWeight { index: 6 }),
                ev(EVENT_K3, SetReference { value: 0.6 }),
            ],
        ),
    ]
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
