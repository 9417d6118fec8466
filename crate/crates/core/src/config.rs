//! Run configuration files (TOML) and CSV traces.
//!
//! A configuration either names a built-in run (`builtin = "fig5"`) and
//! optionally overrides parts of it, or describes a run from scratch.
//! Weight and input indices are 1-based in files (`weight = 7` is `W7`) and
//! zero-based in the library API.
//!
//! ```toml
//! mode = "train"          # or "linsolve"
//! builtin = "fig4"        # optional starting point
//! output = "fig4.csv"     # optional trace path
//! decimate = 100          # keep every 100th iteration in the trace
//! tol = 0.01
//! horizon = 100000
//!
//! [controller]
//! kp = 1.0
//! ki = 0.01
//! k_alpha = 166.5
//! k_beta = 40.0
//! dt = 1e-5
//! decay_clock = "time"    # or "index"
//! psi0 = 0.0
//! stagger_rho = 1.0
//!
//! [filter]
//! tau = 1e-5
//!
//! [train]
//! x = [0.2, 0.6]
//! y_ref = 0.55
//! w_max = 1.0
//!
//! [[train.events]]
//! at = 0
//! kind = "drop_weight"
//! weight = 7
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerParams, DecayClock};
use crate::error::{Error, Result};
use crate::linsolve::{self, LinearRecord, LinearTrace, LinearTrackingProblem};
use crate::network::{Edge, FeedforwardNet, Node, NodeKind, TrainingSample};
use crate::trainer::{self, EventKind, Scenario, ScenarioEvent, TraceRecord};

pub const DEFAULT_DECIMATE: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Linsolve,
}

/// Linear demo description before the per-unknown gains are expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct LinsolveSetup {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub base_params: ControllerParams,
    pub stagger_rho: f64,
    pub tau: f64,
    pub horizon: u64,
}

impl LinsolveSetup {
    pub fn problem(&self) -> Result<LinearTrackingProblem> {
        LinearTrackingProblem::staggered(
            self.a.clone(),
            self.b.clone(),
            &self.base_params,
            self.stagger_rho,
            self.tau,
            self.horizon,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Train(Scenario),
    Linsolve(LinsolveSetup),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub output: Option<PathBuf>,
    pub decimate: usize,
    pub tol: f64,
}

impl RunConfig {
    pub fn mode(&self) -> Mode {
        match self.problem {
            Problem::Train(_) => Mode::Train,
            Problem::Linsolve(_) => Mode::Linsolve,
        }
    }

    pub fn name(&self) -> &str {
        match &self.problem {
            Problem::Train(s) => &s.name,
            Problem::Linsolve(l) => &l.name,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let problem = match name {
            "linsolve3" => Problem::Linsolve(linsolve3()),
            _ => Problem::Train(trainer::builtin_scenario(name)?),
        };
        Some(Self {
            problem,
            output: None,
            decimate: DEFAULT_DECIMATE,
            tol: DEFAULT_TOL,
        })
    }

    /// Renders a self-contained configuration that parses back to `self`.
    pub fn to_toml(&self) -> String {
        let raw = RawConfig::from_run(self);
        toml::to_string(&raw).expect("run configuration is always representable")
    }
}

/// Built-in runs in listing order with a short description.
pub const BUILTINS: &[(&str, &str)] = &[
    (
        "fig4",
        "Fig. 4: short-term behavior, W7 dropped, x = (0.2, 0.6), y_train = 0.55",
    ),
    (
        "fig5",
        "Fig. 5: training data changes x1 = 0.15, x2 = 0.7 at k1, then y_train = 0.6 at k2",
    ),
    ("fig6", "Fig. 6: topology change, W4 dropped at k1"),
    (
        "fig7",
        "Fig. 7: x1 = 0.15, x2 = 0.8 at k1, W7 dropped at k2, y_train = 0.6 at k3",
    ),
    (
        "linsolve3",
        "Fig. 2: three-unknown linear system solved with one controller per unknown",
    ),
];

fn linsolve3() -> LinsolveSetup {
    let (a, b) = linsolve::demo_system();
    LinsolveSetup {
        name: "linsolve3".into(),
        a,
        b,
        base_params: linsolve::demo_params(),
        stagger_rho: linsolve::DEMO_RHO,
        tau: linsolve::DEMO_TAU,
        horizon: linsolve::DEMO_HORIZON,
    }
}

/// Command-line style overrides applied on top of a file or builtin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub decimate: Option<usize>,
    pub tol: Option<f64>,
    pub horizon: Option<u64>,
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub k_alpha: Option<f64>,
    pub k_beta: Option<f64>,
    pub dt: Option<f64>,
    pub psi0: Option<f64>,
    pub stagger_rho: Option<f64>,
    pub tau: Option<f64>,
    pub decay_clock: Option<DecayClock>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decimate: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<i64>,
    #[serde(default)]
    controller: RawController,
    #[serde(default)]
    filter: RawFilter,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<RawTrain>,
    #[serde(skip_serializing_if = "Option::is_none")]
    linsolve: Option<RawLinsolve>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    #[serde(skip_serializing_if = "Option::is_none")]
    kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ki: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_clock: Option<DecayClock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stagger_rho: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w_max: Option<f64>,
    /// Initial weights, `W1` first.
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<RawNode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<RawEdge>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    events: Option<Vec<RawEvent>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    kind: NodeKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: String,
    to: String,
    weight: i64,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    enabled: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawEvent {
    SetInput { at: i64, input: i64, value: f64 },
    SetReference { at: i64, value: f64 },
    DropWeight { at: i64, weight: i64 },
    RestoreWeight { at: i64, weight: i64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinsolve {
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
}

/// Parses and validates a configuration file's contents.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &Overrides::default())
}

/// Like [`parse_config`], with `overrides` taking precedence over the file.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_at(text, s.start)),
        message: e.message().to_string(),
    })?;
    build(raw, overrides, Some(text))
}

/// Builtin `name` with `overrides` applied, validated as if it came from a file.
pub fn builtin_with(name: &str, overrides: &Overrides) -> Result<RunConfig> {
    let raw = RawConfig {
        builtin: Some(name.to_string()),
        ..Default::default()
    };
    build(raw, overrides, None)
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_with(&text, overrides)
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Locates `section.key` (or a top-level `key`) in the source text.
/// `[[array]]` sections match their `nth` occurrence.
fn locate(text: &str, section: &str, key: &str, nth: usize) -> Option<usize> {
    let mut current = String::new();
    let mut occurrence = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(h) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = h.trim().to_string();
            if current == section {
                occurrence += 1;
            }
            continue;
        }
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        if current != section || (occurrence > 0 && occurrence != nth + 1) {
            continue;
        }
        if key.is_empty() {
            return Some(i + 1);
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim() == key {
                return Some(i + 1);
            }
        }
    }
    None
}

struct Ctx<'a> {
    text: Option<&'a str>,
}

impl Ctx<'_> {
    fn fail(&self, key: &str, message: impl Into<String>) -> Error {
        let (section, leaf, nth) = split_key(key);
        let line = self
            .text
            .and_then(|t| locate(t, &section, &leaf, nth).or_else(|| locate(t, &section, "", nth)));
        Error::Validation {
            key: key.to_string(),
            line,
            message: message.into(),
        }
    }

    fn wrap(&self, key: &str, err: Error) -> Error {
        match err {
            Error::Validation { .. } => err,
            other => self.fail(key, other.to_string()),
        }
    }
}

/// `"train.events[2].weight"` -> (`"train.events"`, `"weight"`, 2).
fn split_key(key: &str) -> (String, String, usize) {
    let (path, leaf) = key.rsplit_once('.').unwrap_or(("", key));
    let mut nth = 0;
    let mut section = path.to_string();
    if let Some(open) = path.find('[') {
        nth = path[open + 1..].trim_end_matches(']').parse().unwrap_or(0);
        section = path[..open].to_string();
    }
    if leaf.ends_with(']') {
        // key names an element of a top-level array, e.g. "train.events[1]"
        let open = leaf.find('[').unwrap_or(leaf.len());
        let n = leaf[open + 1..].trim_end_matches(']').parse().unwrap_or(0);
        return (
            format!("{path}.{}", &leaf[..open]).trim_start_matches('.').to_string(),
            String::new(),
            n,
        );
    }
    (section, leaf.to_string(), nth)
}

fn to_u64(ctx: &Ctx, key: &str, v: i64) -> Result<u64> {
    u64::try_from(v).map_err(|_| ctx.fail(key, format!("must be non-negative, got {v}")))
}

fn one_based(ctx: &Ctx, key: &str, v: i64, len: usize) -> Result<usize> {
    if v >= 1 && (v as usize) <= len {
        Ok(v as usize - 1)
    } else {
        Err(ctx.fail(key, format!("index {v} out of range 1..={len} (indices are 1-based)")))
    }
}

fn build(mut raw: RawConfig, ov: &Overrides, text: Option<&str>) -> Result<RunConfig> {
    let ctx = Ctx { text };
    apply_overrides(&mut raw, ov);

    let base = match &raw.builtin {
        Some(name) => {
            Some(RunConfig::builtin(name).ok_or_else(|| ctx.fail("builtin", format!("unknown builtin `{name}`")))?)
        }
        None => None,
    };

    let mode = match (raw.mode, base.as_ref().map(RunConfig::mode)) {
        (Some(m), Some(b)) if m != b => {
            return Err(ctx.fail(
                "mode",
                format!("builtin `{}` is a {:?} run", raw.builtin.as_deref().unwrap_or(""), b),
            ))
        }
        (Some(m), _) => m,
        (None, Some(b)) => b,
        (None, None) if raw.linsolve.is_some() && raw.train.is_none() => Mode::Linsolve,
        (None, None) => Mode::Train,
    };
    if mode == Mode::Train && raw.linsolve.is_some() {
        return Err(ctx.fail("linsolve", "section is only valid in linsolve mode"));
    }
    if mode == Mode::Linsolve && raw.train.is_some() {
        return Err(ctx.fail("train", "section is only valid in train mode"));
    }

    let decimate = match raw.decimate {
        Some(d) if d >= 1 => d as usize,
        Some(d) => return Err(ctx.fail("decimate", format!("must be >= 1, got {d}"))),
        None => base.as_ref().map_or(DEFAULT_DECIMATE, |b| b.decimate),
    };
    let tol = raw.tol.or(base.as_ref().map(|b| b.tol)).unwrap_or(DEFAULT_TOL);
    if !(tol.is_finite() && tol > 0.0) {
        return Err(ctx.fail("tol", format!("must be > 0, got {tol}")));
    }
    let output = raw
        .output
        .clone()
        .or_else(|| base.as_ref().and_then(|b| b.output.clone()));

    let problem = match mode {
        Mode::Train => {
            let base = match base.map(|b| b.problem) {
                Some(Problem::Train(s)) => s,
                _ => blank_scenario(),
            };
            Problem::Train(build_scenario(&ctx, &raw, base)?)
        }
        Mode::Linsolve => {
            let base = match base.map(|b| b.problem) {
                Some(Problem::Linsolve(l)) => Some(l),
                _ => None,
            };
            Problem::Linsolve(build_linsolve(&ctx, &raw, base)?)
        }
    };

    Ok(RunConfig {
        problem,
        output,
        decimate,
        tol,
    })
}

fn apply_overrides(raw: &mut RawConfig, ov: &Overrides) {
    fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
        if v.is_some() {
            slot.clone_from(v);
        }
    }
    set(&mut raw.output, &ov.output);
    set(&mut raw.decimate, &ov.decimate.map(|d| d as i64));
    set(&mut raw.tol, &ov.tol);
    set(&mut raw.horizon, &ov.horizon.map(|h| h as i64));
    let c = &mut raw.controller;
    set(&mut c.kp, &ov.kp);
    set(&mut c.ki, &ov.ki);
    set(&mut c.k_alpha, &ov.k_alpha);
    set(&mut c.k_beta, &ov.k_beta);
    set(&mut c.dt, &ov.dt);
    set(&mut c.psi0, &ov.psi0);
    set(&mut c.stagger_rho, &ov.stagger_rho);
    set(&mut c.decay_clock, &ov.decay_clock);
    set(&mut raw.filter.tau, &ov.tau);
}

fn blank_scenario() -> Scenario {
    Scenario {
        name: "custom".into(),
        net: FeedforwardNet::default_topology(),
        base_params: ControllerParams::training_default(),
        stagger_rho: 1.0,
        tau: trainer::BUILTIN_TAU,
        psi0: 0.0,
        initial_sample: TrainingSample {
            x: vec![0.2, 0.6],
            y: 0.55,
        },
        events: Vec::new(),
        horizon: trainer::BUILTIN_HORIZON,
    }
}

fn merge_params(ctx: &Ctx, c: &RawController, base: ControllerParams) -> Result<ControllerParams> {
    let p = ControllerParams {
        kp: c.kp.unwrap_or(base.kp),
        ki: c.ki.unwrap_or(base.ki),
        k_alpha: c.k_alpha.unwrap_or(base.k_alpha),
        k_beta: c.k_beta.unwrap_or(base.k_beta),
        dt: c.dt.unwrap_or(base.dt),
        decay_clock: c.decay_clock.unwrap_or(base.decay_clock),
    };
    p.validate().map_err(|e| match e {
        Error::InvalidParams { field, reason } => ctx.fail(&format!("controller.{field}"), reason),
        other => other,
    })?;
    Ok(p)
}

fn check_rho(ctx: &Ctx, rho: f64) -> Result<f64> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(rho)
    } else {
        Err(ctx.fail("controller.stagger_rho", format!("must lie in (0, 1], got {rho}")))
    }
}

fn check_tau(ctx: &Ctx, tau: f64) -> Result<f64> {
    if tau.is_finite() && tau > 0.0 {
        Ok(tau)
    } else {
        Err(ctx.fail("filter.tau", format!("must be > 0, got {tau}")))
    }
}

fn build_scenario(ctx: &Ctx, raw: &RawConfig, base: Scenario) -> Result<Scenario> {
    let train = raw.train.clone().unwrap_or_default();
    let mut s = base;
    if let Some(name) = &raw.name {
        s.name = name.clone();
    }
    s.base_params = merge_params(ctx, &raw.controller, s.base_params)?;
    if let Some(rho) = raw.controller.stagger_rho {
        s.stagger_rho = check_rho(ctx, rho)?;
    }
    if let Some(psi0) = raw.controller.psi0 {
        if !psi0.is_finite() {
            return Err(ctx.fail("controller.psi0", "must be finite"));
        }
        s.psi0 = psi0;
    }
    if let Some(tau) = raw.filter.tau {
        s.tau = check_tau(ctx, tau)?;
    }
    if let Some(h) = raw.horizon {
        s.horizon = to_u64(ctx, "horizon", h)?;
        if s.horizon == 0 {
            return Err(ctx.fail("horizon", "must be >= 1"));
        }
    }

    match (&train.nodes, &train.edges) {
        (Some(nodes), Some(edges)) => {
            let w_max = train.w_max.unwrap_or(s.net.w_max());
            s.net = build_net(ctx, nodes, edges, w_max)?;
        }
        (None, None) => {
            if let Some(w_max) = train.w_max {
                s.net.set_w_max(w_max).map_err(|e| ctx.wrap("train.w_max", e))?;
            }
        }
        _ => return Err(ctx.fail("train.nodes", "`nodes` and `edges` must be given together")),
    }
    if let Some(weights) = &train.weights {
        if weights.len() != s.net.weight_count() {
            return Err(ctx.fail(
                "train.weights",
                format!("expected {} values, got {}", s.net.weight_count(), weights.len()),
            ));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w.abs() > s.net.w_max() {
                return Err(ctx.fail("train.weights", format!("W{} = {w} outside [-w_max, w_max]", i + 1)));
            }
            s.net.set_weight(i, w)?;
        }
    }

    if let Some(x) = &train.x {
        s.initial_sample.x = x.clone();
    }
    if let Some(y) = train.y_ref {
        s.initial_sample.y = y;
    }
    if s.initial_sample.x.len() != s.net.input_count() {
        return Err(ctx.fail(
            "train.x",
            format!(
                "expected {} inputs, got {}",
                s.net.input_count(),
                s.initial_sample.x.len()
            ),
        ));
    }
    if !s.initial_sample.x.iter().all(|v| v.is_finite()) {
        return Err(ctx.fail("train.x", "inputs must be finite"));
    }
    let y = s.initial_sample.y;
    if !(y.is_finite() && y.abs() < 1.0) {
        return Err(ctx.fail(
            "train.y_ref",
            format!("|y_ref| must be < 1 (bounded tanh output), got {y}"),
        ));
    }

    if let Some(events) = &train.events {
        s.events = events
            .iter()
            .enumerate()
            .map(|(i, e)| build_event(ctx, &s, i, e))
            .collect::<Result<_>>()?;
    }
    let mut prev = 0;
    for (i, e) in s.events.iter().enumerate() {
        if e.at < prev {
            return Err(ctx.fail(&format!("train.events[{i}].at"), "events must be sorted by iteration"));
        }
        if e.at > s.horizon {
            return Err(ctx.fail(
                &format!("train.events[{i}].at"),
                format!("iteration {} is beyond the horizon {}", e.at, s.horizon),
            ));
        }
        prev = e.at;
    }

    s.validate().map_err(|e| ctx.wrap("train", e))?;
    Ok(s)
}

fn build_net(ctx: &Ctx, nodes: &[RawNode], edges: &[RawEdge], w_max: f64) -> Result<FeedforwardNet> {
    let node_list: Vec<Node> = nodes.iter().map(|n| Node::new(n.id.clone(), n.kind)).collect();
    let find = |key: String, id: &str| {
        nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| ctx.fail(&key, format!("unknown node `{id}`")))
    };
    let mut edge_list = Vec::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        edge_list.push(Edge {
            from: find(format!("train.edges[{i}].from"), &e.from)?,
            to: find(format!("train.edges[{i}].to"), &e.to)?,
            weight: one_based(ctx, &format!("train.edges[{i}].weight"), e.weight, edges.len())?,
        });
    }
    let mut net = FeedforwardNet::new(node_list, edge_list.clone(), w_max).map_err(|e| ctx.wrap("train.edges", e))?;
    for (e, raw) in edge_list.iter().zip(edges) {
        net.set_mask(e.weight, raw.enabled)?;
    }
    Ok(net)
}

fn build_event(ctx: &Ctx, s: &Scenario, i: usize, e: &RawEvent) -> Result<ScenarioEvent> {
    let key = |leaf: &str| format!("train.events[{i}].{leaf}");
    let q = s.net.weight_count();
    let (at, kind) = match *e {
        RawEvent::SetInput { at, input, value } => {
            let index = one_based(ctx, &key("input"), input, s.net.input_count())?;
            if !value.is_finite() {
                return Err(ctx.fail(&key("value"), "must be finite"));
            }
            (at, EventKind::SetInput { index, value })
        }
        RawEvent::SetReference { at, value } => {
            if !(value.is_finite() && value.abs() < 1.0) {
                return Err(ctx.fail(&key("value"), format!("|y_ref| must be < 1, got {value}")));
            }
            (at, EventKind::SetReference { value })
        }
        RawEvent::DropWeight { at, weight } => (
            at,
            EventKind::DropWeight {
                index: one_based(ctx, &key("weight"), weight, q)?,
            },
        ),
        RawEvent::RestoreWeight { at, weight } => (
            at,
            EventKind::RestoreWeight {
                index: one_based(ctx, &key("weight"), weight, q)?,
            },
        ),
    };
    Ok(ScenarioEvent::new(to_u64(ctx, &key("at"), at)?, kind))
}

fn build_linsolve(ctx: &Ctx, raw: &RawConfig, base: Option<LinsolveSetup>) -> Result<LinsolveSetup> {
    let section = raw.linsolve.clone().unwrap_or_default();
    let (a, b) = match (&section.a, &section.b, &base) {
        (Some(a), Some(b), _) => (a.clone(), b.clone()),
        (a, b, Some(l)) => (
            a.clone().unwrap_or_else(|| l.a.clone()),
            b.clone().unwrap_or_else(|| l.b.clone()),
        ),
        (None, _, None) => return Err(ctx.fail("linsolve.a", "missing matrix")),
        (_, None, None) => return Err(ctx.fail("linsolve.b", "missing right-hand side")),
    };
    let n = b.len();
    if n == 0 {
        return Err(ctx.fail("linsolve.b", "empty system"));
    }
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(ctx.fail("linsolve.a", format!("must be a {n}x{n} matrix to match b")));
    }
    if !a.iter().flatten().chain(&b).all(|v| v.is_finite()) {
        return Err(ctx.fail("linsolve.a", "entries must be finite"));
    }
    if raw.controller.psi0.is_some() {
        return Err(ctx.fail("controller.psi0", "only supported in train mode"));
    }
    let defaults = base.unwrap_or_else(|| LinsolveSetup {
        name: "custom".into(),
        a: Vec::new(),
        b: Vec::new(),
        base_params: linsolve::demo_params(),
        stagger_rho: linsolve::DEMO_RHO,
        tau: linsolve::DEMO_TAU,
        horizon: linsolve::DEMO_HORIZON,
    });
    let horizon = match raw.horizon {
        Some(h) => to_u64(ctx, "horizon", h)?,
        None => defaults.horizon,
    };
    if horizon == 0 {
        return Err(ctx.fail("horizon", "must be >= 1"));
    }
    let setup = LinsolveSetup {
        name: raw.name.clone().unwrap_or(defaults.name),
        a,
        b,
        base_params: merge_params(ctx, &raw.controller, defaults.base_params)?,
        stagger_rho: check_rho(ctx, raw.controller.stagger_rho.unwrap_or(defaults.stagger_rho))?,
        tau: check_tau(ctx, raw.filter.tau.unwrap_or(defaults.tau))?,
        horizon,
    };
    setup.problem().map_err(|e| ctx.wrap("linsolve", e))?;
    Ok(setup)
}

impl RawConfig {
    fn from_run(run: &RunConfig) -> Self {
        let mut raw = RawConfig {
            mode: Some(run.mode()),
            name: Some(run.name().to_string()),
            output: run.output.clone(),
            decimate: Some(run.decimate as i64),
            tol: Some(run.tol),
            ..Default::default()
        };
        let (params, rho, tau, horizon) = match &run.problem {
            Problem::Train(s) => (s.base_params, s.stagger_rho, s.tau, s.horizon),
            Problem::Linsolve(l) => (l.base_params, l.stagger_rho, l.tau, l.horizon),
        };
        raw.horizon = Some(horizon as i64);
        raw.controller = RawController {
            kp: Some(params.kp),
            ki: Some(params.ki),
            k_alpha: Some(params.k_alpha),
            k_beta: Some(params.k_beta),
            dt: Some(params.dt),
            decay_clock: Some(params.decay_clock),
            psi0: None,
            stagger_rho: Some(rho),
        };
        raw.filter.tau = Some(tau);
        match &run.problem {
            Problem::Train(s) => {
                raw.controller.psi0 = Some(s.psi0);
                let net = &s.net;
                raw.train = Some(RawTrain {
                    x: Some(s.initial_sample.x.clone()),
                    y_ref: Some(s.initial_sample.y),
                    w_max: Some(net.w_max()),
                    weights: Some(net.weights().to_vec()),
                    nodes: Some(
                        net.nodes()
                            .iter()
                            .map(|n| RawNode {
                                id: n.id.clone(),
                                kind: n.kind,
                            })
                            .collect(),
                    ),
                    edges: Some(
                        net.edges()
                            .iter()
                            .map(|e| RawEdge {
                                from: net.nodes()[e.from].id.clone(),
                                to: net.nodes()[e.to].id.clone(),
                                weight: e.weight as i64 + 1,
                                enabled: net.mask()[e.weight],
                            })
                            .collect(),
                    ),
                    events: Some(s.events.iter().map(raw_event).collect()),
                });
            }
            Problem::Linsolve(l) => {
                raw.linsolve = Some(RawLinsolve {
                    a: Some(l.a.clone()),
                    b: Some(l.b.clone()),
                });
            }
        }
        raw
    }
}

fn raw_event(e: &ScenarioEvent) -> RawEvent {
    let at = e.at as i64;
    match e.kind {
        EventKind::SetInput { index, value } => RawEvent::SetInput {
            at,
            input: index as i64 + 1,
            value,
        },
        EventKind::SetReference { value } => RawEvent::SetReference { at, value },
        EventKind::DropWeight { index } => RawEvent::DropWeight {
            at,
            weight: index as i64 + 1,
        },
        EventKind::RestoreWeight { index } => RawEvent::RestoreWeight {
            at,
            weight: index as i64 + 1,
        },
    }
}

// ---------------------------------------------------------------------------
// Traces

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn train_header(q: usize) -> Vec<String> {
    let mut h: Vec<String> = ["k", "t", "y", "y_ref"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=q).map(|i| format!("w{i}")));
    h.extend((1..=q).map(|i| format!("u{i}")));
    h
}

pub fn linear_header(n: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    for prefix in ["y", "b", "x"] {
        h.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    h
}

/// Streams trace rows to a CSV file, keeping iterations divisible by the
/// decimation factor.
pub struct TraceWriter {
    inner: csv::Writer<BufWriter<File>>,
    path: PathBuf,
    decimate: u64,
}

impl TraceWriter {
    pub fn create(path: &Path, header: &[String], decimate: usize) -> Result<Self> {
        if decimate == 0 {
            return Err(Error::invalid("decimate", "must be >= 1"));
        }
        let file = File::create(path).map_err(io_err(path))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(header).map_err(csv_err(path))?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            decimate: decimate as u64,
        })
    }

    fn keep(&self, k: u64) -> bool {
        k.is_multiple_of(self.decimate)
    }

    pub fn write_train(&mut self, r: &TraceRecord) -> Result<()> {
        if !self.keep(r.k) {
            return Ok(());
        }
        let mut row = vec![r.k.to_string(), fmt_f64(r.t), fmt_f64(r.y), fmt_f64(r.y_ref)];
        row.extend(r.w.iter().chain(&r.u).map(|&v| fmt_f64(v)));
        self.inner.write_record(&row).map_err(csv_err(&self.path))
    }

    pub fn write_linear(&mut self, r: &LinearRecord, b: &[f64]) -> Result<()> {
        if !self.keep(r.k) {
            return Ok(());
        }
        let mut row = vec![r.k.to_string()];
        row.extend(r.y.iter().chain(b).chain(&r.x).map(|&v| fmt_f64(v)));
        self.inner.write_record(&row).map_err(csv_err(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(io_err(&self.path))
    }
}

/// Writes a training trace; `q` sizes the header when `records` is empty.
pub fn write_trace(records: &[TraceRecord], q: usize, path: &Path, decimate: usize) -> Result<()> {
    let mut w = TraceWriter::create(path, &train_header(q), decimate)?;
    for r in records {
        w.write_train(r)?;
    }
    w.finish()
}

pub fn write_linear_trace(trace: &LinearTrace, path: &Path, decimate: usize) -> Result<()> {
    let mut w = TraceWriter::create(path, &linear_header(trace.b.len()), decimate)?;
    for r in &trace.records {
        w.write_linear(r, &trace.b)?;
    }
    w.finish()
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = reader
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err(path))?;
    Ok((header, rows))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Trace(format!("bad number `{s}`")))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let (header, rows) = read_rows(path)?;
    if header.len() < 4 || (header.len() - 4) % 2 != 0 {
        return Err(Error::Trace(format!("unexpected column count {}", header.len())));
    }
    let q = (header.len() - 4) / 2;
    if header != train_header(q) {
        return Err(Error::Trace("header does not match k,t,y,y_ref,w..,u..".into()));
    }
    rows.iter()
        .map(|row| {
            let vals = row[1..].iter().map(|s| num::<f64>(s)).collect::<Result<Vec<_>>>()?;
            Ok(TraceRecord {
                k: num(&row[0])?,
                t: vals[0],
                y: vals[1],
                y_ref: vals[2],
                w: vals[3..3 + q].to_vec(),
                u: vals[3 + q..].to_vec(),
            })
        })
        .collect()
}

pub fn read_linear_trace(path: &Path) -> Result<LinearTrace> {
    let (header, rows) = read_rows(path)?;
    if header.is_empty() || (header.len() - 1) % 3 != 0 {
        return Err(Error::Trace(format!("unexpected column count {}", header.len())));
    }
    let n = (header.len() - 1) / 3;
    if header != linear_header(n) {
        return Err(Error::Trace("header does not match k,y..,b..,x..".into()));
    }
    let mut b = Vec::new();
    let records = rows
        .iter()
        .map(|row| {
            let vals = row[1..].iter().map(|s| num::<f64>(s)).collect::<Result<Vec<_>>>()?;
            b = vals[n..2 * n].to_vec();
            Ok(LinearRecord {
                k: num(&row[0])?,
                y: vals[..n].to_vec(),
                x: vals[2 * n..].to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearTrace { b, records })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_alias_equals_builtin() {
        for (name, _) in BUILTINS {
            let parsed = parse_config(&format!("builtin = \"{name}\"\n")).unwrap();
            assert_eq!(parsed, RunConfig::builtin(name).unwrap());
        }
        let fig4 = parse_config("builtin = \"fig4\"").unwrap();
        match fig4.problem {
            Problem::Train(s) => assert_eq!(s, trainer::builtin_scenarios()[0]),
            _ => panic!("fig4 is a training run"),
        }
    }

    #[test]
    fn negative_gain_is_a_validation_error_with_line() {
        let text = "builtin = \"fig4\"\n\n[controller]\nki = 0.01\nkp = -1\n";
        match parse_config(text) {
            Err(Error::Validation { key, line, message }) => {
                assert_eq!(key, "controller.kp");
                assert_eq!(line, Some(5));
                assert!(message.contains("positive"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "mode = \"train\"\n[controller\nkp = 1\n";
        match parse_config(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_config("bogus = 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_config("[controller]\nkp = \"x\""),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn semantic_violations() {
        let cases = [
            ("builtin = \"nope\"", "builtin"),
            ("builtin = \"fig4\"\ndecimate = 0", "decimate"),
            ("[train]\ny_ref = 1.0", "train.y_ref"),
            ("[train]\nx = [0.1]", "train.x"),
            (
                "horizon = 10\n[[train.events]]\nat = 11\nkind = \"drop_weight\"\nweight = 2",
                "train.events[0].at",
            ),
            (
                "[[train.events]]\nat = 1\nkind = \"drop_weight\"\nweight = 0",
                "train.events[0].weight",
            ),
            (
                "[[train.events]]\nat = 1\nkind = \"set_reference\"\nvalue = -1.2",
                "train.events[0].value",
            ),
            ("[controller]\nstagger_rho = 0", "controller.stagger_rho"),
            ("[filter]\ntau = 0", "filter.tau"),
            (
                "mode = \"linsolve\"\n[linsolve]\na = [[1.0, 2.0]]\nb = [1.0]",
                "linsolve.a",
            ),
            ("mode = \"linsolve\"", "linsolve.a"),
            ("builtin = \"linsolve3\"\nmode = \"train\"", "mode"),
            ("builtin = \"linsolve3\"\n[controller]\npsi0 = 1.0", "controller.psi0"),
        ];
        for (text, want) in cases {
            match parse_config(text) {
                Err(Error::Validation { key, .. }) => assert_eq!(key, want, "{text}"),
                other => panic!("{text}: expected validation error on {want}, got {other:?}"),
            }
        }
    }

    #[test]
    fn event_errors_point_at_their_block() {
        let text = "[[train.events]]\nat = 0\nkind = \"drop_weight\"\nweight = 7\n\n[[train.events]]\nat = 5\nkind = \"drop_weight\"\nweight = 9\n";
        match parse_config(text) {
            Err(Error::Validation { key, line, .. }) => {
                assert_eq!(key, "train.events[1].weight");
                assert_eq!(line, Some(9));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_topology_and_events() {
        let text = r#"
name = "tiny"
horizon = 2000

[train]
x = [0.5]
y_ref = 0.3
nodes = [{ id = "in", kind = "input" }, { id = "out", kind = "output" }]
edges = [{ from = "in", to = "out", weight = 1 }]

[[train.events]]
at = 1000
kind = "set_input"
input = 1
value = 0.4
"#;
        let cfg = parse_config(text).unwrap();
        let Problem::Train(s) = &cfg.problem else { panic!() };
        assert_eq!(s.name, "tiny");
        assert_eq!(s.net.weight_count(), 1);
        assert_eq!(
            s.events,
            [ScenarioEvent::new(1000, EventKind::SetInput { index: 0, value: 0.4 })]
        );
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn serialized_configs_reparse_equal() {
        for (name, _) in BUILTINS {
            let cfg = RunConfig::builtin(name).unwrap();
            let text = cfg.to_toml();
            assert_eq!(parse_config(&text).unwrap(), cfg, "{name}:\n{text}");
        }
    }

    #[test]
    fn overrides_match_edits() {
        let ov = Overrides {
            kp: Some(2.0),
            horizon: Some(5000),
            tau: Some(2e-5),
            ..Default::default()
        };
        let edit = "horizon = 5000\n[controller]\nkp = 2.0\n[filter]\ntau = 2e-5\n";
        let via_flag = builtin_with("fig4", &ov).unwrap();
        let edited = parse_config(&format!("builtin = \"fig4\"\n{edit}")).unwrap();
        assert_eq!(via_flag, edited);

        // fig5 schedules events past 5000 either way
        let via_flag = builtin_with("fig5", &ov).unwrap_err();
        let edited = parse_config(&format!("builtin = \"fig5\"\n{edit}")).unwrap_err();
        assert_eq!(via_flag.to_string(), edited.to_string().replace(" (line 2)", ""));
    }
}
