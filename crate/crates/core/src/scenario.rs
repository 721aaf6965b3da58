//! JSON scenario files and their validation into a runnable [`Scenario`].

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{BetaSchedule, ControllerConfig, SelectionPolicy};
use crate::lti::{zoh_discretize, ContinuousLinearModel, DiscreteLinearModel};
use crate::mpc::{ConstraintSet, MpcSpec, TerminalOptions};
use crate::netsim::{ConnectivitySchedule, NodeModel};
use crate::polytope::DEFAULT_MAX_ITER;
use crate::presets;
use crate::riccati::CostSpec;

/// Invalid scenario; `path` names the offending key (`a.b[2].c`).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "invalid scenario: {}", self.message)
        } else {
            write!(f, "invalid scenario at `{}`: {}", self.path, self.message)
        }
    }
}

fn cfg_err(path: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Already sampled at the scenario period.
    Discrete { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// Sampled with zero-order hold at the scenario period.
    Continuous { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    BallBeam {
        #[serde(default = "default_kv")]
        kv: f64,
        #[serde(default = "default_kphi")]
        kphi: f64,
    },
}

fn default_kv() -> f64 {
    presets::BALL_BEAM_KV
}

fn default_kphi() -> f64 {
    presets::BALL_BEAM_KPHI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

/// Box bounds plus optional general rows over `[x; u]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    /// `|x_i| ≤ b`; `null` leaves a state free. Empty means no state bounds.
    pub state_bounds: Vec<Option<f64>>,
    pub input_bounds: Vec<Option<f64>>,
    pub rows: Vec<Vec<f64>>,
    pub bounds: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Rows that shape the terminal set only.
    #[serde(default)]
    pub extra: Option<ConstraintConfig>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for TerminalConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            extra: None,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default = "presets::default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub policy: SelectionPolicy,
    #[serde(default)]
    pub beta: BetaSchedule,
    #[serde(default)]
    pub local_range: Option<f64>,
    #[serde(default)]
    pub position_index: usize,
    /// Issue requests from the initial state one period before the start.
    #[serde(default = "yes")]
    pub prime: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            horizons: presets::default_horizons(),
            policy: SelectionPolicy::default(),
            beta: BetaSchedule::default(),
            local_range: None,
            position_index: 0,
            prime: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub nodes: Vec<NodeModel>,
    pub loss_windows: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetpointValue {
    /// Position only; other components are zero.
    Position(f64),
    Full(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointStep {
    pub t: f64,
    pub value: SetpointValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Inclusive horizon ranges for usage accounting.
    #[serde(default = "default_buckets")]
    pub buckets: Vec<(usize, usize)>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { buckets: default_buckets() }
    }
}

pub fn default_buckets() -> Vec<(usize, usize)> {
    vec![(6, 10), (11, 15), (16, 22)]
}

fn default_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Model used by the controller and the MPC.
    pub model: ModelConfig,
    /// Plant model; defaults to `model`.
    #[serde(default)]
    pub truth_model: Option<ModelConfig>,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    pub cost: CostConfig,
    #[serde(default)]
    pub constraints: ConstraintConfig,
    #[serde(default)]
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub network: NetworkConfig,
    pub setpoints: Vec<SetpointStep>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

/// Validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dt: f64,
    pub cycles: usize,
    pub seed: u64,
    pub spec: MpcSpec,
    pub truth: DiscreteLinearModel,
    pub initial_state: DVector<f64>,
    pub controller: ControllerConfig,
    pub prime: bool,
    pub nodes: Vec<NodeModel>,
    pub schedule: ConnectivitySchedule,
    pub setpoints: Vec<(f64, DVector<f64>)>,
    pub buckets: Vec<(usize, usize)>,
    pub config: ScenarioConfig,
}

impl Scenario {
    /// Set-point in force at time `t` (the first step applies before its time).
    pub fn setpoint_at(&self, t: f64) -> &DVector<f64> {
        let idx = self
            .setpoints
            .iter()
            .rposition(|(ts, _)| *ts <= t + 1e-9)
            .unwrap_or(0);
        &self.setpoints[idx].1
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.seed = seed;
        s.config.seed = seed;
        s
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(path, e.into_inner())
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err("", format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)?.build()
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(cfg_err(format!("{path}[{i}]"), format!("expected {c} columns, found {}", row.len())));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(cfg_err(format!("{path}[{i}][{j}]"), "non-finite entry"));
        }
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ModelConfig {
    fn build(&self, path: &str, dt: f64) -> Result<DiscreteLinearModel, ConfigError> {
        let wrap = |e: crate::Error| cfg_err(path, e);
        match self {
            ModelConfig::Discrete { a, b } => {
                let a = matrix(&format!("{path}.a"), a)?;
                let b = matrix(&format!("{path}.b"), b)?;
                DiscreteLinearModel::new(a, b, dt).map_err(wrap)
            }
            ModelConfig::Continuous { a, b } => {
                let a = matrix(&format!("{path}.a"), a)?;
                let b = matrix(&format!("{path}.b"), b)?;
                let c = ContinuousLinearModel::new(a, b).map_err(wrap)?;
                zoh_discretize(&c, dt).map_err(wrap)
            }
            ModelConfig::BallBeam { kv, kphi } => {
                if !kv.is_finite() || !kphi.is_finite() {
                    return Err(cfg_err(path, "gains must be finite"));
                }
                zoh_discretize(&presets::ball_beam_continuous(*kv, *kphi), dt).map_err(wrap)
            }
        }
    }
}

impl ConstraintConfig {
    fn build(&self, path: &str, n: usize, m: usize) -> Result<ConstraintSet, ConfigError> {
        let mut state_bounds = self.state_bounds.clone();
        let mut input_bounds = self.input_bounds.clone();
        if state_bounds.is_empty() {
            state_bounds = vec![None; n];
        }
        if input_bounds.is_empty() {
            input_bounds = vec![None; m];
        }
        if state_bounds.len() != n {
            return Err(cfg_err(format!("{path}.state_bounds"), format!("expected {n} entries")));
        }
        if input_bounds.len() != m {
            return Err(cfg_err(format!("{path}.input_bounds"), format!("expected {m} entries")));
        }
        for (key, list) in [("state_bounds", &state_bounds), ("input_bounds", &input_bounds)] {
            if let Some(i) = list.iter().position(|b| b.is_some_and(|v| !(v > 0.0 && v.is_finite()))) {
                return Err(cfg_err(format!("{path}.{key}[{i}]"), "bound must be positive and finite"));
            }
        }
        let boxed = ConstraintSet::symmetric_bounds(&state_bounds, &input_bounds);
        let extra_rows = |rows: &[Vec<f64>], bounds: &[f64], key: &str, bkey: &str| -> Result<(DMatrix<f64>, DVector<f64>), ConfigError> {
            if rows.is_empty() && bounds.is_empty() {
                return Ok((DMatrix::zeros(0, n + m), DVector::zeros(0)));
            }
            let g = matrix(&format!("{path}.{key}"), rows)?;
            if g.ncols() != n + m {
                return Err(cfg_err(format!("{path}.{key}"), format!("rows need {} columns", n + m)));
            }
            if bounds.len() != g.nrows() {
                return Err(cfg_err(format!("{path}.{bkey}"), format!("expected {} entries", g.nrows())));
            }
            if let Some(i) = bounds.iter().position(|v| !v.is_finite()) {
                return Err(cfg_err(format!("{path}.{bkey}[{i}]"), "non-finite entry"));
            }
            Ok((g, DVector::from_column_slice(bounds)))
        };
        let (g, gb) = extra_rows(&self.rows, &self.bounds, "rows", "bounds")?;
        let (h, hb) = extra_rows(&self.eq_rows, &self.eq_bounds, "eq_rows", "eq_bounds")?;
        let ineq = stack(&boxed.ineq, &g);
        let ineq_bounds = DVector::from_iterator(ineq.nrows(), boxed.ineq_bounds.iter().chain(gb.iter()).copied());
        ConstraintSet::new(n, m, ineq, ineq_bounds, h, hb).map_err(|e| cfg_err(path, e))
    }
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(cfg_err("dt", "must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(cfg_err("duration", "must be positive"));
        }
        let cycles = (self.duration / self.dt).round() as usize;
        if cycles == 0 {
            return Err(cfg_err("duration", "shorter than one sampling period"));
        }
        let model = self.model.build("model", self.dt)?;
        let n = model.states();
        let m = model.inputs();
        let truth = match &self.truth_model {
            Some(t) => t.build("truth_model", self.dt)?,
            None => model.clone(),
        };
        if truth.states() != n || truth.inputs() != m {
            return Err(cfg_err("truth_model", format!("must have {n} states and {m} inputs like `model`")));
        }
        let initial_state = match &self.initial_state {
            Some(v) if v.len() != n => return Err(cfg_err("initial_state", format!("expected {n} entries"))),
            Some(v) if v.iter().any(|x| !x.is_finite()) => return Err(cfg_err("initial_state", "non-finite entry")),
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(n),
        };

        let q = matrix("cost.q", &self.cost.q)?;
        let r = matrix("cost.r", &self.cost.r)?;
        if q.shape() != (n, n) {
            return Err(cfg_err("cost.q", format!("expected {n}x{n}")));
        }
        if r.shape() != (m, m) {
            return Err(cfg_err("cost.r", format!("expected {m}x{m}")));
        }
        let cost = CostSpec::new(q, r).map_err(|e| cfg_err("cost", e))?;

        let constraints = self.constraints.build("constraints", n, m)?;
        let terminal = TerminalOptions {
            enabled: self.terminal.enabled,
            extra: self
                .terminal
                .extra
                .as_ref()
                .map(|c| c.build("terminal.extra", n, m))
                .transpose()?,
            max_iter: self.terminal.max_iter,
        };

        let c = &self.controller;
        if c.horizons.is_empty() {
            return Err(cfg_err("controller.horizons", "must not be empty"));
        }
        for (i, w) in c.horizons.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(cfg_err(format!("controller.horizons[{}]", i + 1), "horizons must be strictly ascending"));
            }
        }
        if c.horizons[0] == 0 {
            return Err(cfg_err("controller.horizons[0]", "horizon must be at least 1"));
        }
        if c.position_index >= n {
            return Err(cfg_err("controller.position_index", format!("must be below {n}")));
        }
        if let Some(r) = c.local_range {
            if !(r > 0.0 && r.is_finite()) {
                return Err(cfg_err("controller.local_range", "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&c.beta.min) {
            return Err(cfg_err("controller.beta.min", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&c.beta.rate) {
            return Err(cfg_err("controller.beta.rate", "must lie in [0, 1]"));
        }

        let spec = MpcSpec::new(model.clone(), cost, constraints, terminal, c.horizons.clone()).map_err(|e| cfg_err("model", e))?;
        let controller = ControllerConfig {
            model,
            k: spec.lqr.k.clone(),
            horizons: c.horizons.clone(),
            policy: c.policy,
            beta: c.beta,
            local_range: c.local_range,
            position_index: c.position_index,
        };

        for (i, node) in self.network.nodes.iter().enumerate() {
            node.latency
                .validate()
                .map_err(|e| cfg_err(format!("network.nodes[{i}].latency"), e))?;
        }
        for (i, &(s, e)) in self.network.loss_windows.iter().enumerate() {
            if !(s.is_finite() && e.is_finite() && e > s) {
                return Err(cfg_err(format!("network.loss_windows[{i}]"), "window must satisfy start < end"));
            }
            if i > 0 && s < self.network.loss_windows[i - 1].1 {
                return Err(cfg_err(format!("network.loss_windows[{i}]"), "windows must be ordered and non-overlapping"));
            }
        }
        let schedule = ConnectivitySchedule::new(self.network.loss_windows.clone()).map_err(|e| cfg_err("network.loss_windows", e))?;

        if self.setpoints.is_empty() {
            return Err(cfg_err("setpoints", "at least one step is required"));
        }
        let mut setpoints = Vec::with_capacity(self.setpoints.len());
        for (i, step) in self.setpoints.iter().enumerate() {
            if !step.t.is_finite() {
                return Err(cfg_err(format!("setpoints[{i}].t"), "must be finite"));
            }
            if i > 0 && step.t <= self.setpoints[i - 1].t {
                return Err(cfg_err(format!("setpoints[{i}].t"), "times must be strictly ascending"));
            }
            let value = match &step.value {
                SetpointValue::Position(p) => {
                    let mut v = DVector::zeros(n);
                    v[c.position_index] = *p;
                    v
                }
                SetpointValue::Full(v) if v.len() == n => DVector::from_column_slice(v),
                SetpointValue::Full(_) => return Err(cfg_err(format!("setpoints[{i}].value"), format!("expected a number or {n} entries"))),
            };
            if value.iter().any(|v| !v.is_finite()) {
                return Err(cfg_err(format!("setpoints[{i}].value"), "non-finite entry"));
            }
            setpoints.push((step.t, value));
        }

        for (i, &(lo, hi)) in self.metrics.buckets.iter().enumerate() {
            if lo > hi {
                return Err(cfg_err(format!("metrics.buckets[{i}]"), "lower edge above upper edge"));
            }
            if i > 0 && lo <= self.metrics.buckets[i - 1].1 {
                return Err(cfg_err(format!("metrics.buckets[{i}]"), "buckets must be ordered and disjoint"));
            }
        }

        Ok(Scenario {
            name: self.name.clone(),
            dt: self.dt,
            cycles,
            seed: self.seed,
            spec,
            truth,
            initial_state,
            controller,
            prime: c.prime,
            nodes: self.network.nodes.clone(),
            schedule,
            setpoints,
            buckets: self.metrics.buckets.clone(),
            config: self.clone(),
        })
    }
}
