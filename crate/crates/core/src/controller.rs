//! Device-side dual-mode controller.
//!
//! Each cycle the controller applies an input for `x_k`, predicts `x_{k+1}`
//! with its nominal model and asks for MPC plans starting from that
//! prediction, so a whole sampling period is available for the remote solve.
//! Plans that arrive in time are applied directly (assisted mode). When none
//! arrive, the tail of the last plan is blended with the local LQR while β
//! grows (transition), and once the tail is used up the LQR runs alone
//! (local mode) on a set-point clamped to a safe range.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, value_err, Result};
use crate::lti::DiscreteLinearModel;
use crate::mpc::MpcPlan;
use crate::riccati::control_law;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Assisted,
    Transition,
    Local,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Assisted => "assisted",
            Mode::Transition => "transition",
            Mode::Local => "local",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    Shortest,
    Longest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcRequest {
    pub id: u64,
    /// Cycle whose state `x_pred` predicts.
    pub target_cycle: u64,
    pub x_pred: DVector<f64>,
    pub sp: DVector<f64>,
    pub horizon: usize,
    pub issue_time: f64,
    pub deadline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcResponse {
    pub request_id: u64,
    pub target_cycle: u64,
    pub horizon: usize,
    pub sp: DVector<f64>,
    pub plan: MpcPlan,
    pub completion_time: f64,
}

/// `β' = 1 − (1 − β)·rate` between response-less cycles, reset to `min` on
/// a fresh plan. `rate = 1` freezes β (pure open-loop replay), `rate = 0`
/// jumps straight to the LQR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSchedule {
    pub min: f64,
    pub rate: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self { min: 0.0, rate: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub model: DiscreteLinearModel,
    pub k: DMatrix<f64>,
    pub horizons: Vec<usize>,
    pub policy: SelectionPolicy,
    pub beta: BetaSchedule,
    /// Local-mode clamp on `|sp_pos − x_pos|`; `None` disables it.
    pub local_range: Option<f64>,
    pub position_index: usize,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.model.states();
        let m = self.model.inputs();
        if self.k.nrows() != m || self.k.ncols() != n {
            return Err(dim_err("controller gain", format!("{m}x{n}"), format!("{}x{}", self.k.nrows(), self.k.ncols())));
        }
        if self.position_index >= n {
            return Err(value_err("controller position index", "out of range"));
        }
        if !(0.0..=1.0).contains(&self.beta.min) || !(0.0..=1.0).contains(&self.beta.rate) {
            return Err(value_err("beta schedule", "min and rate must lie in [0, 1]"));
        }
        if let Some(r) = self.local_range {
            if r.is_nan() || r <= 0.0 {
                return Err(value_err("local set-point range", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub mode: Mode,
    pub beta: f64,
    buffer: Vec<DVector<f64>>,
    cursor: usize,
    buffer_sp: Option<DVector<f64>>,
    pub last_used_horizon: Option<usize>,
    /// Whether the most recent cycle applied a fresh plan.
    pub last_cycle_usable: bool,
    pub cycle: u64,
    next_id: u64,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            mode: Mode::Local,
            beta: 1.0,
            buffer: Vec::new(),
            cursor: 0,
            buffer_sp: None,
            last_used_horizon: None,
            last_cycle_usable: false,
            cycle: 0,
            next_id: 0,
        }
    }
}

impl ControllerState {
    pub fn buffered(&self) -> usize {
        self.buffer.len() - self.cursor
    }

    /// Builds a request toward `target_cycle` and assigns it a fresh id.
    pub fn request(&mut self, x_pred: DVector<f64>, sp: DVector<f64>, horizon: usize, issue_time: f64, dt: f64) -> MpcRequest {
        let id = self.next_id;
        self.next_id += 1;
        MpcRequest {
            id,
            target_cycle: self.cycle,
            x_pred,
            sp,
            horizon,
            issue_time,
            deadline: issue_time + dt,
        }
    }

    fn clear_buffer(&mut self) {
        self.buffer.clear();
        self.cursor = 0;
        self.buffer_sp = None;
    }
}

/// Feasible response with the shortest (or longest) horizon. Ties go to the
/// earliest completion, then the lowest request id.
pub fn select_response(responses: &[MpcResponse], policy: SelectionPolicy) -> Option<&MpcResponse> {
    let rank = |r: &MpcResponse| match policy {
        SelectionPolicy::Shortest => r.horizon as i64,
        SelectionPolicy::Longest => -(r.horizon as i64),
    };
    responses
        .iter()
        .filter(|r| r.plan.feasible && !r.plan.inputs.is_empty())
        .min_by(|a, b| {
            rank(a)
                .cmp(&rank(b))
                .then(a.completion_time.total_cmp(&b.completion_time))
                .then(a.request_id.cmp(&b.request_id))
        })
}

/// `β·u_local + (1 − β)·u_remote`.
pub fn blend(beta: f64, u_local: &DVector<f64>, u_remote: &DVector<f64>) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(value_err("blend", format!("beta {beta} outside [0, 1]")));
    }
    if u_local.len() != u_remote.len() {
        return Err(dim_err("blend", u_local.len(), u_remote.len()));
    }
    Ok(u_local * beta + u_remote * (1.0 - beta))
}

pub fn update_beta(beta: f64, schedule: &BetaSchedule, fresh_response: bool, buffer_left: usize) -> f64 {
    if fresh_response {
        schedule.min
    } else if buffer_left == 0 {
        1.0
    } else {
        1.0 - (1.0 - beta) * schedule.rate
    }
}

/// Clamps the position component of `sp` to within `range` of `x`.
pub fn local_setpoint_limit(sp: &DVector<f64>, x: &DVector<f64>, range: f64, position_index: usize) -> DVector<f64> {
    let mut out = sp.clone();
    let p = x[position_index];
    out[position_index] = sp[position_index].clamp(p - range, p + range);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub u: DVector<f64>,
    pub mode: Mode,
    /// β used for this cycle's input.
    pub beta: f64,
    pub selected_horizon: Option<usize>,
    pub sp_eff: DVector<f64>,
    pub x_pred: DVector<f64>,
    /// One request per configured horizon, toward cycle `k + 1`.
    pub requests: Vec<MpcRequest>,
}

/// Advances the controller by one sample. `responses` are the plans that
/// arrived before this cycle's deadline.
pub fn controller_step(
    cfg: &ControllerConfig,
    state: &mut ControllerState,
    x: &DVector<f64>,
    sp: &DVector<f64>,
    responses: &[MpcResponse],
    now: f64,
) -> Result<StepOutput> {
    let n = cfg.model.states();
    if x.len() != n || sp.len() != n {
        return Err(dim_err("controller_step", n, format!("x {} / sp {}", x.len(), sp.len())));
    }
    let current: Vec<MpcResponse> = responses.iter().filter(|r| r.target_cycle == state.cycle).cloned().collect();
    let selected = select_response(&current, cfg.policy);

    if let (Some(limit), Some(bsp)) = (cfg.local_range, &state.buffer_sp) {
        if (bsp[cfg.position_index] - sp[cfg.position_index]).abs() > limit {
            state.clear_buffer();
        }
    } else if cfg.local_range.is_none() && state.buffer_sp.as_ref().is_some_and(|b| b != sp) {
        state.clear_buffer();
    }

    let local_sp = match cfg.local_range {
        Some(r) => local_setpoint_limit(sp, x, r, cfg.position_index),
        None => sp.clone(),
    };

    let (u, mode, beta_used, selected_horizon, sp_eff) = if let Some(r) = selected {
        let plan = &r.plan;
        state.buffer = plan.inputs[1..].to_vec();
        state.cursor = 0;
        state.buffer_sp = Some(r.sp.clone());
        state.beta = update_beta(state.beta, &cfg.beta, true, state.buffered());
        state.last_used_horizon = Some(r.horizon);
        state.last_cycle_usable = true;
        (plan.inputs[0].clone(), Mode::Assisted, state.beta, Some(r.horizon), r.sp.clone())
    } else if state.buffered() > 0 {
        let remote = state.buffer[state.cursor].clone();
        state.cursor += 1;
        let local = control_law(&cfg.k, &local_sp, x)?;
        let beta = state.beta;
        let u = blend(beta, &local, &remote)?;
        state.beta = update_beta(beta, &cfg.beta, false, state.buffered());
        if state.buffered() == 0 {
            state.clear_buffer();
        }
        state.last_cycle_usable = false;
        (u, Mode::Transition, beta, None, local_sp)
    } else {
        state.clear_buffer();
        state.beta = 1.0;
        state.last_cycle_usable = false;
        (control_law(&cfg.k, &local_sp, x)?, Mode::Local, 1.0, None, local_sp)
    };
    state.mode = mode;

    let x_pred = cfg.model.step(x, &u)?;
    state.cycle += 1;
    let dt = cfg.model.dt;
    let requests = cfg
        .horizons
        .iter()
        .map(|&h| state.request(x_pred.clone(), sp.clone(), h, now, dt))
        .collect();
    Ok(StepOutput {
        u,
        mode,
        beta: beta_used,
        selected_horizon,
        sp_eff,
        x_pred,
        requests,
    })
}

/// Requests for cycle 0 issued one period before the start, from `x0`.
pub fn prime_requests(cfg: &ControllerConfig, state: &mut ControllerState, x0: &DVector<f64>, sp: &DVector<f64>, start: f64) -> Vec<MpcRequest> {
    let dt = cfg.model.dt;
    cfg.horizons
        .iter()
        .map(|&h| state.request(x0.clone(), sp.clone(), h, start - dt, dt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::QpStatus;

    fn plan(h: usize, feasible: bool, inputs: &[f64]) -> MpcPlan {
        MpcPlan {
            horizon: h,
            inputs: inputs.iter().map(|&u| DVector::from_element(1, u)).collect(),
            states: Vec::new(),
            feasible,
            status: if feasible { QpStatus::Optimal } else { QpStatus::Infeasible },
            iterations: 1,
            objective: 0.0,
        }
    }

    fn response(id: u64, h: usize, feasible: bool, inputs: &[f64]) -> MpcResponse {
        MpcResponse {
            request_id: id,
            target_cycle: 0,
            horizon: h,
            sp: DVector::zeros(2),
            plan: plan(h, feasible, inputs),
            completion_time: 0.01,
        }
    }

    fn config() -> ControllerConfig {
        ControllerConfig {
            model: crate::presets::example_model(),
            k: DMatrix::from_row_slice(1, 2, &[1.6478, 11.8344]),
            horizons: vec![5, 10],
            policy: SelectionPolicy::Shortest,
            beta: BetaSchedule::default(),
            local_range: None,
            position_index: 0,
        }
    }

    #[test]
    fn selection() {
        let rs = vec![response(0, 13, true, &[1.0]), response(1, 8, true, &[2.0])];
        assert_eq!(select_response(&rs, SelectionPolicy::Shortest).unwrap().horizon, 8);
        assert_eq!(select_response(&rs, SelectionPolicy::Longest).unwrap().horizon, 13);
        assert!(select_response(&[], SelectionPolicy::Shortest).is_none());
        let rs = vec![response(0, 5, false, &[]), response(1, 10, true, &[0.0])];
        assert_eq!(select_response(&rs, SelectionPolicy::Shortest).unwrap().horizon, 10);
    }

    #[test]
    fn blend_values() {
        let l = DVector::from_element(1, 2.0);
        let r = DVector::from_element(1, 0.0);
        assert_eq!(blend(1.0, &l, &r).unwrap(), l);
        assert_eq!(blend(0.0, &l, &r).unwrap(), r);
        assert_eq!(blend(0.5, &l, &r).unwrap()[0], 1.0);
        assert!(blend(1.5, &l, &r).is_err());
        assert!(blend(-0.1, &l, &r).is_err());
    }

    #[test]
    fn beta_recursion() {
        let s = BetaSchedule::default();
        assert_eq!(update_beta(0.7, &s, true, 3), 0.0);
        let mut b = 0.0;
        let mut seen = Vec::new();
        for _ in 0..3 {
            b = update_beta(b, &s, false, 5);
            seen.push(b);
        }
        assert_eq!(seen, vec![0.5, 0.75, 0.875]);
        assert_eq!(update_beta(0.2, &s, false, 0), 1.0);
    }

    #[test]
    fn setpoint_clamp() {
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let sp = DVector::from_vec(vec![0.52, 0.0]);
        assert!((local_setpoint_limit(&sp, &x, 0.4, 0)[0] - 0.4).abs() < 1e-15);
        let x = DVector::from_vec(vec![0.3, 0.0]);
        let sp = DVector::from_vec(vec![-0.52, 0.0]);
        assert!((local_setpoint_limit(&sp, &x, 0.4, 0)[0] + 0.1).abs() < 1e-12);
        let sp = DVector::from_vec(vec![0.5, 0.0]);
        assert_eq!(local_setpoint_limit(&sp, &x, 0.4, 0), sp);
    }

    #[test]
    fn assisted_transition_local() {
        let cfg = config();
        let mut st = ControllerState::default();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let sp = DVector::zeros(2);
        let out = controller_step(&cfg, &mut st, &x, &sp, &[response(0, 3, true, &[0.3, -0.2, 0.1])], 0.0).unwrap();
        assert_eq!(out.u[0], 0.3);
        assert_eq!(out.mode, Mode::Assisted);
        assert_eq!(out.requests.len(), 2);
        assert!(out.requests.iter().all(|r| r.target_cycle == 1 && (r.deadline - 0.05).abs() < 1e-15));

        let out = controller_step(&cfg, &mut st, &x, &sp, &[], 0.05).unwrap();
        assert_eq!(out.mode, Mode::Transition);
        assert_eq!(out.beta, 0.0);
        assert_eq!(out.u[0], -0.2);
        let out = controller_step(&cfg, &mut st, &x, &sp, &[], 0.1).unwrap();
        assert_eq!(out.mode, Mode::Transition);
        assert_eq!(out.beta, 0.5);
        let lqr = -1.6478;
        assert!((out.u[0] - (0.5 * lqr + 0.05)).abs() < 1e-12);
        let out = controller_step(&cfg, &mut st, &x, &sp, &[], 0.15).unwrap();
        assert_eq!(out.mode, Mode::Local);
        assert_eq!(out.beta, 1.0);
        assert!((out.u[0] - lqr).abs() < 1e-12);
    }

    #[test]
    fn stale_responses_ignored() {
        let cfg = config();
        let mut st = ControllerState {
            cycle: 4,
            ..Default::default()
        };
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let out = controller_step(&cfg, &mut st, &x, &DVector::zeros(2), &[response(0, 3, true, &[9.0])], 0.0).unwrap();
        assert_eq!(out.mode, Mode::Local);
    }

    #[test]
    fn large_setpoint_change_drops_buffer() {
        let mut cfg = config();
        cfg.local_range = Some(0.4);
        let mut st = ControllerState::default();
        let x = DVector::from_vec(vec![0.0, 0.0]);
        controller_step(&cfg, &mut st, &x, &DVector::zeros(2), &[response(0, 4, true, &[0.0, 0.1, 0.1, 0.1])], 0.0).unwrap();
        let out = controller_step(&cfg, &mut st, &x, &DVector::from_vec(vec![0.2, 0.0]), &[], 0.05).unwrap();
        assert_eq!(out.mode, Mode::Transition);
        let out = controller_step(&cfg, &mut st, &x, &DVector::from_vec(vec![1.0, 0.0]), &[], 0.1).unwrap();
        assert_eq!(out.mode, Mode::Local);
        assert!((out.sp_eff[0] - 0.4).abs() < 1e-15);
    }
}
