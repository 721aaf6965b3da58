//! Finite-horizon MPC condensed into a dense QP over the input sequence.
//!
//! Everything is solved in error coordinates `e = x − sp`; constraint bounds
//! are shifted by the set-point, which assumes `(sp, u = 0)` is an
//! equilibrium of the model. The terminal cost is the Riccati solution and,
//! when enabled, the terminal state must land in the maximal invariant set of
//! the LQR closed loop for the shifted constraints.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, value_err, Error, Result};
use crate::lti::DiscreteLinearModel;
use crate::polytope::{maximal_invariant_set, Polytope, DEFAULT_MAX_ITER};
use crate::qp::{solve_qp_warm, QpProblem, QpStatus, WarmStart};
use crate::riccati::{control_law, solve_dare, CostSpec, LqrSolution};

/// `G·[x; u] ≤ g` and `H·[x; u] = h`, applied at every prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    states: usize,
    inputs: usize,
    pub ineq: DMatrix<f64>,
    pub ineq_bounds: DVector<f64>,
    pub eq: DMatrix<f64>,
    pub eq_bounds: DVector<f64>,
}

impl ConstraintSet {
    pub fn new(
        states: usize,
        inputs: usize,
        ineq: DMatrix<f64>,
        ineq_bounds: DVector<f64>,
        eq: DMatrix<f64>,
        eq_bounds: DVector<f64>,
    ) -> Result<Self> {
        let cols = states + inputs;
        if ineq.ncols() != cols || ineq.nrows() != ineq_bounds.len() {
            return Err(dim_err("constraint set G", format!("rows x {cols}"), format!("{}x{} / {}", ineq.nrows(), ineq.ncols(), ineq_bounds.len())));
        }
        if eq.ncols() != cols || eq.nrows() != eq_bounds.len() {
            return Err(dim_err("constraint set H", format!("rows x {cols}"), format!("{}x{} / {}", eq.nrows(), eq.ncols(), eq_bounds.len())));
        }
        if ineq.iter().chain(ineq_bounds.iter()).chain(eq.iter()).chain(eq_bounds.iter()).any(|v| !v.is_finite()) {
            return Err(value_err("constraint set", "non-finite entry"));
        }
        Ok(Self {
            states,
            inputs,
            ineq,
            ineq_bounds,
            eq,
            eq_bounds,
        })
    }

    pub fn inequalities(states: usize, inputs: usize, ineq: DMatrix<f64>, ineq_bounds: DVector<f64>) -> Result<Self> {
        Self::new(states, inputs, ineq, ineq_bounds, DMatrix::zeros(0, states + inputs), DVector::zeros(0))
    }

    pub fn unconstrained(states: usize, inputs: usize) -> Self {
        Self {
            states,
            inputs,
            ineq: DMatrix::zeros(0, states + inputs),
            ineq_bounds: DVector::zeros(0),
            eq: DMatrix::zeros(0, states + inputs),
            eq_bounds: DVector::zeros(0),
        }
    }

    /// Symmetric bounds `|x_i| ≤ sx_i`, `|u_j| ≤ su_j`; `None` leaves a
    /// coordinate free.
    pub fn symmetric_bounds(state_bounds: &[Option<f64>], input_bounds: &[Option<f64>]) -> Self {
        let n = state_bounds.len();
        let m = input_bounds.len();
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut rhs = Vec::new();
        for (i, b) in state_bounds.iter().chain(input_bounds.iter()).enumerate() {
            if let Some(b) = b {
                for sign in [1.0, -1.0] {
                    let mut r = DVector::zeros(n + m);
                    r[i] = sign;
                    rows.push(r);
                    rhs.push(*b);
                }
            }
        }
        let ineq = if rows.is_empty() {
            DMatrix::zeros(0, n + m)
        } else {
            DMatrix::from_columns(&rows).transpose()
        };
        Self {
            states: n,
            inputs: m,
            ineq,
            ineq_bounds: DVector::from_vec(rhs),
            eq: DMatrix::zeros(0, n + m),
            eq_bounds: DVector::zeros(0),
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn state_part(&self) -> DMatrix<f64> {
        self.ineq.columns(0, self.states).into_owned()
    }

    pub fn input_part(&self) -> DMatrix<f64> {
        self.ineq.columns(self.states, self.inputs).into_owned()
    }

    /// Largest violation of the inequality rows at `(x, u)`, at least 0.
    pub fn violation(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let mut xu = DVector::zeros(self.states + self.inputs);
        xu.rows_mut(0, self.states).copy_from(x);
        xu.rows_mut(self.states, self.inputs).copy_from(u);
        (&self.ineq * xu - &self.ineq_bounds).iter().copied().fold(0.0, f64::max)
    }

    /// Rows `(G_x − G_u K) e ≤ g − G_x sp` obtained by closing the loop with
    /// `u = −K e` in error coordinates.
    fn closed_loop_rows(&self, k: &DMatrix<f64>, sp: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let gx = self.state_part();
        let gu = self.input_part();
        let f = &gx - &gu * k;
        let g = &self.ineq_bounds - &gx * sp;
        (f, g)
    }
}

/// Lazily computed terminal sets, one per set-point.
#[derive(Debug, Clone)]
pub struct TerminalSets {
    a_closed: DMatrix<f64>,
    k: DMatrix<f64>,
    constraints: ConstraintSet,
    extra: Option<ConstraintSet>,
    max_iter: usize,
    cache: Arc<Mutex<HashMap<Vec<u64>, Arc<Polytope>>>>,
}

impl TerminalSets {
    /// Invariant set (error coordinates) for the loop regulating to `sp`.
    pub fn for_setpoint(&self, sp: &DVector<f64>) -> Result<Arc<Polytope>> {
        let key: Vec<u64> = sp.iter().map(|v| v.to_bits()).collect();
        let mut cache = self.cache.lock().expect("terminal set cache poisoned");
        if let Some(p) = cache.get(&key) {
            return Ok(Arc::clone(p));
        }
        let (mut f, mut g) = self.constraints.closed_loop_rows(&self.k, sp);
        if let Some(extra) = &self.extra {
            let (fe, ge) = extra.closed_loop_rows(&self.k, sp);
            f = stack_rows(&f, &fe);
            g = stack_vec(&g, &ge);
        }
        let c = Polytope::new(f, g)?;
        let omega = Arc::new(maximal_invariant_set(&self.a_closed, &c, self.max_iter)?);
        cache.insert(key, Arc::clone(&omega));
        Ok(omega)
    }
}

/// How the terminal-set constraint is configured.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalOptions {
    pub enabled: bool,
    /// Rows that only shape the terminal set (for instance an input bound
    /// the local LQR must respect) without constraining the MPC steps.
    pub extra: Option<ConstraintSet>,
    pub max_iter: usize,
}

impl Default for TerminalOptions {
    fn default() -> Self {
        Self {
            enabled: true,
            extra: None,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl TerminalOptions {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MpcSpec {
    pub model: DiscreteLinearModel,
    pub cost: CostSpec,
    pub lqr: LqrSolution,
    pub constraints: ConstraintSet,
    pub terminal: Option<TerminalSets>,
    pub horizons: Vec<usize>,
}

impl MpcSpec {
    pub fn new(
        model: DiscreteLinearModel,
        cost: CostSpec,
        constraints: ConstraintSet,
        terminal: TerminalOptions,
        horizons: Vec<usize>,
    ) -> Result<Self> {
        let n = model.states();
        let m = model.inputs();
        if constraints.states() != n || constraints.inputs() != m {
            return Err(dim_err("mpc constraints", format!("{n}+{m} columns"), format!("{}+{}", constraints.states(), constraints.inputs())));
        }
        if horizons.is_empty() || horizons.contains(&0) || horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(value_err("mpc horizons", "must be nonempty, positive and strictly ascending"));
        }
        let lqr = solve_dare(&model.a, &model.b, &cost)?;
        let terminal = if terminal.enabled {
            if let Some(extra) = &terminal.extra {
                if extra.states() != n || extra.inputs() != m {
                    return Err(dim_err("terminal extra constraints", format!("{n}+{m} columns"), format!("{}+{}", extra.states(), extra.inputs())));
                }
            }
            Some(TerminalSets {
                a_closed: lqr.closed_loop(&model.a, &model.b),
                k: lqr.k.clone(),
                constraints: constraints.clone(),
                extra: terminal.extra,
                max_iter: terminal.max_iter,
                cache: Arc::default(),
            })
        } else {
            None
        };
        Ok(Self {
            model,
            cost,
            lqr,
            constraints,
            terminal,
            horizons,
        })
    }

    pub fn max_horizon(&self) -> usize {
        *self.horizons.last().expect("horizon set is nonempty")
    }

    pub fn terminal_set(&self, sp: &DVector<f64>) -> Result<Option<Arc<Polytope>>> {
        self.terminal.as_ref().map(|t| t.for_setpoint(sp)).transpose()
    }

    /// Local law toward `sp`.
    pub fn lqr_input(&self, sp: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        control_law(&self.lqr.k, sp, x)
    }
}

/// Condensed QP together with the prediction map it was built from.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub qp: QpProblem,
    /// `J = ½zᵀHz + qᵀz + constant`.
    pub constant: f64,
    /// `A^i` for `i = 0..=N`.
    pub powers: Vec<DMatrix<f64>>,
    /// Block rows `S_i` with `e_i = A^i e_0 + S_i z`, `i = 0..=N`.
    pub prediction: Vec<DMatrix<f64>>,
}

impl CondensedQp {
    pub fn predict(&self, x_err: &DVector<f64>, z: &DVector<f64>) -> Vec<DVector<f64>> {
        self.powers
            .iter()
            .zip(self.prediction.iter())
            .map(|(a, s)| a * x_err + s * z)
            .collect()
    }
}

/// Builds the QP over `z = (u_0, …, u_{N−1})` for error state `x_err`,
/// shifting constraint bounds by `sp`.
pub fn build_condensed_qp(spec: &MpcSpec, horizon: usize, x_err: &DVector<f64>, sp: &DVector<f64>) -> Result<CondensedQp> {
    if !spec.horizons.contains(&horizon) {
        return Err(Error::UnknownHorizon(horizon));
    }
    let n = spec.model.states();
    let m = spec.model.inputs();
    if x_err.len() != n {
        return Err(dim_err("build_condensed_qp state", n, x_err.len()));
    }
    if sp.len() != n {
        return Err(dim_err("build_condensed_qp set-point", n, sp.len()));
    }
    let a = &spec.model.a;
    let b = &spec.model.b;
    let nn = horizon;
    let d = nn * m;

    let mut powers = Vec::with_capacity(nn + 1);
    powers.push(DMatrix::<f64>::identity(n, n));
    for i in 1..=nn {
        powers.push(a * &powers[i - 1]);
    }
    // S_i = [A^{i−1}B, A^{i−2}B, …, B, 0, …].
    let mut prediction = Vec::with_capacity(nn + 1);
    prediction.push(DMatrix::<f64>::zeros(n, d));
    for i in 1..=nn {
        let mut s = a * &prediction[i - 1];
        s.view_mut((0, (i - 1) * m), (n, m)).copy_from(b);
        prediction.push(s);
    }

    let q = &spec.cost.q;
    let r = &spec.cost.r;
    let p = &spec.lqr.p;
    let mut hessian = DMatrix::<f64>::zeros(d, d);
    let mut linear = DVector::<f64>::zeros(d);
    let mut constant = x_err.dot(&(q * x_err));
    for i in 1..=nn {
        let w = if i == nn { p } else { q };
        let free = &powers[i] * x_err;
        let ws = w * &prediction[i];
        hessian += prediction[i].transpose() * &ws;
        linear += ws.transpose() * &free;
        constant += free.dot(&(w * &free));
    }
    for i in 0..nn {
        let mut block = hessian.view_mut((i * m, i * m), (m, m));
        block += r;
    }
    hessian *= 2.0;
    linear *= 2.0;
    crate::riccati::symmetrize(&mut hessian);

    let cs = &spec.constraints;
    let gx = cs.state_part();
    let gu = cs.input_part();
    let g_shift = &cs.ineq_bounds - &gx * sp;
    let (mut rows, mut rhs) = (Vec::new(), Vec::new());
    step_rows(&gx, &gu, &g_shift, &powers, &prediction, x_err, nn, m, &mut rows, &mut rhs);

    if let Some(t) = spec.terminal_set(sp)? {
        let f = t.matrix();
        let coeff = f * &prediction[nn];
        let bound = t.bounds() - f * (&powers[nn] * x_err);
        for k in 0..f.nrows() {
            push_row(coeff.row(k).transpose(), bound[k], &mut rows, &mut rhs);
        }
    }

    let (mut eq_rows, mut eq_rhs) = (Vec::new(), Vec::new());
    if cs.eq.nrows() > 0 {
        let hx = cs.eq.columns(0, n).into_owned();
        let hu = cs.eq.columns(n, m).into_owned();
        let h_shift = &cs.eq_bounds - &hx * sp;
        step_rows(&hx, &hu, &h_shift, &powers, &prediction, x_err, nn, m, &mut eq_rows, &mut eq_rhs);
    }

    let qp = QpProblem::new(
        hessian,
        linear,
        rows_to_matrix(&rows, d),
        DVector::from_vec(rhs),
        rows_to_matrix(&eq_rows, d),
        DVector::from_vec(eq_rhs),
    )?;
    Ok(CondensedQp {
        qp,
        constant,
        powers,
        prediction,
    })
}

#[allow(clippy::too_many_arguments)]
fn step_rows(
    gx: &DMatrix<f64>,
    gu: &DMatrix<f64>,
    bounds: &DVector<f64>,
    powers: &[DMatrix<f64>],
    prediction: &[DMatrix<f64>],
    x_err: &DVector<f64>,
    horizon: usize,
    m: usize,
    rows: &mut Vec<DVector<f64>>,
    rhs: &mut Vec<f64>,
) {
    let d = horizon * m;
    for i in 0..horizon {
        let state_coeff = gx * &prediction[i];
        let state_free = gx * (&powers[i] * x_err);
        for k in 0..gx.nrows() {
            let input_row = gu.row(k);
            // x_0 is given, so pure state rows are not imposed at step 0.
            if i == 0 && input_row.iter().all(|&v| v == 0.0) {
                continue;
            }
            let mut coeff = state_coeff.row(k).transpose();
            for j in 0..m {
                coeff[i * m + j] += input_row[j];
            }
            debug_assert_eq!(coeff.len(), d);
            push_row(coeff, bounds[k] - state_free[k], rows, rhs);
        }
    }
}

fn push_row(coeff: DVector<f64>, bound: f64, rows: &mut Vec<DVector<f64>>, rhs: &mut Vec<f64>) {
    if coeff.amax() == 0.0 && bound >= 0.0 {
        return;
    }
    rows.push(coeff);
    rhs.push(bound);
}

fn rows_to_matrix(rows: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    if rows.is_empty() {
        DMatrix::zeros(0, d)
    } else {
        DMatrix::from_columns(rows).transpose()
    }
}

fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

fn stack_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Result of one MPC optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub horizon: usize,
    /// `u_0 … u_{N−1}`; empty when infeasible.
    pub inputs: Vec<DVector<f64>>,
    /// Predicted `x_0 … x_N` in original coordinates; empty when infeasible.
    pub states: Vec<DVector<f64>>,
    pub feasible: bool,
    pub status: QpStatus,
    /// γ.
    pub iterations: usize,
    /// `J` including the stage cost of `x_0`.
    pub objective: f64,
}

/// Solves the MPC from `x` toward `sp`.
///
/// Without an explicit warm start, the LQR rollout from `x` is offered as a
/// starting point; it is used only if it already satisfies every constraint.
pub fn mpc_solve(spec: &MpcSpec, x: &DVector<f64>, sp: &DVector<f64>, horizon: usize, warm: Option<&WarmStart>) -> Result<MpcPlan> {
    let n = spec.model.states();
    if x.len() != n {
        return Err(dim_err("mpc_solve state", n, x.len()));
    }
    let x_err = x - sp;
    let condensed = build_condensed_qp(spec, horizon, &x_err, sp)?;
    let fallback;
    let warm = match warm {
        Some(w) => w,
        None => {
            fallback = WarmStart {
                point: Some(lqr_rollout(spec, &x_err, horizon)),
                active_set: Vec::new(),
            };
            &fallback
        }
    };
    let result = solve_qp_warm(&condensed.qp, Some(warm));
    let feasible = result.is_optimal();
    let m = spec.model.inputs();
    let (inputs, states, objective) = if feasible {
        let inputs = (0..horizon).map(|i| result.z.rows(i * m, m).into_owned()).collect();
        let states = condensed.predict(&x_err, &result.z).into_iter().map(|e| e + sp).collect();
        (inputs, states, result.objective + condensed.constant)
    } else {
        (Vec::new(), Vec::new(), f64::INFINITY)
    };
    Ok(MpcPlan {
        horizon,
        inputs,
        states,
        feasible,
        status: result.status,
        iterations: result.iterations,
        objective,
    })
}

/// Inputs of the unconstrained LQR loop started at `x_err`, stacked.
pub fn lqr_rollout(spec: &MpcSpec, x_err: &DVector<f64>, horizon: usize) -> DVector<f64> {
    let m = spec.model.inputs();
    let k = &spec.lqr.k;
    let mut e = x_err.clone();
    let mut z = DVector::zeros(horizon * m);
    for i in 0..horizon {
        let u = -(k * &e);
        z.rows_mut(i * m, m).copy_from(&u);
        e = &spec.model.a * e + &spec.model.b * u;
    }
    z
}

/// Modeled solve time in seconds: `0.001·γ·N/20`.
pub fn exec_time_model(iterations: usize, horizon: usize) -> f64 {
    0.001 * iterations as f64 * horizon as f64 / 20.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(horizons: Vec<usize>, terminal: bool) -> MpcSpec {
        let model = DiscreteLinearModel::new(
            DMatrix::from_row_slice(2, 2, &[0.9752, 1.4544, -0.0327, 0.9315]),
            DMatrix::from_row_slice(2, 1, &[0.0248, 0.0327]),
            0.05,
        )
        .unwrap();
        let cost = CostSpec::new(DMatrix::identity(2, 2) * 10.0, DMatrix::identity(1, 1)).unwrap();
        let cs = ConstraintSet::symmetric_bounds(&[Some(5.0), Some(0.2)], &[None]);
        let term = if terminal {
            TerminalOptions::default()
        } else {
            TerminalOptions::disabled()
        };
        MpcSpec::new(model, cost, cs, term, horizons).unwrap()
    }

    #[test]
    fn single_step_algebra() {
        let s = MpcSpec::new(
            spec(vec![1], false).model,
            spec(vec![1], false).cost,
            ConstraintSet::unconstrained(2, 1),
            TerminalOptions::disabled(),
            vec![1],
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.7, -0.1]);
        let c = build_condensed_qp(&s, 1, &x, &DVector::zeros(2)).unwrap();
        let b = &s.model.b;
        let p = &s.lqr.p;
        let h = (b.transpose() * p * b + &s.cost.r) * 2.0;
        let q = b.transpose() * p * &s.model.a * &x * 2.0;
        assert!((c.qp.hessian() - h).amax() < 1e-12);
        assert!((c.qp.linear() - q).amax() < 1e-12);
    }

    #[test]
    fn origin_is_optimal_at_setpoint() {
        let s = spec(vec![3, 7], true);
        let zero = DVector::zeros(2);
        let c = build_condensed_qp(&s, 7, &zero, &zero).unwrap();
        assert!(c.qp.linear().amax() == 0.0);
        let plan = mpc_solve(&s, &zero, &zero, 3, None).unwrap();
        assert!(plan.feasible);
        assert!(plan.inputs.iter().all(|u| u.amax() < 1e-14));
        assert!(plan.objective.abs() < 1e-14);
    }

    #[test]
    fn unknown_horizon_rejected() {
        let s = spec(vec![5], false);
        assert_eq!(
            build_condensed_qp(&s, 4, &DVector::zeros(2), &DVector::zeros(2)).unwrap_err(),
            Error::UnknownHorizon(4)
        );
    }

    #[test]
    fn exec_time_values() {
        assert_eq!(exec_time_model(1, 20), 0.001);
        assert_eq!(exec_time_model(0, 7), 0.0);
        assert!((exec_time_model(10, 10) - 0.005).abs() < 1e-18);
    }

    #[test]
    fn bad_horizon_sets() {
        let s = spec(vec![1], false);
        for hs in [vec![], vec![0, 1], vec![3, 2], vec![2, 2]] {
            assert!(MpcSpec::new(s.model.clone(), s.cost.clone(), s.constraints.clone(), TerminalOptions::disabled(), hs).is_err());
        }
    }

    #[test]
    fn beta_needs_a_long_horizon() {
        let s = crate::presets::example_spec(vec![5, 6, 7, 13], true).unwrap();
        let beta = crate::presets::example_beta();
        let zero = DVector::zeros(2);
        assert!(!mpc_solve(&s, &beta, &zero, 5, None).unwrap().feasible);
        let plan = mpc_solve(&s, &beta, &zero, 13, None).unwrap();
        assert!(plan.feasible);
        let t = s.terminal_set(&zero).unwrap().unwrap();
        assert!(t.contains(plan.states.last().unwrap(), 1e-6).unwrap());
        assert!(plan.states.iter().any(|x| (x[1].abs() - 0.2).abs() < 1e-6));
    }

    #[test]
    fn prediction_matches_stepping() {
        // Set-point shifting needs (sp, 0) to be an equilibrium: origin for
        // the example plant, any position for the integrator chain.
        let example = crate::presets::example_spec(vec![1, 2, 3, 4, 5], false).unwrap();
        let beam = MpcSpec::new(
            crate::presets::ball_beam_model(),
            crate::presets::ball_beam_cost(),
            crate::presets::ball_beam_constraints(),
            TerminalOptions::disabled(),
            vec![1, 2, 3, 4, 5],
        )
        .unwrap();
        let cases = [
            (&example, 1, vec![0.3, 0.1], vec![0.0, 0.0]),
            (&example, 5, vec![1.0, -0.1], vec![0.0, 0.0]),
            (&beam, 3, vec![-0.2, 0.05, 0.1], vec![0.4, 0.0, 0.0]),
            (&beam, 5, vec![0.1, 0.0, -0.3], vec![-0.52, 0.0, 0.0]),
        ];
        for (s, n, x, sp) in cases {
            let x = DVector::from_vec(x);
            let sp = DVector::from_vec(sp);
            let c = build_condensed_qp(s, n, &(&x - &sp), &sp).unwrap();
            let z = DVector::from_fn(n, |i, _| 0.3 * (i as f64) - 0.4);
            let predicted = c.predict(&(&x - &sp), &z);
            let mut xi = x.clone();
            for (i, p) in predicted.iter().take(n).enumerate() {
                assert!((p + &sp - &xi).amax() < 1e-10);
                xi = s.model.step(&xi, &z.rows(i, 1).into_owned()).unwrap();
            }
            assert!((&predicted[n] + &sp - xi).amax() < 1e-10);
        }
    }

    #[test]
    fn objective_matches_replayed_cost() {
        let s = crate::presets::example_spec(vec![13], true).unwrap();
        let beta = crate::presets::example_beta();
        let plan = mpc_solve(&s, &beta, &DVector::zeros(2), 13, None).unwrap();
        let mut j = 0.0;
        for (x, u) in plan.states.iter().zip(plan.inputs.iter()) {
            j += x.dot(&(&s.cost.q * x)) + u.dot(&(&s.cost.r * u));
        }
        let xn = plan.states.last().unwrap();
        j += xn.dot(&(&s.lqr.p * xn));
        assert!((j - plan.objective).abs() < 1e-8 * j.max(1.0), "{j} vs {}", plan.objective);
    }
}
