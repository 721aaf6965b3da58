//! Dense convex QP: `minimize ½ zᵀHz + qᵀz  s.t.  A_in z ≤ b_in,  A_eq z = b_eq`.
//!
//! Primal active-set method. Equalities are removed up front by null-space
//! elimination; a feasible starting point comes from the caller's warm start
//! when it is feasible and from the simplex phase-one otherwise. Every pass
//! through the main loop counts as one iteration (γ).

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, value_err, Result};
use crate::lp;

pub const MAX_ITERATIONS: usize = 500;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    a_in: DMatrix<f64>,
    b_in: DVector<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
    ) -> Result<Self> {
        let d = linear.len();
        if hessian.nrows() != d || hessian.ncols() != d {
            return Err(dim_err("qp hessian", format!("{d}x{d}"), format!("{}x{}", hessian.nrows(), hessian.ncols())));
        }
        if a_in.ncols() != d || a_in.nrows() != b_in.len() {
            return Err(dim_err("qp inequalities", format!("?x{d} / rows = rhs"), format!("{}x{} / {}", a_in.nrows(), a_in.ncols(), b_in.len())));
        }
        if a_eq.ncols() != d || a_eq.nrows() != b_eq.len() {
            return Err(dim_err("qp equalities", format!("?x{d} / rows = rhs"), format!("{}x{} / {}", a_eq.nrows(), a_eq.ncols(), b_eq.len())));
        }
        let all = hessian
            .iter()
            .chain(linear.iter())
            .chain(a_in.iter())
            .chain(b_in.iter())
            .chain(a_eq.iter())
            .chain(b_eq.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(value_err("qp", "non-finite entry"));
        }
        if (&hessian - hessian.transpose()).amax() > 1e-10 * hessian.amax().max(1.0) {
            return Err(value_err("qp", "Hessian is not symmetric"));
        }
        if hessian.clone().cholesky().is_none() {
            return Err(value_err("qp", "Hessian is not positive definite"));
        }
        Ok(Self {
            hessian,
            linear,
            a_in,
            b_in,
            a_eq,
            b_eq,
        })
    }

    /// Inequality-only problem.
    pub fn inequality(hessian: DMatrix<f64>, linear: DVector<f64>, a_in: DMatrix<f64>, b_in: DVector<f64>) -> Result<Self> {
        let d = linear.len();
        Self::new(hessian, linear, a_in, b_in, DMatrix::zeros(0, d), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn a_in(&self) -> &DMatrix<f64> {
        &self.a_in
    }

    pub fn b_in(&self) -> &DVector<f64> {
        &self.b_in
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }

    /// Largest violation over all inequality and equality rows (0 if none).
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        let ineq = (&self.a_in * z - &self.b_in).iter().copied().fold(0.0, f64::max);
        let eq = (&self.a_eq * z - &self.b_eq).amax();
        ineq.max(eq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub status: QpStatus,
    /// Minimizer when optimal; the last iterate otherwise (zeros if infeasible).
    pub z: DVector<f64>,
    pub objective: f64,
    /// γ, always ≥ 1.
    pub iterations: usize,
    /// Inequality rows in the final working set, ascending.
    pub active_set: Vec<usize>,
    /// Inequality multipliers (zero off the working set).
    pub multipliers: DVector<f64>,
}

impl QpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Starting information carried over from a related solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub point: Option<DVector<f64>>,
    pub active_set: Vec<usize>,
}

pub fn solve_qp(problem: &QpProblem) -> QpResult {
    solve_qp_warm(problem, None)
}

pub fn solve_qp_warm(problem: &QpProblem, warm: Option<&WarmStart>) -> QpResult {
    let d = problem.dim();
    let p = problem.a_in.nrows();
    let infeasible = |iterations| QpResult {
        status: QpStatus::Infeasible,
        z: DVector::zeros(d),
        objective: f64::INFINITY,
        iterations,
        active_set: Vec::new(),
        multipliers: DVector::zeros(p),
    };

    let Some(reduced) = Reduced::eliminate(problem) else {
        return infeasible(1);
    };

    // Starting point in reduced coordinates.
    let warm_point = warm
        .and_then(|w| w.point.as_ref())
        .filter(|z| z.len() == d && problem.violation(z) <= FEAS_TOL)
        .map(|z| reduced.to_reduced(z));
    let (start, mut working) = match warm_point {
        Some(y) => {
            let ws = warm.map(|w| w.active_set.as_slice()).unwrap_or(&[]);
            let working = independent_active_rows(&reduced.a, &reduced.b, &y, ws);
            (y, working)
        }
        None => match lp::feasible_point(&reduced.a, &reduced.b) {
            Ok(Some(y)) => (y, Vec::new()),
            Ok(None) => return infeasible(1),
            Err(_) => return infeasible(1),
        },
    };

    let mut y = start;
    let h = &reduced.h;
    let q = &reduced.q;
    let a = &reduced.a;
    let b = &reduced.b;
    let mut lambda = DVector::zeros(p);

    let mut iterations = 0;
    let status = loop {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            iterations = MAX_ITERATIONS;
            break QpStatus::IterationLimit;
        }
        let grad = h * &y + q;
        let Some((step, mu)) = solve_kkt(h, a, &working, &grad) else {
            break QpStatus::IterationLimit;
        };
        let scale = 1.0 + y.amax();
        if step.amax() <= 1e-11 * scale {
            lambda.fill(0.0);
            for (k, &row) in working.iter().enumerate() {
                lambda[row] = mu[k];
            }
            let tol = 1e-10 * (1.0 + grad.amax());
            // Most negative multiplier leaves; ties go to the lowest row.
            let mut leave: Option<(usize, f64)> = None;
            for (k, &v) in mu.iter().enumerate() {
                if v < -tol {
                    match leave {
                        Some((_, best)) if v >= best => {}
                        _ => leave = Some((k, v)),
                    }
                }
            }
            match leave {
                None => break QpStatus::Optimal,
                Some((k, _)) => {
                    working.remove(k);
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        let step_norm = step.norm();
        for i in 0..a.nrows() {
            if working.contains(&i) {
                continue;
            }
            let ai = a.row(i);
            let ap = ai.dot(&step.transpose());
            if ap > 1e-12 * ai.norm() * step_norm {
                let slack = (b[i] - ai.dot(&y.transpose())).max(0.0);
                let ratio = slack / ap;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        y += step * alpha;
        if let Some(i) = blocking {
            let pos = working.partition_point(|&r| r < i);
            working.insert(pos, i);
        }
    };

    let z = reduced.to_full(&y);
    QpResult {
        status,
        objective: problem.objective(&z),
        z,
        iterations: iterations.max(1),
        active_set: working,
        multipliers: lambda,
    }
}

/// Problem restricted to the null space of the equality rows:
/// `z = z0 + N y`.
struct Reduced {
    h: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    basis: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl Reduced {
    fn eliminate(p: &QpProblem) -> Option<Self> {
        if p.a_eq.nrows() == 0 {
            return Some(Self {
                h: p.hessian.clone(),
                q: p.linear.clone(),
                a: p.a_in.clone(),
                b: p.b_in.clone(),
                basis: None,
            });
        }
        let d = p.dim();
        let r = p.a_eq.nrows();
        // Pad to at least d rows so the SVD returns a full right basis.
        let rows = r.max(d);
        let mut padded = DMatrix::zeros(rows, d);
        padded.view_mut((0, 0), (r, d)).copy_from(&p.a_eq);
        let svd = padded.svd(true, true);
        let v_t = svd.v_t.as_ref()?;
        let smax = svd.singular_values.max();
        let tol = 1e-12 * smax.max(1.0) * d as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let z0 = svd.solve(&{
            let mut rhs = DVector::zeros(rows);
            rhs.rows_mut(0, r).copy_from(&p.b_eq);
            rhs
        }, tol)
        .ok()?;
        if (&p.a_eq * &z0 - &p.b_eq).amax() > FEAS_TOL * (1.0 + p.b_eq.amax()) {
            return None;
        }
        let null_idx: Vec<usize> = (0..d).filter(|&i| svd.singular_values[i] <= tol).collect();
        debug_assert_eq!(null_idx.len(), d - rank);
        let n_mat = v_t.select_rows(null_idx.iter()).transpose();
        let h = n_mat.transpose() * &p.hessian * &n_mat;
        let q = n_mat.transpose() * (&p.hessian * &z0 + &p.linear);
        let a = &p.a_in * &n_mat;
        let b = &p.b_in - &p.a_in * &z0;
        let mut h = h;
        crate::riccati::symmetrize(&mut h);
        Some(Self {
            h,
            q,
            a,
            b,
            basis: Some((z0, n_mat)),
        })
    }

    fn to_full(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            None => y.clone(),
            Some((z0, n)) => z0 + n * y,
        }
    }

    fn to_reduced(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            None => z.clone(),
            // N has orthonormal columns.
            Some((z0, n)) => n.transpose() * (z - z0),
        }
    }
}

/// Solves `[H Aᵀ; A 0][p; μ] = [−g; 0]` for the working rows.
fn solve_kkt(h: &DMatrix<f64>, a: &DMatrix<f64>, working: &[usize], grad: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let d = h.nrows();
    let w = working.len();
    let mut kkt = DMatrix::zeros(d + w, d + w);
    kkt.view_mut((0, 0), (d, d)).copy_from(h);
    for (k, &row) in working.iter().enumerate() {
        for j in 0..d {
            let v = a[(row, j)];
            kkt[(d + k, j)] = v;
            kkt[(j, d + k)] = v;
        }
    }
    let mut rhs = DVector::zeros(d + w);
    rhs.rows_mut(0, d).copy_from(&(-grad));
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, d).into_owned(), sol.rows(d, w).into_owned()))
}

/// Rows of `hint` active at `y`, greedily filtered to a linearly independent set.
fn independent_active_rows(a: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>, hint: &[usize]) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut chosen = Vec::new();
    let mut sorted: Vec<usize> = hint.iter().copied().filter(|&i| i < a.nrows()).collect();
    sorted.sort_unstable();
    sorted.dedup();
    for i in sorted {
        let row = a.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 || (b[i] - row.dot(y)).abs() > FEAS_TOL * (1.0 + norm) {
            continue;
        }
        let mut r = row / norm;
        for q in &basis {
            let c = r.dot(q);
            r -= q * c;
        }
        let rn = r.norm();
        if rn > 1e-8 && basis.len() < a.ncols() {
            basis.push(r / rn);
            chosen.push(i);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    #[test]
    fn unconstrained_scalar() {
        let p = QpProblem::inequality(m(1, 1, &[1.0]), v(&[-2.0]), DMatrix::zeros(0, 1), DVector::zeros(0)).unwrap();
        let r = solve_qp(&p);
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.z[0] - 2.0).abs() < 1e-12);
        assert!((r.objective + 2.0).abs() < 1e-12);
        assert!(r.iterations >= 1);
    }

    #[test]
    fn clipped_scalar() {
        let p = QpProblem::inequality(m(1, 1, &[1.0]), v(&[-2.0]), m(1, 1, &[1.0]), v(&[1.0])).unwrap();
        let r = solve_qp(&p);
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.z[0] - 1.0).abs() < 1e-12);
        assert!((r.objective + 1.5).abs() < 1e-12);
        assert_eq!(r.active_set, vec![0]);
        assert!((r.multipliers[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_feasible_set() {
        let p = QpProblem::inequality(m(1, 1, &[1.0]), v(&[0.0]), m(2, 1, &[1.0, -1.0]), v(&[0.0, -1.0])).unwrap();
        assert_eq!(solve_qp(&p).status, QpStatus::Infeasible);
    }

    #[test]
    fn construction_errors_are_distinct() {
        assert!(QpProblem::inequality(m(1, 1, &[-1.0]), v(&[0.0]), DMatrix::zeros(0, 1), DVector::zeros(0)).is_err());
        assert!(QpProblem::inequality(m(2, 2, &[1.0, 1.0, 0.0, 1.0]), v(&[0.0, 0.0]), DMatrix::zeros(0, 2), DVector::zeros(0)).is_err());
        assert!(QpProblem::inequality(m(1, 1, &[1.0]), v(&[0.0, 1.0]), DMatrix::zeros(0, 1), DVector::zeros(0)).is_err());
    }

    #[test]
    fn equality_elimination() {
        // min ½(x² + y²) s.t. x + y = 2, x ≤ 0.5 → (0.5, 1.5).
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            v(&[0.0, 0.0]),
            m(1, 2, &[1.0, 0.0]),
            v(&[0.5]),
            m(1, 2, &[1.0, 1.0]),
            v(&[2.0]),
        )
        .unwrap();
        let r = solve_qp(&p);
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.z[0] - 0.5).abs() < 1e-10 && (r.z[1] - 1.5).abs() < 1e-10, "{}", r.z);

        let inconsistent = QpProblem::new(
            DMatrix::identity(2, 2),
            v(&[0.0, 0.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            m(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            v(&[1.0, 3.0]),
        )
        .unwrap();
        assert_eq!(solve_qp(&inconsistent).status, QpStatus::Infeasible);
    }

    #[test]
    fn warm_start_reuses_active_set() {
        let p = QpProblem::inequality(
            DMatrix::identity(2, 2),
            v(&[-2.0, -2.0]),
            m(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            v(&[1.0, 1.0]),
        )
        .unwrap();
        let cold = solve_qp(&p);
        let warm = solve_qp_warm(
            &p,
            Some(&WarmStart {
                point: Some(cold.z.clone()),
                active_set: cold.active_set.clone(),
            }),
        );
        assert_eq!(warm.status, QpStatus::Optimal);
        assert_eq!(warm.iterations, 1);
        assert!((warm.z - cold.z).amax() < 1e-12);
    }
}
