//! Halfspace polytopes `{x : F x ≤ f}` and the maximal positively invariant
//! set of a stable closed loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, value_err, Error, Result};
use crate::lp::{self, LpOutcome};
use crate::riccati::spectral_radius;

/// Slack allowed before a row counts as binding.
pub const REDUNDANCY_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Rows are kept at unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    f_mat: DMatrix<f64>,
    f_vec: DVector<f64>,
}

impl Polytope {
    /// Normalizes every row. Rows that are identically zero are dropped when
    /// trivially satisfied; a zero row with a negative bound means the set is
    /// empty.
    pub fn new(f_mat: DMatrix<f64>, f_vec: DVector<f64>) -> Result<Self> {
        if f_mat.nrows() != f_vec.len() {
            return Err(dim_err("polytope rows", f_mat.nrows(), f_vec.len()));
        }
        if f_mat.iter().chain(f_vec.iter()).any(|v| !v.is_finite()) {
            return Err(value_err("polytope", "non-finite entry"));
        }
        let n = f_mat.ncols();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..f_mat.nrows() {
            let norm = f_mat.row(i).norm();
            if norm <= 1e-14 {
                if f_vec[i] < 0.0 {
                    return Err(Error::EmptyPolytope);
                }
                continue;
            }
            rows.push(f_mat.row(i) / norm);
            rhs.push(f_vec[i] / norm);
        }
        let f_mat = if rows.is_empty() {
            DMatrix::zeros(0, n)
        } else {
            DMatrix::from_rows(&rows)
        };
        Ok(Self {
            f_mat,
            f_vec: DVector::from_vec(rhs),
        })
    }

    /// `|x_i| ≤ bound_i` for every coordinate.
    pub fn symmetric_box(bounds: &[f64]) -> Result<Self> {
        let n = bounds.len();
        let mut f = DMatrix::zeros(2 * n, n);
        let mut g = DVector::zeros(2 * n);
        for (i, &b) in bounds.iter().enumerate() {
            f[(2 * i, i)] = 1.0;
            f[(2 * i + 1, i)] = -1.0;
            g[2 * i] = b;
            g[2 * i + 1] = b;
        }
        Self::new(f, g)
    }

    pub fn dim(&self) -> usize {
        self.f_mat.ncols()
    }

    pub fn rows(&self) -> usize {
        self.f_mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f_mat
    }

    pub fn bounds(&self) -> &DVector<f64> {
        &self.f_vec
    }

    /// `F x ≤ f + tol` elementwise.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(dim_err("polytope contains", self.dim(), x.len()));
        }
        let lhs = &self.f_mat * x;
        Ok(lhs.iter().zip(self.f_vec.iter()).all(|(l, r)| *l <= r + tol))
    }

    /// Largest violation `max(F x − f)`, or `−∞` for a polytope without rows.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.f_mat * x - &self.f_vec)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(lp::feasible_point(&self.f_mat, &self.f_vec)?.is_none())
    }

    /// Intersection (row concatenation).
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        if other.dim() != self.dim() {
            return Err(dim_err("polytope intersect", self.dim(), other.dim()));
        }
        let mut f = DMatrix::zeros(self.rows() + other.rows(), self.dim());
        f.view_mut((0, 0), (self.rows(), self.dim())).copy_from(&self.f_mat);
        f.view_mut((self.rows(), 0), (other.rows(), self.dim())).copy_from(&other.f_mat);
        let mut g = DVector::zeros(self.rows() + other.rows());
        g.rows_mut(0, self.rows()).copy_from(&self.f_vec);
        g.rows_mut(self.rows(), other.rows()).copy_from(&other.f_vec);
        Polytope::new(f, g)
    }

    fn without_row(&self, skip: usize, keep: &[bool]) -> (DMatrix<f64>, DVector<f64>) {
        let idx: Vec<usize> = (0..self.rows()).filter(|&i| i != skip && keep[i]).collect();
        let f = self.f_mat.select_rows(idx.iter());
        let g = self.f_vec.select_rows(idx.iter());
        (f, g)
    }

    fn select(&self, keep: &[bool]) -> Polytope {
        let idx: Vec<usize> = (0..self.rows()).filter(|&i| keep[i]).collect();
        Polytope {
            f_mat: self.f_mat.select_rows(idx.iter()),
            f_vec: self.f_vec.select_rows(idx.iter()),
        }
    }
}

/// `maximize cᵀx subject to x ∈ polytope`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub polytope: Polytope,
}

pub fn lp_max(problem: &LpProblem) -> Result<LpOutcome> {
    lp::maximize(&problem.objective, problem.polytope.matrix(), problem.polytope.bounds())
}

/// Drops every row that is implied by the remaining ones.
///
/// Rows are examined in order; a row is removed when maximizing its normal
/// over the still-kept rows (itself excluded) stays within
/// [`REDUNDANCY_TOL`] of its bound.
pub fn remove_redundant(p: &Polytope) -> Result<Polytope> {
    if p.is_empty()? {
        return Err(Error::EmptyPolytope);
    }
    let mut keep = vec![true; p.rows()];
    for i in 0..p.rows() {
        let (f, g) = p.without_row(i, &keep);
        let c = p.f_mat.row(i).transpose();
        match lp::maximize(&c, &f, &g)? {
            LpOutcome::Optimal { value, .. } if value <= p.f_vec[i] + REDUNDANCY_TOL => keep[i] = false,
            LpOutcome::Infeasible => return Err(Error::EmptyPolytope),
            _ => {}
        }
    }
    Ok(p.select(&keep))
}

/// Maximal positively invariant subset of `constraints` under `x ↦ A_cl x`.
///
/// Iterates `Ω_{j+1} = Ω_j ∩ {x : F A_cl^{j+1} x ≤ f}` and stops once every
/// new row is redundant with respect to `Ω_j`.
pub fn maximal_invariant_set(a_closed: &DMatrix<f64>, constraints: &Polytope, max_iter: usize) -> Result<Polytope> {
    let n = constraints.dim();
    if a_closed.nrows() != n || a_closed.ncols() != n {
        return Err(dim_err("maximal_invariant_set A", format!("{n}x{n}"), format!("{}x{}", a_closed.nrows(), a_closed.ncols())));
    }
    let rho = spectral_radius(a_closed);
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop(rho));
    }
    if constraints.f_vec.iter().any(|&v| v <= 0.0) {
        return Err(Error::OriginNotInterior);
    }

    let mut omega = constraints.clone();
    let mut power = DMatrix::<f64>::identity(n, n);
    for _ in 0..max_iter {
        power = a_closed * power;
        let candidate = &constraints.f_mat * &power;
        let mut new_rows = Vec::new();
        let mut new_rhs = Vec::new();
        for i in 0..candidate.nrows() {
            let row = candidate.row(i);
            let norm = row.norm();
            let bound = constraints.f_vec[i];
            if norm <= 1e-14 {
                continue;
            }
            let c = row.transpose();
            match lp::maximize(&c, &omega.f_mat, &omega.f_vec)? {
                LpOutcome::Optimal { value, .. } if value <= bound + REDUNDANCY_TOL * norm => {}
                LpOutcome::Infeasible => return Err(Error::EmptyPolytope),
                _ => {
                    new_rows.push(row / norm);
                    new_rhs.push(bound / norm);
                }
            }
        }
        if new_rows.is_empty() {
            return remove_redundant(&omega);
        }
        let added = Polytope::new(DMatrix::from_rows(&new_rows), DVector::from_vec(new_rhs))?;
        omega = omega.intersect(&added)?;
    }
    Err(Error::DeterminednessIndexExceeded(max_iter))
}

/// Vertices of a bounded 2-D polytope in counter-clockwise order around the
/// centroid. Every pair of rows is intersected and infeasible intersections
/// are discarded.
pub fn vertices_2d(p: &Polytope) -> Result<Vec<[f64; 2]>> {
    if p.dim() != 2 {
        return Err(dim_err("vertices_2d", 2, p.dim()));
    }
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..p.rows() {
        for j in (i + 1)..p.rows() {
            let (a1, b1, c1) = (p.f_mat[(i, 0)], p.f_mat[(i, 1)], p.f_vec[i]);
            let (a2, b2, c2) = (p.f_mat[(j, 0)], p.f_mat[(j, 1)], p.f_vec[j]);
            let det = a1 * b2 - a2 * b1;
            if det.abs() < 1e-12 {
                continue;
            }
            let v = [(c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det];
            let x = DVector::from_vec(v.to_vec());
            if p.contains(&x, 1e-9)? && !pts.iter().any(|q| (q[0] - v[0]).abs() < 1e-9 && (q[1] - v[1]).abs() < 1e-9) {
                pts.push(v);
            }
        }
    }
    if pts.is_empty() {
        return Ok(pts);
    }
    let cx = pts.iter().map(|q| q[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|q| q[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.total_cmp(&tb)
    });
    Ok(pts)
}
