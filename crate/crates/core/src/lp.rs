//! Dense tableau simplex for `maximize cᵀx subject to F·x ≤ f` with free `x`.
//!
//! Pivoting follows Bland's rule (lowest entering index, lowest leaving basis
//! index on ratio ties), so the method terminates on degenerate problems and
//! is fully deterministic. Feasibility is established first with a single
//! elastic variable; the optimization then runs from the recovered point.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, value_err, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, argmax: DVector<f64> },
    Unbounded,
    Infeasible,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

/// Maximizes `cᵀx` over `{x : F x ≤ f}`.
pub fn maximize(c: &DVector<f64>, f_mat: &DMatrix<f64>, f_vec: &DVector<f64>) -> Result<LpOutcome> {
    let n = f_mat.ncols();
    if c.len() != n {
        return Err(dim_err("lp objective", n, c.len()));
    }
    if f_vec.len() != f_mat.nrows() {
        return Err(dim_err("lp rhs", f_mat.nrows(), f_vec.len()));
    }
    let Some((g, h)) = normalized_rows(f_mat, f_vec) else {
        return Ok(LpOutcome::Infeasible);
    };
    let Some(x0) = feasible_point_normalized(&g, &h)? else {
        return Ok(LpOutcome::Infeasible);
    };
    // x = x0 + y, G y ≤ h − G x0 (≥ 0 up to round-off).
    let slack = (&h - &g * &x0).map(|v| v.max(0.0));
    match solve_from_origin(c, &g, &slack)? {
        Some(y) => {
            let x = x0 + y;
            Ok(LpOutcome::Optimal {
                value: c.dot(&x),
                argmax: x,
            })
        }
        None => Ok(LpOutcome::Unbounded),
    }
}

/// Returns some point of `{x : F x ≤ f}` or `None` when the set is empty.
pub fn feasible_point(f_mat: &DMatrix<f64>, f_vec: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    if f_vec.len() != f_mat.nrows() {
        return Err(dim_err("lp rhs", f_mat.nrows(), f_vec.len()));
    }
    match normalized_rows(f_mat, f_vec) {
        Some((g, h)) => feasible_point_normalized(&g, &h),
        None => Ok(None),
    }
}

/// Unit-norm rows; all-zero rows are dropped when satisfied and make the
/// system infeasible otherwise.
fn normalized_rows(f_mat: &DMatrix<f64>, f_vec: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let n = f_mat.ncols();
    let mut rows = Vec::with_capacity(f_mat.nrows());
    let mut rhs = Vec::with_capacity(f_mat.nrows());
    for i in 0..f_mat.nrows() {
        let row = f_mat.row(i);
        let norm = row.norm();
        if norm <= 1e-14 {
            if f_vec[i] < -FEAS_TOL {
                return None;
            }
            continue;
        }
        rows.push(row / norm);
        rhs.push(f_vec[i] / norm);
    }
    let g = if rows.is_empty() {
        DMatrix::zeros(0, n)
    } else {
        DMatrix::from_rows(&rows)
    };
    Some((g, DVector::from_vec(rhs)))
}

fn feasible_point_normalized(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let n = g.ncols();
    let deficit = -h.iter().copied().fold(0.0, f64::min);
    if deficit <= 0.0 {
        return Ok(Some(DVector::zeros(n)));
    }
    // Elastic problem over (x, s): maximize −s subject to G x − s ≤ h + t0,
    // −s ≤ t0, where the true elastic variable is t = s + t0.
    let m = g.nrows();
    let mut ge = DMatrix::zeros(m + 1, n + 1);
    ge.view_mut((0, 0), (m, n)).copy_from(g);
    for i in 0..m {
        ge[(i, n)] = -1.0;
    }
    ge[(m, n)] = -1.0;
    let mut he = DVector::from_element(m + 1, deficit);
    for i in 0..m {
        he[i] += h[i];
    }
    let mut ce = DVector::zeros(n + 1);
    ce[n] = -1.0;
    let y = solve_from_origin(&ce, &ge, &he)?
        .ok_or_else(|| value_err("lp phase one", "elastic problem reported unbounded"))?;
    let t = y[n] + deficit;
    if t > FEAS_TOL {
        return Ok(None);
    }
    Ok(Some(y.rows(0, n).into_owned()))
}

/// Simplex on `max cᵀy, G y ≤ h` with `h ≥ 0` so the slack basis is feasible.
/// Returns `None` if unbounded.
fn solve_from_origin(c: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let n = g.ncols();
    let m = g.nrows();
    let cols = 2 * n + m;
    let width = cols + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = g[(i, j)];
            row[n + j] = -g[(i, j)];
        }
        row[2 * n + i] = 1.0;
        row[cols] = h[i];
    }
    {
        let obj = &mut t[m * width..];
        for j in 0..n {
            obj[j] = -c[j];
            obj[n + j] = c[j];
        }
    }
    let mut basis: Vec<usize> = (2 * n..2 * n + m).collect();

    let max_pivots = 50 * (m + cols) + 1000;
    let mut pivots = 0;
    loop {
        let entering = {
            let obj = &t[m * width..m * width + cols];
            obj.iter().position(|&v| v < -PIVOT_TOL)
        };
        let Some(col) = entering else { break };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + col];
            if a > PIVOT_TOL {
                let ratio = t[i * width + cols] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[i] < basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Ok(None);
        };
        pivot(&mut t, width, m, row, col);
        basis[row] = col;

        pivots += 1;
        if pivots > max_pivots {
            return Err(value_err("simplex", "pivot limit exceeded"));
        }
    }

    let mut y = DVector::zeros(n);
    for (i, &b) in basis.iter().enumerate() {
        let v = t[i * width + cols];
        if b < n {
            y[b] += v;
        } else if b < 2 * n {
            y[b - n] -= v;
        }
    }
    Ok(Some(y))
}

fn pivot(t: &mut [f64], width: usize, m: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for v in &mut t[row * width..(row + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
    for i in 0..=m {
        if i == row {
            continue;
        }
        let factor = t[i * width + col];
        if factor == 0.0 {
            continue;
        }
        let target = &mut t[i * width..(i + 1) * width];
        for (v, pv) in target.iter_mut().zip(pivot_row.iter()) {
            *v -= factor * pv;
        }
        target[col] = 0.0;
    }
}
