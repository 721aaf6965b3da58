//! Infinite-horizon discrete LQR.
//!
//! Sign convention used throughout the crate: with `e = x − sp` the local law
//! is `u = −K·e`, i.e. [`control_law`] returns `K·(sp − x)`. This is the
//! stabilizing orientation; it feeds back the error measured from the
//! set-point to the state.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, value_err, Error, Result};

pub const DARE_MAX_ITERATIONS: usize = 10_000;
pub const DARE_TOLERANCE: f64 = 1e-10;

/// Stage cost `xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(value_err("cost", "Q and R must be square"));
        }
        if q.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(value_err("cost", "non-finite entry"));
        }
        if !is_symmetric(&q, 1e-12) || !is_symmetric(&r, 1e-12) {
            return Err(value_err("cost", "Q and R must be symmetric"));
        }
        if r.clone().cholesky().is_none() {
            return Err(value_err("cost", "R must be positive definite"));
        }
        let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-12 * q.amax().max(1.0) {
            return Err(value_err("cost", "Q must be positive semidefinite"));
        }
        Ok(Self { q, r })
    }
}

/// Riccati solution `P` and the associated optimal gain `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
}

impl LqrSolution {
    /// `A − B·K`.
    pub fn closed_loop(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a - b * &self.k
    }
}

/// Solves the DARE by iterating the Riccati map from `P₀ = Q`.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, cost: &CostSpec) -> Result<LqrSolution> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(dim_err("solve_dare A", "square", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if b.nrows() != n {
        return Err(dim_err("solve_dare B rows", n, b.nrows()));
    }
    if cost.q.nrows() != n {
        return Err(dim_err("solve_dare Q", n, cost.q.nrows()));
    }
    if cost.r.nrows() != b.ncols() {
        return Err(dim_err("solve_dare R", b.ncols(), cost.r.nrows()));
    }

    // Below the absolute target the map's own rounding noise dominates for
    // large P, so the stopping threshold never drops under that floor.
    let a_norm = a.amax() * n as f64;
    let mut p = cost.q.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=DARE_MAX_ITERATIONS {
        let next = riccati_map(a, b, cost, &p)?;
        residual = (&next - &p).amax();
        p = next;
        if !residual.is_finite() {
            break;
        }
        let floor = 64.0 * f64::EPSILON * p.amax() * (1.0 + a_norm * a_norm);
        if residual <= DARE_TOLERANCE.max(floor) {
            let k = gain(a, b, &cost.r, &p)?;
            return Ok(LqrSolution { p, k, iterations: it });
        }
    }
    Err(Error::NotStabilizable {
        iterations: DARE_MAX_ITERATIONS,
        residual,
    })
}

/// `AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q`, symmetrized.
pub fn riccati_map(a: &DMatrix<f64>, b: &DMatrix<f64>, cost: &CostSpec, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = gain(a, b, &cost.r, p)?;
    let pa = p * a;
    let mut next = a.transpose() * &pa - (a.transpose() * p * b) * k + &cost.q;
    symmetrize(&mut next);
    Ok(next)
}

/// Max-norm of `Riccati(P) − P`.
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, cost: &CostSpec, p: &DMatrix<f64>) -> Result<f64> {
    Ok((riccati_map(a, b, cost, p)? - p).amax())
}

fn gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let chol = s
        .cholesky()
        .ok_or_else(|| value_err("solve_dare", "R + BᵀPB lost positive definiteness"))?;
    Ok(chol.solve(&(bt_p * a)))
}

/// `K·(sp − x)`; see the module docs for the sign convention.
pub fn control_law(k: &DMatrix<f64>, sp: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    if sp.len() != k.ncols() || x.len() != k.ncols() {
        return Err(dim_err("control_law", k.ncols(), format!("sp {} / x {}", sp.len(), x.len())));
    }
    Ok(k * (sp - x))
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> (DMatrix<f64>, DMatrix<f64>, CostSpec) {
        (
            DMatrix::from_row_slice(2, 2, &[0.9752, 1.4544, -0.0327, 0.9315]),
            DMatrix::from_row_slice(2, 1, &[0.0248, 0.0327]),
            CostSpec::new(DMatrix::identity(2, 2) * 10.0, DMatrix::identity(1, 1)).unwrap(),
        )
    }

    #[test]
    fn zero_dynamics_gives_q_and_zero_gain() {
        let cost = CostSpec::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DMatrix::identity(1, 1) * 3.0,
        )
        .unwrap();
        let sol = solve_dare(&DMatrix::zeros(2, 2), &DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), &cost).unwrap();
        assert!((sol.p - cost.q).amax() < 1e-14);
        assert!(sol.k.amax() < 1e-14);
    }

    #[test]
    fn scalar_matches_fixed_point_oracle() {
        // Oracle: scalar Riccati recursion iterated independently to 1e-12.
        let (a, b, q, r) = (0.5f64, 1.0f64, 1.0f64, 1.0f64);
        let mut p = q;
        loop {
            let next = a * a * p - (a * b * p).powi(2) / (r + b * b * p) + q;
            if (next - p).abs() < 1e-15 {
                p = next;
                break;
            }
            p = next;
        }
        let cost = CostSpec::new(DMatrix::from_element(1, 1, q), DMatrix::from_element(1, 1, r)).unwrap();
        let sol = solve_dare(&DMatrix::from_element(1, 1, a), &DMatrix::from_element(1, 1, b), &cost).unwrap();
        assert!((sol.p[(0, 0)] - p).abs() < 1e-12, "{} vs {}", sol.p[(0, 0)], p);
        assert!((sol.k[(0, 0)] - a * b * p / (r + b * b * p)).abs() < 1e-12);
    }

    #[test]
    fn worked_example_gain() {
        let (a, b, cost) = example();
        let sol = solve_dare(&a, &b, &cost).unwrap();
        assert!((sol.k[(0, 0)] - 1.6478).abs() < 1e-3);
        assert!((sol.k[(0, 1)] - 11.8344).abs() < 1e-3);
        assert!(dare_residual(&a, &b, &cost, &sol.p).unwrap() <= 1e-9);
        assert!(spectral_radius(&sol.closed_loop(&a, &b)) < 1.0 - 1e-9);
    }

    #[test]
    fn unstabilizable_pair_is_reported() {
        // Unstable mode 2.0 is not reachable from the input.
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let cost = CostSpec::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(solve_dare(&a, &b, &cost), Err(Error::NotStabilizable { .. })));
    }

    #[test]
    fn control_law_examples() {
        let k = DMatrix::from_row_slice(1, 2, &[1.6478, 11.8344]);
        let x = DVector::from_vec(vec![0.3, -0.1]);
        assert_eq!(control_law(&k, &x, &x).unwrap()[0], 0.0);
        let zero = DVector::zeros(2);
        let u = control_law(&k, &DVector::from_vec(vec![1.0, 0.0]), &zero).unwrap();
        assert!((u[0] - 1.6478).abs() < 1e-12);
        let u = control_law(&k, &DVector::from_vec(vec![0.0, 1.0]), &zero).unwrap();
        assert!((u[0] - 11.8344).abs() < 1e-12);
        assert!(control_law(&k, &DVector::zeros(3), &zero).is_err());
    }

    #[test]
    fn cost_validation() {
        assert!(CostSpec::new(DMatrix::identity(2, 2), DMatrix::zeros(1, 1)).is_err());
        assert!(CostSpec::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), DMatrix::identity(1, 1)).is_err());
        assert!(CostSpec::new(-DMatrix::identity(2, 2), DMatrix::identity(1, 1)).is_err());
    }
}
