//! Linear time-invariant plant models.
//!
//! Continuous models are turned into sampled ones with a zero-order hold:
//! the augmented matrix `[[Ac, Bc], [0, 0]]·dt` is exponentiated once and
//! both `A` and `B` are read off its top block row.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, value_err, Result};

/// `ẋ = Ac·x + Bc·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLinearModel {
    pub ac: DMatrix<f64>,
    pub bc: DMatrix<f64>,
}

impl ContinuousLinearModel {
    pub fn new(ac: DMatrix<f64>, bc: DMatrix<f64>) -> Result<Self> {
        if !ac.is_square() {
            return Err(dim_err("continuous model Ac", "square", format!("{}x{}", ac.nrows(), ac.ncols())));
        }
        if bc.nrows() != ac.nrows() {
            return Err(dim_err("continuous model Bc rows", ac.nrows(), bc.nrows()));
        }
        if !all_finite(&ac) || !all_finite(&bc) {
            return Err(value_err("continuous model", "non-finite entry"));
        }
        Ok(Self { ac, bc })
    }

    pub fn states(&self) -> usize {
        self.ac.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.bc.ncols()
    }
}

/// `x[k+1] = A·x[k] + B·u[k]` sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dt: f64,
}

impl DiscreteLinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(dim_err("discrete model A", "square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != a.nrows() {
            return Err(dim_err("discrete model B rows", a.nrows(), b.nrows()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(value_err("discrete model", format!("sampling period must be positive, got {dt}")));
        }
        if !all_finite(&a) || !all_finite(&b) {
            return Err(value_err("discrete model", "non-finite entry"));
        }
        Ok(Self { a, b, dt })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// One step of the difference equation.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.states() {
            return Err(dim_err("step state", self.states(), x.len()));
        }
        if u.len() != self.inputs() {
            return Err(dim_err("step input", self.inputs(), u.len()));
        }
        Ok(&self.a * x + &self.b * u)
    }
}

/// Zero-order-hold discretization.
pub fn zoh_discretize(model: &ContinuousLinearModel, dt: f64) -> Result<DiscreteLinearModel> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(value_err("zoh_discretize", format!("sampling period must be positive, got {dt}")));
    }
    let n = model.states();
    let m = model.inputs();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&model.ac);
    aug.view_mut((0, n), (n, m)).copy_from(&model.bc);
    aug *= dt;
    let e = expm(&aug);
    DiscreteLinearModel::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
        dt,
    )
}

/// Matrix exponential by scaling and squaring around a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = one_norm(m);
    // Scale until the norm is at most 1/2 so the series converges quickly.
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if one_norm(&term) <= 1e-17 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
