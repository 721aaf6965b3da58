//! Built-in plants: the second-order regulator example and the ball-and-beam
//! triple integrator.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::lti::{zoh_discretize, ContinuousLinearModel, DiscreteLinearModel};
use crate::mpc::{ConstraintSet, MpcSpec, TerminalOptions};
use crate::riccati::CostSpec;

pub const EXAMPLE_DT: f64 = 0.05;

pub fn example_model() -> DiscreteLinearModel {
    DiscreteLinearModel::new(
        DMatrix::from_row_slice(2, 2, &[0.9752, 1.4544, -0.0327, 0.9315]),
        DMatrix::from_row_slice(2, 1, &[0.0248, 0.0327]),
        EXAMPLE_DT,
    )
    .expect("example model is well formed")
}

/// Same as [`example_model`] with the first entry of `A` perturbed to 0.95.
pub fn example_truth_model() -> DiscreteLinearModel {
    let mut m = example_model();
    m.a[(0, 0)] = 0.95;
    m
}

pub fn example_cost() -> CostSpec {
    CostSpec::new(DMatrix::identity(2, 2) * 10.0, DMatrix::identity(1, 1)).expect("example cost is valid")
}

/// `|x₁| ≤ 5`, `|x₂| ≤ 0.2`.
pub fn example_constraints() -> ConstraintSet {
    ConstraintSet::symmetric_bounds(&[Some(5.0), Some(0.2)], &[None])
}

/// The terminal set is additionally shaped by `|u| ≤ 1.75` on the local law.
pub fn example_terminal() -> TerminalOptions {
    TerminalOptions {
        enabled: true,
        extra: Some(ConstraintSet::symmetric_bounds(&[None, None], &[Some(1.75)])),
        ..TerminalOptions::default()
    }
}

pub fn example_spec(horizons: Vec<usize>, terminal: bool) -> Result<MpcSpec> {
    let t = if terminal {
        example_terminal()
    } else {
        TerminalOptions::disabled()
    };
    MpcSpec::new(example_model(), example_cost(), example_constraints(), t, horizons)
}

pub fn example_alpha() -> DVector<f64> {
    DVector::from_vec(vec![-1.0, 0.16])
}

pub fn example_beta() -> DVector<f64> {
    DVector::from_vec(vec![3.2, 0.15])
}

pub const BALL_BEAM_KV: f64 = 7.0;
pub const BALL_BEAM_KPHI: f64 = 4.4;
pub const BALL_BEAM_DT: f64 = 0.05;

/// `ṗ = v`, `v̇ = −k_v φ`, `φ̇ = k_φ u`; state `(p, v, φ)`.
pub fn ball_beam_continuous(kv: f64, kphi: f64) -> ContinuousLinearModel {
    let ac = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, -kv, 0.0, 0.0, 0.0]);
    let bc = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, kphi]);
    ContinuousLinearModel::new(ac, bc).expect("ball-and-beam model is well formed")
}

pub fn ball_beam_model() -> DiscreteLinearModel {
    zoh_discretize(&ball_beam_continuous(BALL_BEAM_KV, BALL_BEAM_KPHI), BALL_BEAM_DT).expect("valid sampling period")
}

pub fn ball_beam_cost() -> CostSpec {
    CostSpec::new(DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 1.0, 1.0])), DMatrix::identity(1, 1))
        .expect("ball-and-beam cost is valid")
}

/// `|p| ≤ 0.55`, `|φ| ≤ 0.785`, `|u| ≤ 10`.
pub fn ball_beam_constraints() -> ConstraintSet {
    ConstraintSet::symmetric_bounds(&[Some(0.55), None, Some(0.785)], &[Some(10.0)])
}

/// Default set-point schedule as `(time, position)` steps.
pub fn ball_beam_profile() -> Vec<(f64, f64)> {
    vec![(0.0, 0.0), (1.0, 0.52), (4.0, -0.52), (9.0, 0.52)]
}

pub fn default_horizons() -> Vec<usize> {
    (6..=22).collect()
}
