pub mod controller;
pub mod error;
pub mod lp;
pub mod lti;
pub mod mpc;
pub mod netsim;
pub mod parallel;
pub mod polytope;
pub mod presets;
pub mod qp;
pub mod riccati;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
