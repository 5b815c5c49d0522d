//! Simulation, numerics and estimators for perpetuities
//! `D_n = Σ η_k e^{S_k}` and the related stochastic difference equations.

pub mod cramer;
pub mod dd;
pub mod error;
pub mod estimate;
pub mod gof;
pub mod laws;
pub mod limits;
pub mod modulated;
pub mod numerics;
pub mod perpetuity;
pub mod real;
pub mod rng;
pub mod subexp;

pub use dd::DoubleDouble;
pub use error::{Error, Result};
pub use estimate::{EstimateMethod, McMean, TailEstimate};
pub use laws::{Combine, JointLaw, ScalarLaw};
pub use perpetuity::Trajectory;
pub use real::Real;
pub use rng::RandomStream;

pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type TrajectoryDd = Trajectory<DoubleDouble>;
