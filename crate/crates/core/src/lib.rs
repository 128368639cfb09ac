//! Multi state constraint equivariant filter for visual-inertial odometry
//! with online extrinsic and intrinsic calibration.

pub mod error;
pub mod estimator;
pub mod eval;
pub mod experiment;
pub mod lie;
pub mod sim;
pub mod filter;
pub mod symmetry;

pub use error::{Error, Result};
