//! Closed-loop social-navigation simulator and controller library.
//!
//! The controller family is sampling-based MPPI with three variants:
//! a distance-penalty baseline (`vanilla`), a Monte Carlo joint-risk
//! controller that treats the robot pose as exact (`dra`), and the dual
//! uncertainty tube controller (`ducct`) which additionally carries the
//! localization covariance through the dynamics with an unscented transform
//! and folds it into the collision risk through a closed-form
//! belief/footprint integral.
//!
//! Around the controllers sit a corridor world with social-force pedestrians,
//! an odometry-drift localizer whose reported covariance can be deliberately
//! miscalibrated, and a metrics layer that scores the executed-step risk
//! against realized collisions (Brier score, log loss) and checks estimator
//! consistency with NEES statistics.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod mppi;
pub mod occupancy;
pub mod prediction;
pub mod risk;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

/// Planar vector in metres (or metres per second, depending on context).
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2×2 matrix, used for positional covariances.
pub type Mat2 = nalgebra::Matrix2<f64>;
/// 3×3 matrix, used for pose covariances.
pub type Mat3 = nalgebra::Matrix3<f64>;
