//! Value-function networks for bilevel programs with binary leader and
//! follower decisions that interact only through linear constraints.

pub mod approx;
pub mod bench;
pub mod follower;
pub mod generator;
pub mod instance;
pub mod io;
pub mod network;
pub mod numerics;
pub mod oracle;
pub mod reform;
pub mod solver;
pub mod strengthen;

pub use valnet_milp::{Rational, Scalar};

/// Instance over `f64`, the production scalar.
pub type Instance = instance::BilevelInstance<f64>;
/// Instance over exact rationals.
pub type ExactInstance = instance::BilevelInstance<Rational>;
