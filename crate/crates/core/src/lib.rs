//! Totally positive kernel density estimation.
//!
//! The TPKDE is a Gaussian mixture centered on the min-max closure of a
//! sample, which makes it MTP2 where the standard KDE need not be. This
//! crate provides the closure algorithms, both estimators, MTP2 and
//! Constraint A checkers, MTP2 Gaussian generation, and the experiment
//! harnesses used by the `tpkde` command-line tool.

pub mod density;
pub mod error;
pub mod experiments;
pub mod gaussians;
pub mod io;
pub mod lattice;
pub mod manifest;
pub mod positivity;
pub mod rng;

pub use density::{kde_build, silverman_bandwidth, tpkde_build, Density, IsotropicMixture};
pub use error::{Error, Result};
pub use gaussians::GaussianSpec;
pub use lattice::{
    closure_grid, closure_naive, join, meet, Closure, ClosureConfig, ClosureEngine, ClosureStats, Point,
    PointSet,
};
pub use positivity::{HypercubeValues, ViolationReport, DEFAULT_TOLERANCE};
