//! Simulation and verification library for empirical processes of dependent
//! standardized Gaussian sequences: covariance families and their dependence
//! measure, deterministic multivariate Gaussian sampling, Hermite expansion
//! machinery, sup-deviation statistics, finite-sample bound formulas, and a
//! Monte Carlo harness that checks the bounds at desk scale.

pub mod bounds;
pub mod covmodels;
pub mod empirical;
pub mod gauss;
pub mod harness;
pub mod hermite;
pub mod kernel;
pub mod sampler;

pub use bounds::{BoundReport, Regime};
pub use covmodels::{CovarianceModel, FamilySpec, ModelFamily};
pub use empirical::{DeviationMethod, DeviationResult};
pub use kernel::KernelSpec;
pub use sampler::{CholeskyFactor, GaussianPath, PathSampler, UniformPath};
