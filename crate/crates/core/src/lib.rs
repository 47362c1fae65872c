//! Numerical laboratory for a fully-discrete stochastic wave equation.
//!
//! The crate provides staggered space-time meshes with their discrete
//! calculus, a Carleman weight family, an explicit stochastic scheme with
//! reproducible Monte Carlo ensembles, and estimators that assemble every
//! term of the weighted energy (Carleman) and Lipschitz stability estimates.

pub mod error;
pub mod estimator;
pub mod function;
pub mod identities;
pub mod integral;
pub mod mesh;
pub mod ops;
pub mod sde;
pub mod weight;

pub use error::{Error, Result};
pub use estimator::{carleman_terms, martingale_check, stability_terms, CarlemanReport, MCStatistic, StabilityReport};
pub use function::GridFunction;
pub use identities::{identity_residuals, IdentityId, ResidualTable};
pub use integral::{integrate, norm, trace, Norm, Region, Side};
pub use mesh::{Axis, Grid, SpaceTag, Stagger, TimeTag};
pub use ops::{apply, Op};
pub use sde::{
    run_ensemble, sample_brownian, solve, Ensemble, ProblemData, SchemeCoefficients, SourceMode, Trajectory,
};
pub use weight::{check_admissible, eval_weights, WeightParams};
