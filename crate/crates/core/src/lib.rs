//! Glauber birth-and-death dynamics of continuous particle systems, the
//! K-transform calculus on finite configurations, and the Kirkwood-Salsburg
//! equation for correlation functions.
//!
//! Every identity that links the generator, the correlation functions and
//! Gibbs measures is available in two forms: exact on a finite
//! [`SiteSpace`](model::SiteSpace), where Lebesgue-Poisson integrals are
//! subset sums, and statistical on the periodic box, through simulation of the
//! jump process.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod generator;
pub mod ks;
pub mod model;

pub use combinatorics::{Caps, CylinderFunction, QuasiObservable, SiteFunction};
pub use dynamics::{SimParams, TrajectorySample};
pub use error::{Error, Result};
pub use generator::GeneratorContext;
pub use ks::{CorrelationTable, FixedPointReport};
pub use model::{
    BoxGeometry, FiniteConfiguration, ModelParams, PairPotential, Region, SiteSet, SiteSpace,
    SpacePoint,
};
