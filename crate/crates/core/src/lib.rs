//! Numerical laboratory for finite-horizon fractional gradients on an interval.
//!
//! The crate builds the truncated Riesz kernels, evaluates the nonlocal
//! gradient through its potential `Q`, solves the convolution problem whose
//! solutions are exactly the functions with vanishing nonlocal gradient, and
//! minimizes quadratic nonlocal Neumann energies over the orthogonal
//! complement of that space.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`, which is what the tolerances are tuned for.

// NaN must fail validation, so `!(x > 0)` is preferred over `x <= 0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod scalar;
pub mod selftest;
pub mod spectral;
pub mod variational;
pub mod zero_grad;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DomainGrid = domain::DomainGrid<f64>;
pub type Field = domain::Field<f64>;
pub type CutoffProfile = kernels::CutoffProfile<f64>;
pub type KernelTable = kernels::KernelTable<f64>;
pub type PotentialKernel = kernels::PotentialKernel<f64>;
pub type TorusTransform = spectral::TorusTransform<f64>;
pub type BoundaryData = zero_grad::BoundaryData<f64>;
pub type NBasis = zero_grad::NBasis<f64>;
pub type NeumannProblem = variational::NeumannProblem<f64>;
pub type NeumannSolution = variational::NeumannSolution<f64>;
