//! Semiparametric estimation of two-component density mixtures
//! `g(x) = (1 - p) f0(x) + p f(x)` in which `f0` is known and both the
//! proportion `p` and the density `f` are estimated.
//!
//! The estimator is a majorization-minimization iteration on a smoothed
//! likelihood (see [`mm`]). Around it sit kernel smoothing operators
//! ([`smoothing`]), parametric densities and samplers ([`model`]), bandwidth
//! selection ([`bandwidth`]), a numerical identifiability check
//! ([`identifiability`]), a replication harness ([`experiments`]) and the
//! command-line layer ([`cli`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod identifiability;
pub mod mm;
pub mod model;
pub mod rng;
pub mod smoothing;

pub use error::{Error, Result};
pub use mm::{fit, FitResult, MmConfig, MmRunner, StopReason};
pub use model::{GridDensity, MixtureSpec, ParametricDensity, Sample};
pub use smoothing::{Bandwidth, Grid, GridFn, Kernel};
