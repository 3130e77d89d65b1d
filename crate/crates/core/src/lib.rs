//! Particle simulation of kernelized gradient flows of the inclusive KL
//! divergence `KL(π | μ)`.
//!
//! The building blocks are radial kernels and Stein kernels ([`kernel`]),
//! weighted particle ensembles and targets ([`measure`]), exact discrepancies
//! between discrete measures ([`discrepancy`]) and one integrator per flow
//! ([`flow`]). [`oracle`] holds brute-force reference computations used by
//! the test suite and by the `check` subcommand.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod discrepancy;
pub mod error;
pub mod flow;
pub mod kernel;
pub mod measure;
pub mod oracle;
pub mod points;
pub mod rng;

pub use discrepancy::{ksd2, mmd2, MetricsRecord};
pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowKind};
pub use kernel::{KernelSpec, SteinKernel};
pub use measure::{Capability, DiscreteMeasure, Ensemble, Target};
pub use points::Points;
