//! Exact interventional SHAP values from sparse Walsh-Hadamard spectra.
//!
//! Predictors over binary feature vectors admit a Fourier expansion
//! `h(x) = sum_f c_f (-1)^<f, x>`. Once that expansion is in hand --
//! computed exactly for tree ensembles, or recovered approximately for
//! query-access black boxes -- the interventional SHAP value of every
//! feature has a closed form that is linear in the support and the
//! background dataset. The transform is paid once; each explanation
//! afterwards is a cheap, parallelizable summation.
//!
//! The pipeline in library terms:
//!
//! 1. [`tree::ensemble_to_spectrum`] or [`blackbox::exhaustive_transform`] /
//!    [`blackbox::low_degree_recovery`] produce a [`SparseSpectrum`];
//! 2. [`spectrum::prune`] optionally trades support size for fidelity;
//! 3. [`shap::ShapEngine`] turns the spectrum plus a [`BackgroundDataset`]
//!    into attributions for any number of queries;
//! 4. [`oracles`] holds two independent ground-truth engines (exponential
//!    enumeration and KernelSHAP least squares) used to verify everything.
//!
//! The `examples/` directory has one runnable program per capability; the
//! `spectral-shap` binary wraps the same calls behind `transform`,
//! `approx`, `explain`, `verify` and `bench` subcommands.

pub(crate) mod bits;
pub mod blackbox;
pub mod cli;
pub mod data;
mod error;
pub(crate) mod linalg;
pub mod oracles;
pub mod predictor;
pub mod shap;
pub mod spectrum;
pub mod synth;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use predictor::Predictor;
pub use shap::{BackgroundDataset, ShapEngine, ShapResult, Variant};
pub use spectrum::{dense_wht, prune, Frequency, PointVector, SparseSpectrum};
