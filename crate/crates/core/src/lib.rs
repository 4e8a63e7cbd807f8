//! Estimation of top income and wealth shares from weighted microdata, with
//! principled uncertainty quantification and a calibrated random-growth model
//! for projecting income concentration.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! * [`microdata`] — weighted, stratified, multiply-imputed microdata; CSV
//!   ingestion; synthetic population generation with exact brute-force oracles.
//! * [`topshare`] — the interpolated weighted top-share estimator and the
//!   multiple-imputation grand estimate.
//! * [`uncertainty`] — cluster-stratified bootstrap replicates (Gower + PAM +
//!   silhouette), sampling error, imputation error, combined standard errors,
//!   and confidence intervals.
//! * [`capitalize`] — wealth estimation from capital income flows under
//!   homogeneous and heterogeneous rate-of-return regimes.
//! * [`trend`] — weighted and unweighted linear trend regression.
//! * [`growthsim`] — a two-type random-growth model of log income: steady
//!   states, transition dynamics, and Monte Carlo confidence envelopes over
//!   calibration-target uncertainty.
//!
//! All stochastic operations take explicit seeds and use a fixed, platform
//! stable generator (ChaCha8), so every result in this crate is reproducible
//! bit for bit given the same inputs.

// Validations are written as `!(x > 0.0)` on purpose: the negated form also
// rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capitalize;
pub mod growthsim;
pub mod microdata;
pub mod numeric;
pub mod topshare;
pub mod trend;
pub mod uncertainty;

pub use microdata::{MicrodataSet, Observation, StratumProfile, SyntheticPopulationSpec};
pub use topshare::{ShareEstimate, ShareQuery};
pub use uncertainty::{ClusterAssignment, ReplicateSet};

/// How an error should be reported by a batch driver: bad inputs versus a
/// numerical method that failed on valid inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Input or configuration violates a precondition.
    Validation,
    /// A numerical procedure failed (non-convergence, mass drift, ...).
    Numerical,
}
