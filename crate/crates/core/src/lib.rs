//! Dynamic-feature ECG analysis: model each lead of a multi-lead waveform as a
//! second-order homogeneous ODE with time-varying coefficients, estimate the
//! latent state and its derivatives by kernel-weighted local polynomial
//! regression, recover the coefficient functions by windowed least squares,
//! and classify records from the per-lead coefficient maxima with a
//! kernel SVM under stratified cross-validation.
//!
//! Modules follow the pipeline order:
//!
//! * [`ingest`] — WFDB format-16 / CSV waveform parsing, manifests, HTTP fetch.
//! * [`ode`] — fixed-step RK4 forward solver and seeded synthetic records;
//!   the ground-truth oracle for the estimators.
//! * [`smoother`] — local polynomial state/derivative estimation and the
//!   natural cubic spline baseline.
//! * [`estimator`] — time-varying coefficient recovery and feature extraction.
//! * [`svm`] — soft-margin kernel SVM trained by sequential minimal
//!   optimization, one-vs-one multiclass.
//! * [`eval`] — stratified k-fold cross-validation, metrics, report tables.
//! * [`corpus`] — synthetic labeled corpora written in the on-disk formats.
//!
//! With the `parallel` feature (default) the per-record, per-lead and
//! per-evaluation-point loops fan out over rayon; without it everything runs
//! sequentially with identical results.

pub mod corpus;
pub mod estimator;
pub mod eval;
pub mod exec;
pub mod fmt;
pub mod ingest;
mod linalg;
pub mod ode;
mod seeds;
pub mod smoother;
pub mod svm;

pub use estimator::{EstimatorConfig, FeatureVector, LeadFeatures};
pub use ingest::{LeadSignal, SignalRecord};
pub use ode::{CoefficientTrack, OdeInitialState};
pub use smoother::{KernelKind, SmoothedState, SmootherConfig};
pub use svm::{SvmConfig, SvmModel};
