//! Online identification of separable nonlinear regression models
//! `y = Σ c_j φ_j(a; x) + ε`.
//!
//! * [`model`]: the separable-model abstraction, a three-term complex
//!   exponential model and RBF-AR(X) time-series models.
//! * [`batch_vp`]: offline variable projection (reduced residual, Golub–Pereyra
//!   and Kaufman Jacobians, embedded point iteration, a Gauss–Newton fitter).
//! * [`recursive`]: the embedded-point-iteration recursive estimator (REPI)
//!   and the RGN, HRGN, RVP and SGD baselines.
//! * [`metrics`], [`data`]: evaluation quantities, synthetic streams and
//!   CSV series ingestion.
//! * [`experiment`]: benchmark protocols writing CSV traces and summaries.

pub mod batch_vp;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod recursive;

pub use error::{Error, Result};
pub use model::{Observation, ParameterState, SeparableModel};
pub use recursive::{Algorithm, EstimatorConfig, RecursiveState, StepTrace};
