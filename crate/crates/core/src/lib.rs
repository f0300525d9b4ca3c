//! Pathwise stochastic calculus and measure-change verification.
//!
//! The crate simulates coupled semimartingale scenarios on event-augmented
//! grids, applies the general (Lenglart) and classical Girsanov transforms,
//! verifies martingale representations constructively, and checks every
//! claim against exact finite-space oracles or Monte Carlo drift tests.

pub mod batch;
pub mod calculus;
pub mod finite;
pub mod mc;
pub mod measure;
pub mod models;
pub mod path;
pub mod quad;
pub mod representation;
pub mod suite;
pub mod tol;

pub use calculus::{quadratic_covariation, stochastic_integral, IntegrandPath};
pub use measure::{
    compensator, detect_zeta_eta, girsanov_classical, inverse_transform, lenglart_transform,
    q_expectation, Accessibility, CompensatorPath, CompensatorSpec, StoppingTimeRecord,
};
pub use models::{RngStream, Scenario};
pub use path::{align, make_path, CadlagPath, PathPanel, StoppingTimeObs};
