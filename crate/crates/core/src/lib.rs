//! Wasserstein distributionally robust control (WDRC) for discrete-time,
//! partially observable linear systems, using the Gelbrich approximation of
//! the Wasserstein ambiguity set.
//!
//! The offline pipeline is `riccati` (control Riccati quantities), `ambiguity`
//! (worst-case covariance and filter ARE), `estimator` (Kalman filtering under
//! the worst-case moments) and `design` (end-to-end synthesis, bounds and
//! certificates). `sim` runs the closed loop.

pub mod ambiguity;
pub mod design;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod sim;

pub use error::{Assumption, Result, WdrcError};
pub use linalg::{Mat, Vector};
