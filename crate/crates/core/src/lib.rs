//! Forward/backward Kalman filtering and two-filter smoothing for linear
//! stochastic systems observed on a subset of a finite interval.
//!
//! Models are first brought to balanced form (identity state covariance), in which
//! the forward and backward realizations share one state process and the smoother
//! is the fusion `Q^{-1} = Q_-^{-1} + Q̄_+^{-1} - I`.

pub mod error;
pub mod filtering;
pub mod fusion;
pub mod model;
pub mod numerics;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{BalancedModel, LtvSystem, TimeKind};
pub use numerics::{MatrixPath, TimeGrid};
