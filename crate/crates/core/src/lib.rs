//! Phase-field gradient flows on doubly periodic grids, integrated with
//! constant scalar auxiliary variable (CSAV) schemes and the SAV/RSAV
//! baselines they are compared against.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod integrators;
pub mod models;
pub mod numeric;
pub mod snapshot;

pub use error::{GridError, IntegratorError, ModelError};
