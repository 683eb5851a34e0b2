//! Parisi PDE and Parisi functional for mixed p-spin models.

pub mod cascade;
pub mod control;
pub mod error;
pub mod exec;
pub mod format;
pub mod functional;
pub mod measure;
pub mod mixture;
pub mod optimizer;
pub mod pde;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Execution;
pub use measure::DiscreteMeasure;
pub use mixture::MixtureModel;
