//! Numerical laboratory for the boundary-driven partial exclusion process SEP(α).

pub mod acceptance;
pub mod error;
pub mod fluctuations;
pub mod kmc;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod ode;
pub mod oracle;
pub mod spectral;
pub mod walks;

pub use error::{Error, Result};
pub use model::{Configuration, ModelParams};
