//! Continuous-time Glauber dynamics for lattice spin systems on tori, with
//! update-support machinery and exact small-system mixing analysis.

pub mod acceptance;
pub mod dynamics;
pub mod estimators;
pub mod error;
pub mod io;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod support;

pub use error::{Error, Result};
