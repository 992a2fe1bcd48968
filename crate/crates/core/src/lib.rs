//! Verification engine for solder-form puzzles.

pub mod bundle;
pub mod embed;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod forms;
pub mod observables;
pub mod palatini;
pub mod puzzle;
pub mod riemann;
pub mod solderint;
pub mod specfile;
pub mod symbolic;

pub use error::{Error, Result};
