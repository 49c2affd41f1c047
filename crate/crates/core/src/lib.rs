//! Decide from noisy input-state-output data whether every system compatible
//! with the data has a given structural property.

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod geometric;
pub mod informativity;
pub mod linalg;
pub mod oracle;
pub mod pencil;
pub mod problem;
pub mod serde_complex;

pub use error::{Error, Result};
pub use informativity::{informativity_test, Informativity, Property, Verdict};
pub use linalg::{Matrix, Subspace, Tolerances};
pub use problem::{DataSet, SystemStructure};
