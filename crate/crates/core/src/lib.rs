pub mod cli;
pub mod error;
pub mod fourier;
pub mod lattice;
pub mod mixing;
pub mod observables;
pub mod phase;
pub mod presets;
pub mod rational;

pub use error::{Error, Result};
