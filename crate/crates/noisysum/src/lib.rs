//! File formats, experiments and the command-line front end for
//! [`noisysum_core`].

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;

pub use error::{AppError, AppResult};
