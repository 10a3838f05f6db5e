//! Experiment harness, lemma checks and command-line front end for
//! [`lmoopt_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod output;
pub mod verify;

pub use error::{CliError, Result};
