//! Task-aware feature synthesis for compositional zero-shot recognition.

pub mod cli;
pub mod data;
pub mod diff;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod losses;
pub mod models;
pub mod training;

pub use error::{Error, Result};
