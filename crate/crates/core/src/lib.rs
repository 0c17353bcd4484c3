//! Online estimation of a parameter from a data stream using Bayes updates on
//! finite particle supports that are perturbed on a growing schedule.

pub mod diag;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod meanfield;
pub mod models;
pub mod norm;
pub mod numeric;
pub mod particles;
pub mod rng;
pub mod schedule;
pub mod support;

pub use error::{Error, Result};
