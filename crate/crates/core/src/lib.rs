//! Covert queueing analysis for a bufferless (M/M/1/1) server.
//!
//! A server may slip extra (Nillie) jobs in among the jobs of an auditing
//! client, Willie, who only sees whether each of his arrivals found the
//! server busy. The crate covers:
//!
//! - [`model`]: rates and the busy/idle transition matrices under H0 and H1
//! - [`sim`]: event-driven simulation of the observation sequence
//! - [`detect`]: the log-likelihood-ratio test and its exact error rates
//! - [`exponent`]: the error exponent, closed form and numeric
//! - [`covert`]: the epsilon-covertness criterion and rate bound
//! - [`experiment`]: campaigns over observation lengths
//! - [`cli`]: the `covq` command-line tool

pub mod cli;
pub mod covert;
pub mod detect;
pub mod error;
pub mod experiment;
pub mod exponent;
pub mod model;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{Hypothesis, ModelParams, TransitionMatrix};
pub use rng::RngSeed;
