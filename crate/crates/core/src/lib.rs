//! Learns PAC-correct discrete-time Markov chain abstractions of neural
//! networks, checks group fairness on them and repairs unfair networks.

pub mod abstraction;
pub mod checker;
pub mod cli;
pub mod error;
pub mod learner;
pub mod model;
pub mod repair;
pub mod sampler;
pub mod sensitivity;

pub use error::{Error, Result};
