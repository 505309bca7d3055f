pub mod analysis;
pub mod cli;
pub mod config;
pub mod critic;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod trainer;
