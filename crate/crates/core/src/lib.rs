pub mod bench;
pub mod cli;
pub mod config;
pub mod cos;
pub mod error;
pub mod generation;
pub mod metrics;
pub mod proof_model;
pub mod retrieval;
pub mod sampling;
pub mod verifier;
