//! Configuration, result storage, artifact export and the acceptance suite
//! behind the `bergmc` binary.

pub mod config;
pub mod plot;
pub mod runner;
pub mod store;
pub mod suite;
