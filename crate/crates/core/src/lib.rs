//! Next point-of-interest recommendation with K parallel sub-states, each
//! decaying at its own spatiotemporal rate, combined by context-conditioned
//! aggregation.
//!
//! Data flows `ingest` → `encoding` → `dynamics` → `objective`, with `model`
//! wiring one trajectory end to end, `training` fitting parameters and
//! `evaluation` ranking the full catalog.

pub mod config;
pub mod dynamics;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod params;
pub mod training;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use params::ParameterSet;
