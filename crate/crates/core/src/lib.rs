//! Location-to-angle beam alignment for RIS-assisted mmWave links.

pub mod anglemap;
pub mod arrays;
pub mod baselines;
pub mod beamforming;
pub mod channel;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod ris;

pub use error::{Error, Result};
