//! Popularity-prediction pipeline: query expansion over past time windows,
//! image retrieval, label cleaning by confident learning, POP signal
//! forming, style discovery with NMF, and forecasting.

pub mod classifier;
pub mod confident;
pub mod embedding;
pub mod error;
pub mod expansion;
pub mod forecast;
pub mod gateway;
pub mod metrics;
pub mod nmf;
pub mod pipeline;
pub mod series;
pub mod signal;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
