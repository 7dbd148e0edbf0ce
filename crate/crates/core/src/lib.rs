pub mod cli;
pub mod eeg_io;
pub mod error;
pub mod eval;
pub mod models;
pub mod msfs;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod report;
pub mod saliency;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
