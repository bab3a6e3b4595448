pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
mod fft;
pub mod io;
pub mod mixture;
pub mod modgd;
pub mod pipeline;
pub mod pitch;
pub mod scenario;
pub mod speaker_count;
pub mod spectral;
pub mod tracker;

pub use error::{Error, Result};
