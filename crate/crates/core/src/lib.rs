//! Partially fake audio detection by joint anti-spoofing classification and
//! fake-span discovery.

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod model;
pub mod rng;
pub mod span;
pub mod toy;
pub mod train;

pub use audio::{read_wav, write_wav, Waveform, SAMPLE_RATE};
pub use error::{Error, Result};
