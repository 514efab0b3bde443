//! Speech feature extraction built on empirical mode decomposition of the
//! FFT magnitude spectrum followed by a fast Walsh-Hadamard transform,
//! plus the classifiers used to compare feature sets.

pub mod emd;
pub mod error;
pub mod features;
pub mod fwht;
pub mod gammatone;
pub mod learn;
pub mod signal_io;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
