//! Joint transmit/receive filter design for delay-Doppler estimation with
//! sub-Nyquist sampling.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod fim_approx;
pub mod fim_exact;
pub mod freqops;
pub mod model;
pub mod optimizer;
pub mod report;
pub mod symmetry;
pub mod waveforms;

pub use error::{Error, Result};
