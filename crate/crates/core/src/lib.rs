//! Multichannel speaker-counting workbench.
//!
//! First-order Ambisonics magnitude features, synthetic reverberant
//! multi-speaker scenes, a from-scratch convolutional-recurrent counting
//! network, and the tooling to study how decoding accuracy depends on the
//! position of the decoded frame inside the input sequence.

pub mod ambisonics;
pub mod analysis;
pub mod crnn;
pub mod harness;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod roomsim;
pub mod seed;
pub mod wav;

pub use error::{Error, Result};
pub mod neuralnet;
pub mod persist;
