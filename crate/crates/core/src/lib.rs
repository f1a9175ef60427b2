pub mod cli;
pub mod config;
pub mod corpus;
pub mod dsp;
pub mod encoder;
pub mod error;
pub mod numerics;
pub mod trainer;
pub mod vocoder;

pub use error::{Error, Result};
