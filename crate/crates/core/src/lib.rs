#![no_std]
extern crate alloc;

pub mod atlas;
pub mod data;
pub mod error;
pub mod gauge;
pub mod jamming;
pub mod linalg;
pub mod seed;
pub mod stability;
pub mod stats;
pub mod synth;
pub mod transport;

pub use data::SampleMatrix;
pub use error::{Error, Result};
