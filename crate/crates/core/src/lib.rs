#![no_std]

extern crate alloc;

pub mod dataset;
pub mod field;
pub mod geometry;
pub mod hybrid;
pub mod metrics;
pub mod neural;
pub mod packet;
pub mod preprocess;
pub mod rng;
