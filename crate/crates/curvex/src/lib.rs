//! Level-set curvature toolkit: file formats, parallel drivers and
//! evaluation around the `curvex-core` numerics.

pub use curvex_core as core;

pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
