//! Continual learning on a small dense model, organized around a
//! hierarchical gradient-similarity tree of low-rank adapters, with an LCB
//! tree bandit selecting which previous task to compare against, and a
//! regret laboratory that measures tree-structured versus flat bandit
//! exploration on synthetic smooth arm environments.

pub mod adapter;
pub mod bandit;
pub mod config;
pub mod densemath;
pub mod error;
pub mod io;
pub mod model;
pub mod parallel;
pub mod regretlab;
pub mod simtree;
pub mod taskstream;
pub mod trainer;

pub use error::{Error, Result};
