//! Neural encodings of a fixed linear program and attribution methods
//! applied to networks trained on them.

pub mod attribution;
pub mod dataset;
pub mod encodings;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod function;
pub mod grid;
pub mod heatmap;
pub mod linalg;
pub mod lp;
pub mod neural;
pub mod par;
pub mod properties;

pub use error::{Error, Result};
