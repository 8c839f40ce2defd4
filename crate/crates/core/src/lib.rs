//! Linked twist maps with opposed shears on a figure-eight track, and the
//! surgered fibre flow that suspends them.

pub mod cli;
pub mod criticality;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod maps;
pub mod plot;
pub mod polygon;
pub mod segments;

pub use error::{Error, Result};
