//! Non-iterative envelope component estimation.

pub mod envelope;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod niece;
pub mod pmd;
pub mod simgen;
pub mod tuning;

pub use error::{Error, Result};
