pub mod bryant;
pub mod cli;
pub mod compare;
pub mod error;
pub mod flow;
pub mod numerics;
pub mod rescale;
pub mod spectral;
pub mod tip;

pub use error::{Error, Result};
