pub mod denominator;
pub mod error;
pub mod foliation;
pub mod galilean;
pub mod cli;
pub mod model;
pub mod quad;
pub mod smatrix;
pub mod survival;

pub use error::{Error, Result};
