//! Numerical laboratory for lower bounds of the Kobayashi metric near
//! boundary points of finite and infinite type.

pub mod acceptance;
pub mod bumping;
pub mod cli;
pub mod cutoff;
pub mod domains;
pub mod error;
pub mod field;
pub mod holomaps;
pub mod levi;
pub mod metric;
pub mod quad;
pub mod rates;

pub use error::{Error, Result};
