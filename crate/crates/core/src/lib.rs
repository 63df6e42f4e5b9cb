pub mod density;
pub mod error;
pub mod euler;
pub mod harness;
pub mod models;
pub mod weights;
pub mod wiener;

pub use error::{Error, Result};
