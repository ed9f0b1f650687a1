pub mod bias;
pub mod cli;
pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub mod grid;
pub mod hankel;
pub mod ident;
pub mod model;
