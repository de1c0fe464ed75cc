pub mod barrier;
pub mod continuation;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod flow;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod manifold;
pub mod selftest;

pub use error::{Error, Result};
