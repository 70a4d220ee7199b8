pub mod advection;
pub mod ale;
pub mod element;
pub mod error;
pub mod lagrangian;
pub mod material;
pub mod mesh;
pub mod mor;
pub mod output;
pub mod scenario;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
