pub mod data;
pub mod checkpoint;
pub mod checks;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod layers;
pub mod maskblock;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{Error, Result};
