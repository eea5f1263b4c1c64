pub mod benchmark;
pub mod error;
pub mod estimate;
pub mod forecast;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod model;
pub mod mrc;
pub mod noise;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod simulate;

pub use error::{GrouError, Result};
