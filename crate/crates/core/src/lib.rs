pub mod autodiff;
pub mod classifier;
pub mod encoder;
pub mod error;
pub mod expander;
pub mod harness;
pub mod hypergraph;
pub mod iso;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
