//! Numerical substrate: dense matrices, a reverse-mode tape, dense layers,
//! Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod matrix;
pub mod nn;
pub mod params;
pub mod tape;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use matrix::{Groups, Matrix};
pub use nn::{Activation, Linear, Mlp};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{SelectSpan, Tape, Var};
