//! Hybrid DeepONet neural operators: FNO, KAN and MLP branches with KAN or
//! MLP trunks, plus the data, training and equivalence tooling around them.

pub mod data;
pub mod deeponet;
pub mod equiv;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Activation, Tape, Tensor, Var};
