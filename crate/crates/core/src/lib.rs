//! Higher covariant derivatives and point-supported de Rham currents.

pub mod atomic;
pub mod cli;
pub mod connection;
pub mod covderiv;
pub mod error;
pub mod expr;
pub mod jet;
pub mod linalg;
pub mod multialg;
pub mod operators;
pub mod sample;
pub mod scalar;

pub use error::{Error, Result};
pub use expr::Expression;
pub use jet::{Jet, JetFamily};
pub use scalar::{Mode, Rational, Scalar};
