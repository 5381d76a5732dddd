//! Monarch-structured surrogate attention (SAB) and FFN (SFB) blocks.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] / [`autograd`]: dense `f64` tensors and a reverse-mode tape
//!   with a finite-difference gradient oracle.
//! - [`structured`]: order-2 Monarch matrices `P·L·P·R·P`, padding to
//!   perfect squares, and a FLOP meter.
//! - [`surrogate`]: the surrogate attention block, the surrogate FFN block and
//!   the enhanced encoder layer with post-LN or pre-LN residuals.
//! - [`reference`]: dense multi-head attention, dense FFN, diagonal/vertical
//!   attention patterns and the sum-of-convolutions form.
//! - [`verification`]: executable equivalence checks with pinned thresholds.
//! - [`bench`]: parameter/FLOP accounting, scaling fits, the synthetic-sine
//!   forecaster, run reports and the command-line front end.

pub mod autograd;
pub mod bench;
pub mod error;
pub mod reference;
pub mod structured;
pub mod surrogate;
pub mod tensor;
pub mod verification;

pub use error::{Error, Result};
pub use tensor::{Activation, Tensor};
