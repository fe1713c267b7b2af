//! Minimal reverse-mode differentiable-array engine.
//!
//! Everything is 64-bit floats. A [`Tape`] records forward ops
//! define-by-run style; [`Tape::backward`] replays them in reverse and
//! accumulates gradients (fan-out sums, standard chain rule). Forward
//! evaluation is deterministic and every op checks its output for
//! NaN/Inf, so non-finite values surface as errors instead of values.

mod tape;
mod tensor;

pub use tape::{Tape, ValueId};
pub use tensor::Tensor;
