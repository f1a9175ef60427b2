//! Dense tensors and a tape-based reverse-mode differentiation engine.
//!
//! Every trainable model in the crate builds its forward pass on a
//! [`Graph`], calls [`Graph::backward`] on a scalar loss and reads the
//! gradients of its parameter leaves back out. Models are generic over
//! [`Scalar`] so the same code runs at 32-bit for training and at 64-bit for
//! finite-difference gradient checks.

mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use graph::{BinaryOp, Gradients, Graph, ReduceOp, UnaryOp, Var};
pub use params::{BoundParams, ParamStore};
pub use tensor::{Scalar, Tensor};

/// Caps the number of worker threads used by the matmul kernels.
///
/// Only the first call has an effect; later calls return `false`.
pub fn configure_threads(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build_global()
        .is_ok()
}
