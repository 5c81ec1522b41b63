//! Dense tensor arithmetic, hand-written reverse-mode gradients for the MLP
//! building blocks, and the deterministic PRNG everything else draws from.
//!
//! All arithmetic is `f64`. Operations are pure functions over immutable
//! inputs; the only mutable state is an explicitly passed [`RngState`].

mod ops;
mod rng;
mod tensor;

pub use ops::{
    cosine, linear_backward, linear_forward, norm_sq, relu, relu_backward, softmax_cross_entropy,
};
pub use rng::{RngState, Stream};
pub use tensor::Tensor;
