//! Volumetric deep-learning primitives and a hyperdense inception segmentation network.
//!
//! Everything here is pure computation over in-memory buffers: five-axis
//! tensors, "same"-padded 3D convolution with its adjoint, orthogonal-view
//! factorized blocks (hyperdense and baseline wiring), the encoder-decoder
//! network with an explicit reverse pass, the multi-class dice loss, Adam,
//! segmentation metrics and a synthetic phantom generator.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `parallel` feature to
//! spread convolution work over a rayon pool; each output element keeps a
//! fixed reduction order, so results are bitwise identical for any thread
//! count.
#![no_std]

extern crate alloc;

#[cfg(any(test, feature = "parallel"))]
extern crate std;

pub mod blocks;
pub mod cost;
pub mod data;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod ops;
pub mod optim;
pub mod rng;
mod scalar;
mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape5, Tensor5};
