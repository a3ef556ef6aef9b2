//! Differentiable tensor primitives. Each forward op has a matching
//! `*_backward` that maps an output cotangent to input cotangents.

mod conv;
mod elementwise;
mod layout;

pub use conv::{conv3d, conv3d_backward, ConvGrads, ConvWeights};
pub use elementwise::{eltwise_add, relu, relu_backward, softmax_channels, softmax_channels_backward};
pub use layout::{concat_channels, split_channels, upsample_nearest, upsample_nearest_backward};

/// Run `f(index, chunk)` over consecutive `chunk`-sized pieces of `out`.
///
/// With the `parallel` feature the pieces are distributed over the rayon
/// pool. Each piece is written by exactly one call, so results do not depend
/// on scheduling.
pub(crate) fn for_each_chunk<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, piece)| f(i, piece));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, piece) in out.chunks_mut(chunk).enumerate() {
            f(i, piece);
        }
    }
}
