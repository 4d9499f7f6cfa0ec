//! Minimal deterministic CPU neural-net engine.
//!
//! Forward and backward passes are hand-written per layer type, single
//! threaded, f32 throughout. Given the same seed and inputs, every pass
//! produces bit-identical results, which the rest of the crate relies on
//! for frozen-parameter audits and reproducible accuracy matrices.

mod conv;
mod depthwise;
mod init;
mod linear;
mod loss;
mod optim;
mod pool;

pub use conv::Conv2d;
pub use depthwise::DepthwiseConv2d;
pub use init::he_uniform;
pub use linear::Linear;
pub use loss::{accuracy_count, cross_entropy, softmax_rows};
pub use optim::{cosine_lr, Sgd};
pub use pool::{global_avg_pool, global_avg_pool_backward, AvgPool2d, MaxPool2d, PoolTrace};

use ndarray::{Array4, ArrayViewD, ArrayViewMutD};

/// Mutable (weights, grads) pair handed to the optimizer.
pub type ParamPairMut<'a> = (ArrayViewMutD<'a, f32>, ArrayViewMutD<'a, f32>);
/// Read-only weight view, used for counting and hashing.
pub type ParamView<'a> = ArrayViewD<'a, f32>;

/// Spatial output size of a convolution/pooling window.
pub fn conv_out_len(input: usize, k: usize, stride: usize, pad: usize, dilation: usize) -> usize {
    let span = dilation * (k - 1) + 1;
    debug_assert!(input + 2 * pad >= span);
    (input + 2 * pad - span) / stride + 1
}

/// ReLU; the returned array doubles as the backward mask.
pub fn relu(x: &Array4<f32>) -> Array4<f32> {
    x.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

/// Backward through ReLU given its own output.
pub fn relu_backward(y: &Array4<f32>, dy: &Array4<f32>) -> Array4<f32> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Zero the gradient halves of a parameter list.
pub fn zero_grads(params: &mut [ParamPairMut<'_>]) {
    for (_, g) in params.iter_mut() {
        g.fill(0.0);
    }
}
