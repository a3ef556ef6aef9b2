use crate::{Error, Result, Scalar, Tensor5};

pub fn relu<T: Scalar>(x: &Tensor5<T>) -> Tensor5<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]. `y` may be either the relu input or its output:
/// both are positive at exactly the same positions. The derivative at 0 is 0.
pub fn relu_backward<T: Scalar>(y: &Tensor5<T>, dy: &Tensor5<T>) -> Result<Tensor5<T>> {
    y.ensure_same_shape(dy, "relu_backward")?;
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(dx)
}

/// Elementwise sum. The cotangent flows unchanged to both operands.
pub fn eltwise_add<T: Scalar>(a: &Tensor5<T>, b: &Tensor5<T>) -> Result<Tensor5<T>> {
    a.ensure_same_shape(b, "eltwise_add")?;
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o = *o + v;
    }
    Ok(out)
}

/// Per-voxel softmax over the channel axis, max-subtracted.
pub fn softmax_channels<T: Scalar>(x: &Tensor5<T>) -> Result<Tensor5<T>> {
    let s = x.shape();
    if s.c == 0 {
        return Err(Error::ZeroExtent {
            op: "softmax_channels",
            shape: s,
        });
    }
    let plane = s.spatial();
    let mut out = Tensor5::zeros(s);
    let src = x.data();
    let dst = out.data_mut();
    for n in 0..s.n {
        let base = n * s.c * plane;
        for v in 0..plane {
            let mut m = T::neg_infinity();
            for c in 0..s.c {
                m = m.max(src[base + c * plane + v]);
            }
            let mut total = T::zero();
            for c in 0..s.c {
                let e = (src[base + c * plane + v] - m).exp();
                dst[base + c * plane + v] = e;
                total = total + e;
            }
            for c in 0..s.c {
                let i = base + c * plane + v;
                dst[i] = dst[i] / total;
            }
        }
    }
    Ok(out)
}

/// Softmax Jacobian-vector product: `dx_c = p_c (dy_c - sum_k p_k dy_k)`.
pub fn softmax_channels_backward<T: Scalar>(probs: &Tensor5<T>, dy: &Tensor5<T>) -> Result<Tensor5<T>> {
    probs.ensure_same_shape(dy, "softmax_channels_backward")?;
    let s = probs.shape();
    let plane = s.spatial();
    let mut dx = Tensor5::zeros(s);
    let (p, g) = (probs.data(), dy.data());
    let out = dx.data_mut();
    for n in 0..s.n {
        let base = n * s.c * plane;
        for v in 0..plane {
            let mut dot = T::zero();
            for c in 0..s.c {
                let i = base + c * plane + v;
                dot = dot + p[i] * g[i];
            }
            for c in 0..s.c {
                let i = base + c * plane + v;
                out[i] = p[i] * (g[i] - dot);
            }
        }
    }
    Ok(dx)
}
