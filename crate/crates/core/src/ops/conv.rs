use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::for_each_chunk;
use crate::{Error, Result, Scalar, Shape5, Tensor5};

/// Weights of one 3D convolution: kernel block (c_out, c_in, kz, ky, kx),
/// one bias per output channel and a stride of 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights<T> {
    pub w: Tensor5<T>,
    pub b: Vec<T>,
    pub stride: usize,
}

/// Gradients with the same layout as [`ConvWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub dw: Tensor5<T>,
    pub db: Vec<T>,
}

impl<T: Scalar> ConvGrads<T> {
    pub fn zeros_like(k: &ConvWeights<T>) -> Self {
        ConvGrads {
            dw: Tensor5::zeros(k.w.shape()),
            db: vec![T::zero(); k.b.len()],
        }
    }

    /// Elementwise accumulate, used when one weight feeds several paths.
    pub fn accumulate(&mut self, other: &ConvGrads<T>) {
        for (a, &b) in self.dw.data_mut().iter_mut().zip(other.dw.data()) {
            *a = *a + b;
        }
        for (a, &b) in self.db.iter_mut().zip(&other.db) {
            *a = *a + b;
        }
    }
}

impl<T: Scalar> ConvWeights<T> {
    /// Validates kernel geometry: every extent odd, stride in {1, 2},
    /// bias length equal to c_out.
    pub fn new(w: Tensor5<T>, b: Vec<T>, stride: usize) -> Result<Self> {
        let k = ConvWeights { w, b, stride };
        k.validate()?;
        Ok(k)
    }

    pub fn zeros(c_out: usize, c_in: usize, kernel: [usize; 3], stride: usize) -> Result<Self> {
        ConvWeights::new(
            Tensor5::zeros(Shape5::new(c_out, c_in, kernel[0], kernel[1], kernel[2])),
            vec![T::zero(); c_out],
            stride,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.w.shape();
        for (axis, k) in [("z", s.z), ("y", s.y), ("x", s.x)] {
            if k % 2 == 0 {
                return Err(Error::InvalidKernel(format!(
                    "kernel extent {k} along {axis} must be odd"
                )));
            }
        }
        if s.n == 0 || s.c == 0 {
            return Err(Error::InvalidKernel(format!("empty kernel block {s}")));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::InvalidKernel(format!("stride {} not in {{1, 2}}", self.stride)));
        }
        if self.b.len() != s.n {
            return Err(Error::InvalidKernel(format!(
                "bias length {} does not match {} output channels",
                self.b.len(),
                s.n
            )));
        }
        Ok(())
    }

    pub fn c_out(&self) -> usize {
        self.w.shape().n
    }

    pub fn c_in(&self) -> usize {
        self.w.shape().c
    }

    /// Kernel extents (kz, ky, kx).
    pub fn kernel(&self) -> [usize; 3] {
        self.w.shape().spatial_dims()
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn output_shape(&self, input: Shape5) -> Shape5 {
        let s = self.stride;
        Shape5::new(
            input.n,
            self.c_out(),
            input.z.div_ceil(s),
            input.y.div_ceil(s),
            input.x.div_ceil(s),
        )
    }

    pub fn cast<U: Scalar>(&self) -> ConvWeights<U> {
        ConvWeights {
            w: self.w.cast(),
            b: self.b.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
            stride: self.stride,
        }
    }

    fn check_input(&self, x: Shape5, op: &'static str) -> Result<()> {
        if x.is_empty() {
            return Err(Error::ZeroExtent { op, shape: x });
        }
        if x.c != self.c_in() {
            return Err(Error::ShapeMismatch {
                op,
                left: x,
                right: self.w.shape(),
            });
        }
        Ok(())
    }
}

/// Output positions `o` in `0..out_len` whose input tap `o*s + d - pad`
/// falls inside `0..in_len`.
#[inline]
fn valid_range(in_len: usize, out_len: usize, s: usize, d: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > d { (pad - d).div_ceil(s) } else { 0 };
    let top = in_len + pad;
    if top < d + 1 {
        return (0, 0);
    }
    let hi = ((top - 1 - d) / s + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Zero-padded "same" convolution.
///
/// Each output element is `b[e]` plus the taps accumulated in (c, dz, dy, dx)
/// order; that order does not change with threading.
pub fn conv3d<T: Scalar>(x: &Tensor5<T>, k: &ConvWeights<T>) -> Result<Tensor5<T>> {
    k.validate()?;
    let xs = x.shape();
    k.check_input(xs, "conv3d")?;
    let os = k.output_shape(xs);
    let [kz, ky, kx] = k.kernel();
    let (pz, py, px) = (kz / 2, ky / 2, kx / 2);
    let s = k.stride;
    let c_in = xs.c;
    let c_out = os.c;
    let plane = os.spatial();
    let in_plane = xs.spatial();
    let wdata = k.w.data();
    let xdata = x.data();
    let taps = kz * ky * kx;

    let mut out = Tensor5::zeros(os);
    for_each_chunk(out.data_mut(), plane, |idx, dst| {
        let (n, e) = (idx / c_out, idx % c_out);
        dst.fill(k.b[e]);
        for c in 0..c_in {
            let src = &xdata[(n * c_in + c) * in_plane..][..in_plane];
            let wk = &wdata[(e * c_in + c) * taps..][..taps];
            for dz in 0..kz {
                let (z0, z1) = valid_range(xs.z, os.z, s, dz, pz);
                for dy in 0..ky {
                    let (y0, y1) = valid_range(xs.y, os.y, s, dy, py);
                    for dx in 0..kx {
                        let (x0, x1) = valid_range(xs.x, os.x, s, dx, px);
                        if x0 >= x1 {
                            continue;
                        }
                        let wv = wk[(dz * ky + dy) * kx + dx];
                        for oz in z0..z1 {
                            let iz = oz * s + dz - pz;
                            for oy in y0..y1 {
                                let iy = oy * s + dy - py;
                                let orow = &mut dst[(oz * os.y + oy) * os.x..][..os.x];
                                let irow = &src[(iz * xs.y + iy) * xs.x..][..xs.x];
                                if s == 1 {
                                    let ishift = &irow[x0 + dx - px..x1 + dx - px];
                                    for (o, &v) in orow[x0..x1].iter_mut().zip(ishift) {
                                        *o = *o + wv * v;
                                    }
                                } else {
                                    for ox in x0..x1 {
                                        orow[ox] = orow[ox] + wv * irow[ox * s + dx - px];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Adjoint of [`conv3d`]: gradients of `sum(dy * conv3d(x, k))` with respect
/// to the input, the weights and the biases.
pub fn conv3d_backward<T: Scalar>(
    x: &Tensor5<T>,
    k: &ConvWeights<T>,
    dy: &Tensor5<T>,
) -> Result<(Tensor5<T>, ConvGrads<T>)> {
    k.validate()?;
    let xs = x.shape();
    k.check_input(xs, "conv3d_backward")?;
    let os = k.output_shape(xs);
    if dy.shape() != os {
        return Err(Error::ShapeMismatch {
            op: "conv3d_backward",
            left: dy.shape(),
            right: os,
        });
    }
    let [kz, ky, kx] = k.kernel();
    let (pz, py, px) = (kz / 2, ky / 2, kx / 2);
    let s = k.stride;
    let (c_in, c_out) = (xs.c, os.c);
    let (plane, in_plane) = (os.spatial(), xs.spatial());
    let taps = kz * ky * kx;
    let (xdata, dydata, wdata) = (x.data(), dy.data(), k.w.data());

    let db: Vec<T> = (0..c_out)
        .map(|e| {
            let mut acc = T::zero();
            for n in 0..os.n {
                for &v in &dydata[(n * c_out + e) * plane..][..plane] {
                    acc = acc + v;
                }
            }
            acc
        })
        .collect();

    let mut dw = Tensor5::zeros(k.w.shape());
    for_each_chunk(dw.data_mut(), taps, |idx, dst| {
        let (e, c) = (idx / c_in, idx % c_in);
        for dz in 0..kz {
            let (z0, z1) = valid_range(xs.z, os.z, s, dz, pz);
            for dy_ in 0..ky {
                let (y0, y1) = valid_range(xs.y, os.y, s, dy_, py);
                for dx in 0..kx {
                    let (x0, x1) = valid_range(xs.x, os.x, s, dx, px);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut acc = T::zero();
                    for n in 0..xs.n {
                        let src = &xdata[(n * c_in + c) * in_plane..][..in_plane];
                        let g = &dydata[(n * c_out + e) * plane..][..plane];
                        for oz in z0..z1 {
                            let iz = oz * s + dz - pz;
                            for oy in y0..y1 {
                                let iy = oy * s + dy_ - py;
                                let grow = &g[(oz * os.y + oy) * os.x..][..os.x];
                                let irow = &src[(iz * xs.y + iy) * xs.x..][..xs.x];
                                for ox in x0..x1 {
                                    acc = acc + grow[ox] * irow[ox * s + dx - px];
                                }
                            }
                        }
                    }
                    dst[(dz * ky + dy_) * kx + dx] = acc;
                }
            }
        }
    });

    let mut dx_t = Tensor5::zeros(xs);
    for_each_chunk(dx_t.data_mut(), in_plane, |idx, dst| {
        let (n, c) = (idx / c_in, idx % c_in);
        for e in 0..c_out {
            let g = &dydata[(n * c_out + e) * plane..][..plane];
            let wk = &wdata[(e * c_in + c) * taps..][..taps];
            for dz in 0..kz {
                let (z0, z1) = valid_range(xs.z, os.z, s, dz, pz);
                for dy_ in 0..ky {
                    let (y0, y1) = valid_range(xs.y, os.y, s, dy_, py);
                    for dx in 0..kx {
                        let (x0, x1) = valid_range(xs.x, os.x, s, dx, px);
                        if x0 >= x1 {
                            continue;
                        }
                        let wv = wk[(dz * ky + dy_) * kx + dx];
                        for oz in z0..z1 {
                            let iz = oz * s + dz - pz;
                            for oy in y0..y1 {
                                let iy = oy * s + dy_ - py;
                                let grow = &g[(oz * os.y + oy) * os.x..][..os.x];
                                let irow = &mut dst[(iz * xs.y + iy) * xs.x..][..xs.x];
                                if s == 1 {
                                    let ishift = &mut irow[x0 + dx - px..x1 + dx - px];
                                    for (i, &gv) in ishift.iter_mut().zip(&grow[x0..x1]) {
                                        *i = *i + wv * gv;
                                    }
                                } else {
                                    for (ox, &gv) in grow.iter().enumerate().take(x1).skip(x0) {
                                        let ix = ox * s + dx - px;
                                        irow[ix] = irow[ix] + wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });

    Ok((dx_t, ConvGrads { dw, db }))
}
