use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Shape5, Tensor5};

/// Nearest-neighbour upsampling: every voxel becomes a `factor`³ block.
pub fn upsample_nearest<T: Scalar>(x: &Tensor5<T>, factor: usize) -> Result<Tensor5<T>> {
    if factor == 0 {
        return Err(Error::InvalidValue("upsample factor must be >= 1".into()));
    }
    let s = x.shape();
    let os = Shape5::new(s.n, s.c, s.z * factor, s.y * factor, s.x * factor);
    let mut out = Tensor5::zeros(os);
    let src = x.data();
    let dst = out.data_mut();
    for nc in 0..s.n * s.c {
        let ib = nc * s.spatial();
        let ob = nc * os.spatial();
        for oz in 0..os.z {
            for oy in 0..os.y {
                let irow = ib + ((oz / factor) * s.y + oy / factor) * s.x;
                let orow = ob + (oz * os.y + oy) * os.x;
                for ox in 0..os.x {
                    dst[orow + ox] = src[irow + ox / factor];
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_nearest`]: sums the cotangent over each block.
pub fn upsample_nearest_backward<T: Scalar>(dy: &Tensor5<T>, factor: usize) -> Result<Tensor5<T>> {
    let os = dy.shape();
    if factor == 0 || !os.z.is_multiple_of(factor) || !os.y.is_multiple_of(factor) || !os.x.is_multiple_of(factor) {
        return Err(Error::InvalidValue(format!(
            "cotangent {os} is not an upsampling by {factor}"
        )));
    }
    let s = Shape5::new(os.n, os.c, os.z / factor, os.y / factor, os.x / factor);
    let mut dx = Tensor5::zeros(s);
    let src = dy.data();
    let dst = dx.data_mut();
    for nc in 0..s.n * s.c {
        let ib = nc * s.spatial();
        let ob = nc * os.spatial();
        for oz in 0..os.z {
            for oy in 0..os.y {
                let irow = ib + ((oz / factor) * s.y + oy / factor) * s.x;
                let orow = ob + (oz * os.y + oy) * os.x;
                for ox in 0..os.x {
                    dst[irow + ox / factor] = dst[irow + ox / factor] + src[orow + ox];
                }
            }
        }
    }
    Ok(dx)
}

/// Concatenate along channels, in sequence order.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor5<T>]) -> Result<Tensor5<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidValue("concat_channels needs at least one part".into()))?
        .shape();
    for p in &parts[1..] {
        if !p.shape().same_grid(first) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                left: first,
                right: p.shape(),
            });
        }
    }
    let c: usize = parts.iter().map(|p| p.shape().c).sum();
    let os = first.with_channels(c);
    let mut data = Vec::with_capacity(os.len());
    for n in 0..first.n {
        for p in parts {
            let chunk = p.shape().c * first.spatial();
            data.extend_from_slice(&p.data()[n * chunk..(n + 1) * chunk]);
        }
    }
    Tensor5::from_vec(os, data)
}

/// Inverse of [`concat_channels`]; also the backward of it.
pub fn split_channels<T: Scalar>(x: &Tensor5<T>, sizes: &[usize]) -> Result<Vec<Tensor5<T>>> {
    let s = x.shape();
    if sizes.iter().sum::<usize>() != s.c {
        return Err(Error::InvalidValue(format!(
            "split sizes {sizes:?} do not add up to {} channels",
            s.c
        )));
    }
    let plane = s.spatial();
    let mut outs: Vec<Vec<T>> = sizes.iter().map(|&c| Vec::with_capacity(s.n * c * plane)).collect();
    for n in 0..s.n {
        let mut offset = 0;
        for (out, &c) in outs.iter_mut().zip(sizes) {
            let start = (n * s.c + offset) * plane;
            out.extend_from_slice(&x.data()[start..start + c * plane]);
            offset += c;
        }
    }
    outs.into_iter()
        .zip(sizes)
        .map(|(d, &c)| Tensor5::from_vec(s.with_channels(c), d))
        .collect()
}
