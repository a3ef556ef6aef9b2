use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result, Scalar};

/// Extents of a five-axis tensor laid out as (n, c, z, y, x), x fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape5 {
    pub n: usize,
    pub c: usize,
    pub z: usize,
    pub y: usize,
    pub x: usize,
}

impl Shape5 {
    pub const fn new(n: usize, c: usize, z: usize, y: usize, x: usize) -> Self {
        Shape5 { n, c, z, y, x }
    }

    pub fn from_array(dims: [usize; 5]) -> Self {
        Shape5::new(dims[0], dims[1], dims[2], dims[3], dims[4])
    }

    pub fn to_array(self) -> [usize; 5] {
        [self.n, self.c, self.z, self.y, self.x]
    }

    pub fn len(self) -> usize {
        self.n * self.c * self.z * self.y * self.x
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Number of voxels in one spatial volume.
    pub fn spatial(self) -> usize {
        self.z * self.y * self.x
    }

    pub fn spatial_dims(self) -> [usize; 3] {
        [self.z, self.y, self.x]
    }

    /// Same batch and spatial extents, ignoring channels.
    pub fn same_grid(self, other: Shape5) -> bool {
        self.n == other.n && self.z == other.z && self.y == other.y && self.x == other.x
    }

    pub fn with_channels(self, c: usize) -> Self {
        Shape5 { c, ..self }
    }

    #[inline]
    pub fn index(self, n: usize, c: usize, z: usize, y: usize, x: usize) -> usize {
        (((n * self.c + c) * self.z + z) * self.y + y) * self.x + x
    }
}

impl fmt::Display for Shape5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {}, {})", self.n, self.c, self.z, self.y, self.x)
    }
}

/// Dense five-axis array, row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5<T> {
    pub(crate) shape: Shape5,
    pub(crate) data: Vec<T>,
}

impl<T: Scalar> Tensor5<T> {
    pub fn zeros(shape: Shape5) -> Self {
        Tensor5 {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn full(shape: Shape5, value: T) -> Self {
        Tensor5 {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Tensor5 { shape, data })
    }

    pub fn from_fn(shape: Shape5, mut f: impl FnMut([usize; 5]) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for z in 0..shape.z {
                    for y in 0..shape.y {
                        for x in 0..shape.x {
                            data.push(f([n, c, z, y, x]));
                        }
                    }
                }
            }
        }
        Tensor5 { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, z: usize, y: usize, x: usize) -> T {
        self.data[self.shape.index(n, c, z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, z: usize, y: usize, x: usize, v: T) {
        let i = self.shape.index(n, c, z, y, x);
        self.data[i] = v;
    }

    /// Contiguous (z, y, x) volume of one batch item and channel.
    pub fn channel(&self, n: usize, c: usize) -> &[T] {
        let s = self.shape.spatial();
        let start = (n * self.shape.c + c) * s;
        &self.data[start..start + s]
    }

    pub fn reshape(self, shape: Shape5) -> Result<Self> {
        Tensor5::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor5 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor5<U> {
        Tensor5 {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor5<T>) -> Option<T> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())),
        )
    }

    pub(crate) fn ensure_same_shape(&self, other: &Tensor5<T>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_is_row_major_x_fastest() {
        let s = Shape5::new(2, 3, 4, 5, 6);
        assert_eq!(s.index(0, 0, 0, 0, 1), 1);
        assert_eq!(s.index(0, 0, 0, 1, 0), 6);
        assert_eq!(s.index(0, 0, 1, 0, 0), 30);
        assert_eq!(s.index(0, 1, 0, 0, 0), 120);
        assert_eq!(s.index(1, 0, 0, 0, 0), 360);
        assert_eq!(s.len(), 720);
    }

    #[test]
    fn from_vec_checks_length() {
        let s = Shape5::new(1, 1, 2, 2, 2);
        assert!(Tensor5::<f32>::from_vec(s, vec![0.0; 7]).is_err());
        assert!(Tensor5::<f32>::from_vec(s, vec![0.0; 8]).is_ok());
    }

    #[test]
    fn from_fn_matches_get() {
        let s = Shape5::new(1, 2, 2, 3, 4);
        let t = Tensor5::<f64>::from_fn(s, |[n, c, z, y, x]| {
            (n + 10 * c + 100 * z + 1000 * y + 10000 * x) as f64
        });
        assert_eq!(t.get(0, 1, 1, 2, 3), (10 + 100 + 2000 + 30000) as f64);
    }
}
