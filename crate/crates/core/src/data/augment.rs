use alloc::vec::Vec;

use super::{LabelVolume, VolumeSample};
use crate::rng::SplitMix64;
use crate::{Shape5, Tensor5};

/// Axis permutation plus per-axis mirroring of a (z, y, x) grid.
///
/// Output axis `k` reads input axis `perm[k]`, reversed when `flip[k]`.
/// These 48 transforms are exactly the compositions of 90° rotations and
/// mirrorings, and they are closed under composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Orientation {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

impl Orientation {
    pub const IDENTITY: Orientation = Orientation {
        perm: [0, 1, 2],
        flip: [false; 3],
    };

    /// Mirror along one axis.
    pub fn mirror(axis: usize) -> Self {
        let mut flip = [false; 3];
        flip[axis] = true;
        Orientation { perm: [0, 1, 2], flip }
    }

    /// Quarter turn in the plane of axes `a` and `b`.
    pub fn quarter_turn(a: usize, b: usize) -> Self {
        let mut perm = [0, 1, 2];
        perm.swap(a, b);
        let mut flip = [false; 3];
        flip[a] = true;
        Orientation { perm, flip }
    }

    pub fn all() -> impl Iterator<Item = Orientation> {
        PERMUTATIONS.into_iter().flat_map(|perm| {
            (0..8u8).map(move |bits| Orientation {
                perm,
                flip: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0],
            })
        })
    }

    /// Seeded draw: each axis mirrored with probability 1/2, axes permuted
    /// uniformly.
    pub fn random(rng: &mut SplitMix64) -> Self {
        let flip = [rng.coin(), rng.coin(), rng.coin()];
        let perm = PERMUTATIONS[rng.below(6) as usize];
        Orientation { perm, flip }
    }

    /// `self` followed by `next`.
    pub fn then(self, next: Orientation) -> Orientation {
        let mut perm = [0; 3];
        let mut flip = [false; 3];
        for k in 0..3 {
            perm[k] = self.perm[next.perm[k]];
            flip[k] = next.flip[k] ^ self.flip[next.perm[k]];
        }
        Orientation { perm, flip }
    }

    pub fn output_dims(self, dims: [usize; 3]) -> [usize; 3] {
        [dims[self.perm[0]], dims[self.perm[1]], dims[self.perm[2]]]
    }

    /// Source index (into the input grid) for every output voxel, in output order.
    fn gather_map(self, dims: [usize; 3]) -> Vec<usize> {
        let od = self.output_dims(dims);
        let strides = [dims[1] * dims[2], dims[2], 1];
        let mut map = Vec::with_capacity(od[0] * od[1] * od[2]);
        for o0 in 0..od[0] {
            for o1 in 0..od[1] {
                for o2 in 0..od[2] {
                    let o = [o0, o1, o2];
                    let mut src = 0;
                    for k in 0..3 {
                        let c = if self.flip[k] { od[k] - 1 - o[k] } else { o[k] };
                        src += c * strides[self.perm[k]];
                    }
                    map.push(src);
                }
            }
        }
        map
    }

    pub fn apply_grid<V: Copy>(self, dims: [usize; 3], data: &[V]) -> Vec<V> {
        self.gather_map(dims).into_iter().map(|i| data[i]).collect()
    }

    pub fn apply_labels(self, labels: &LabelVolume) -> LabelVolume {
        let dims = labels.dims();
        LabelVolume {
            dims: self.output_dims(dims),
            data: self.apply_grid(dims, labels.data()),
        }
    }

    pub fn apply_image(self, image: &Tensor5<f32>) -> Tensor5<f32> {
        let s = image.shape();
        let dims = s.spatial_dims();
        let [z, y, x] = self.output_dims(dims);
        let map = self.gather_map(dims);
        let plane = s.spatial();
        let mut data = Vec::with_capacity(s.len());
        for nc in 0..s.n * s.c {
            let src = &image.data()[nc * plane..(nc + 1) * plane];
            data.extend(map.iter().map(|&i| src[i]));
        }
        Tensor5 {
            shape: Shape5::new(s.n, s.c, z, y, x),
            data,
        }
    }

    pub fn apply(self, sample: &VolumeSample) -> VolumeSample {
        VolumeSample {
            image: self.apply_image(&sample.image),
            labels: self.apply_labels(&sample.labels),
        }
    }
}

/// Seeded random mirroring and 90° rotation, applied identically to the
/// image and the labels.
pub fn augment(sample: &VolumeSample, seed: u64) -> VolumeSample {
    let mut rng = SplitMix64::new(seed);
    Orientation::random(&mut rng).apply(sample)
}
