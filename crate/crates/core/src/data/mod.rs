//! Labelled volumes: label codes, tumour regions, one-hot encoding,
//! synthetic phantoms and orientation augmentation.

mod augment;
mod phantom;

pub use augment::{augment, Orientation};
pub use phantom::{make_phantom, MIN_PHANTOM_EXTENT};

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Shape5, Tensor5};

/// Label codes in one-hot channel order: background, necrotic core, edema,
/// enhancing tumour.
pub const CLASS_CODES: [u8; 4] = [0, 1, 2, 4];

/// Integer label volume, (z, y, x) row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    dims: [usize; 3],
    data: Vec<u8>,
}

impl LabelVolume {
    /// Rejects lengths that do not match `dims` and codes outside {0,1,2,4}.
    pub fn new(dims: [usize; 3], data: Vec<u8>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                actual: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !CLASS_CODES.contains(v)) {
            return Err(Error::InvalidValue(format!("unknown label code {bad}")));
        }
        Ok(LabelVolume { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Voxel counts per code, in [`CLASS_CODES`] order.
    pub fn histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for &v in &self.data {
            h[class_index(v).unwrap_or(0)] += 1;
        }
        h
    }
}

pub fn class_index(code: u8) -> Option<usize> {
    CLASS_CODES.iter().position(|&c| c == code)
}

/// Evaluation region: a union of label codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    WholeTumor,
    TumorCore,
    EnhancingTumor,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::WholeTumor, Region::TumorCore, Region::EnhancingTumor];

    pub const fn codes(self) -> &'static [u8] {
        match self {
            Region::WholeTumor => &[1, 2, 4],
            Region::TumorCore => &[1, 4],
            Region::EnhancingTumor => &[4],
        }
    }

    pub const fn abbrev(self) -> &'static str {
        match self {
            Region::WholeTumor => "WT",
            Region::TumorCore => "TC",
            Region::EnhancingTumor => "ET",
        }
    }
}

/// 0/1 mask of the voxels whose code belongs to `region`.
pub fn region_binarize(labels: &[u8], region: Region) -> Result<Vec<u8>> {
    labels
        .iter()
        .map(|&v| {
            if !CLASS_CODES.contains(&v) {
                return Err(Error::InvalidValue(format!("unknown label code {v}")));
            }
            Ok(region.codes().contains(&v) as u8)
        })
        .collect()
}

/// (1, 4, z, y, x) one-hot encoding in [`CLASS_CODES`] channel order.
pub fn one_hot<T: Scalar>(labels: &LabelVolume) -> Tensor5<T> {
    let [z, y, x] = labels.dims;
    let plane = labels.len();
    let mut t = Tensor5::zeros(Shape5::new(1, CLASS_CODES.len(), z, y, x));
    let data = t.data_mut();
    for (j, &v) in labels.data.iter().enumerate() {
        // LabelVolume only holds known codes.
        let c = class_index(v).unwrap_or(0);
        data[c * plane + j] = T::one();
    }
    t
}

/// Per-voxel argmax over channels of item 0, mapped back to label codes.
/// Ties resolve to the lowest channel.
pub fn argmax_labels<T: Scalar>(probs: &Tensor5<T>) -> Result<LabelVolume> {
    let s = probs.shape();
    if s.c != CLASS_CODES.len() || s.n == 0 {
        return Err(Error::InvalidValue(format!(
            "expected (1, {}, z, y, x) class scores, got {s}",
            CLASS_CODES.len()
        )));
    }
    let plane = s.spatial();
    let d = probs.data();
    let labels = (0..plane)
        .map(|j| {
            let mut best = 0;
            for c in 1..s.c {
                if d[c * plane + j] > d[best * plane + j] {
                    best = c;
                }
            }
            CLASS_CODES[best]
        })
        .collect();
    LabelVolume::new(s.spatial_dims(), labels)
}

/// Multi-modality image (1, m, z, y, x) with its label volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSample {
    pub image: Tensor5<f32>,
    pub labels: LabelVolume,
}

impl VolumeSample {
    pub fn new(image: Tensor5<f32>, labels: LabelVolume) -> Result<Self> {
        let s = image.shape();
        if s.n != 1 || s.spatial_dims() != labels.dims() {
            return Err(Error::InvalidValue(format!(
                "image {s} does not match label extents {:?}",
                labels.dims()
            )));
        }
        Ok(VolumeSample { image, labels })
    }
}

/// Central `[z, y, x]` window of a sample. When an extent and its window
/// differ in parity the extra voxel is dropped from the high end.
pub fn center_crop(sample: &VolumeSample, extents: [usize; 3]) -> Result<VolumeSample> {
    let s = sample.image.shape();
    let dims = s.spatial_dims();
    if (0..3).any(|a| extents[a] == 0 || extents[a] > dims[a]) {
        return Err(Error::InvalidValue(format!("cannot crop {dims:?} to {extents:?}")));
    }
    let off = [0, 1, 2].map(|a| (dims[a] - extents[a]) / 2);
    let [cz, cy, cx] = extents;
    let out = Shape5::new(1, s.c, cz, cy, cx);
    let image = Tensor5::from_fn(out, |[_, c, z, y, x]| {
        sample.image.get(0, c, z + off[0], y + off[1], x + off[2])
    });
    let mut labels = Vec::with_capacity(cz * cy * cx);
    for z in 0..cz {
        for y in 0..cy {
            let row = ((z + off[0]) * dims[1] + y + off[1]) * dims[2] + off[2];
            labels.extend_from_slice(&sample.labels.data()[row..row + cx]);
        }
    }
    VolumeSample::new(image, LabelVolume::new(extents, labels)?)
}
