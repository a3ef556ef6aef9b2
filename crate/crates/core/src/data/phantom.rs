use alloc::format;
use alloc::vec::Vec;

use super::{class_index, LabelVolume, VolumeSample};
use crate::rng::SplitMix64;
use crate::{Error, Result, Shape5, Tensor5};

pub const MIN_PHANTOM_EXTENT: usize = 16;

// Base intensity per modality (T1, T1c, T2, FLAIR) for each class in
// CLASS_CODES order: healthy tissue, necrotic core, edema, enhancing tumour.
const CONTRAST: [[f32; 4]; 4] = [
    [1.0, 1.0, 1.0, 1.0],
    [0.5, 0.6, 2.2, 1.2],
    [0.8, 0.9, 1.8, 2.0],
    [0.9, 2.5, 1.5, 1.5],
];
const NOISE_SIGMA: f64 = 0.1;

/// Synthetic four-modality cube of side `extent` holding three concentric
/// spheres: enhancing tumour (code 4) inside necrotic core (code 1) inside
/// edema (code 2), placed inside an ellipsoidal "brain" of healthy tissue.
/// Fully determined by `seed`.
pub fn make_phantom(seed: u64, extent: usize) -> Result<VolumeSample> {
    if extent < MIN_PHANTOM_EXTENT {
        return Err(Error::InvalidValue(format!(
            "phantom extent {extent} is below the minimum of {MIN_PHANTOM_EXTENT}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let e = extent as f64;
    let center = [
        rng.uniform(0.4 * e, 0.6 * e),
        rng.uniform(0.4 * e, 0.6 * e),
        rng.uniform(0.4 * e, 0.6 * e),
    ];
    let r_ed = rng.uniform(0.18 * e, 0.28 * e);
    let r_ncr = r_ed * rng.uniform(0.6, 0.75);
    let r_et = r_ncr * rng.uniform(0.55, 0.75);
    let brain = [0.46 * e, 0.42 * e, 0.44 * e];
    let mid = (e - 1.0) / 2.0;

    let n = extent * extent * extent;
    let mut labels = Vec::with_capacity(n);
    let mut inside = Vec::with_capacity(n);
    for z in 0..extent {
        for y in 0..extent {
            for x in 0..extent {
                let p = [z as f64, y as f64, x as f64];
                let d2: f64 = (0..3).map(|a| (p[a] - center[a]) * (p[a] - center[a])).sum();
                let b: f64 = (0..3)
                    .map(|a| ((p[a] - mid) / brain[a]) * ((p[a] - mid) / brain[a]))
                    .sum();
                let code = if d2 <= r_et * r_et {
                    4
                } else if d2 <= r_ncr * r_ncr {
                    1
                } else if d2 <= r_ed * r_ed {
                    2
                } else {
                    0
                };
                labels.push(code);
                inside.push(code != 0 || b <= 1.0);
            }
        }
    }

    let mut image = Tensor5::zeros(Shape5::new(1, 4, extent, extent, extent));
    let data = image.data_mut();
    for m in 0..4 {
        for j in 0..n {
            let noise = (NOISE_SIGMA * rng.normal()) as f32;
            data[m * n + j] = if inside[j] {
                CONTRAST[class_index(labels[j]).unwrap_or(0)][m] + noise
            } else {
                noise
            };
        }
    }
    VolumeSample::new(image, LabelVolume::new([extent; 3], labels)?)
}
