//! `.hvol` volume container: a JSON header next to two raw payload files.
//!
//! The image payload holds `modalities x z x y x x` little-endian f32 values
//! and the label payload `z x y x x` bytes, both row-major. The header's
//! `crc32` covers the image bytes followed by the label bytes. Payload file
//! names are resolved relative to the header's directory.

use std::fs;
use std::path::{Path, PathBuf};

use hinet_core::data::{LabelVolume, VolumeSample};
use hinet_core::{Shape5, Tensor5};
use serde::{Deserialize, Serialize};

use crate::error::{HinetError, Result};

pub const MAGIC: &str = "HVOL1";
pub const EXTENSION: &str = "hvol";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub magic: String,
    /// `[z, y, x]`.
    pub extents: [usize; 3],
    pub modalities: usize,
    pub dtype: String,
    pub label_dtype: String,
    pub data_file: String,
    pub label_file: String,
    pub crc32: u32,
}

fn image_bytes(image: &Tensor5<f32>) -> Vec<u8> {
    image.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn checksum(data: &[u8], labels: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(data);
    h.update(labels);
    h.finalize()
}

fn sibling(path: &Path, suffix: &str) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    format!("{stem}.{suffix}")
}

/// Write `sample` as a header at `path` plus `<stem>.data` and `<stem>.labels`.
pub fn write_volume(path: &Path, sample: &VolumeSample) -> Result<()> {
    let s = sample.image.shape();
    let data = image_bytes(&sample.image);
    let labels = sample.labels.data();
    let header = Header {
        magic: MAGIC.into(),
        extents: s.spatial_dims(),
        modalities: s.c,
        dtype: "f32le".into(),
        label_dtype: "u8".into(),
        data_file: sibling(path, "data"),
        label_file: sibling(path, "labels"),
        crc32: checksum(&data, labels),
    };
    let dir = path.parent().unwrap_or(Path::new(""));
    let data_path = dir.join(&header.data_file);
    let label_path = dir.join(&header.label_file);
    fs::write(&data_path, &data).map_err(|e| HinetError::io(&data_path, e))?;
    fs::write(&label_path, labels).map_err(|e| HinetError::io(&label_path, e))?;
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(path, json + "\n").map_err(|e| HinetError::io(path, e))
}

/// Write a label-only volume (zero modalities), as produced by prediction.
pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    let [z, y, x] = labels.dims();
    let image = Tensor5::zeros(Shape5::new(1, 0, z, y, x));
    write_volume(path, &VolumeSample::new(image, labels.clone())?)
}

fn read_payload(path: &Path, expected: u64) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| HinetError::io(path, e))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(HinetError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(HinetError::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("payload has {actual} bytes, header implies {expected}"),
        });
    }
    Ok(bytes)
}

pub fn read_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| HinetError::io(path, e))?;
    let malformed = |reason: String| HinetError::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    match value.get("magic").and_then(|m| m.as_str()) {
        Some(MAGIC) => {}
        other => {
            return Err(HinetError::BadMagic {
                path: path.to_path_buf(),
                found: other.unwrap_or("").to_owned(),
                expected: MAGIC,
            })
        }
    }
    let header: Header = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    if header.dtype != "f32le" {
        return Err(malformed(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.label_dtype != "u8" {
        return Err(malformed(format!("unsupported label_dtype {:?}", header.label_dtype)));
    }
    if header.extents.contains(&0) {
        return Err(malformed(format!("zero extent in {:?}", header.extents)));
    }
    Ok(header)
}

pub fn read_volume(path: &Path) -> Result<VolumeSample> {
    let header = read_header(path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let [z, y, x] = header.extents;
    let voxels = z * y * x;
    let data = read_payload(&dir.join(&header.data_file), 4 * (header.modalities * voxels) as u64)?;
    let labels = read_payload(&dir.join(&header.label_file), voxels as u64)?;
    let actual = checksum(&data, &labels);
    if actual != header.crc32 {
        return Err(HinetError::Checksum {
            path: path.to_path_buf(),
            expected: header.crc32,
            actual,
        });
    }
    let values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let image = Tensor5::from_vec(Shape5::new(1, header.modalities, z, y, x), values)?;
    Ok(VolumeSample::new(image, LabelVolume::new(header.extents, labels)?)?)
}

/// Every `.hvol` header directly inside `dir`, sorted by file name.
pub fn list_volumes(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HinetError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == EXTENSION))
        .collect();
    paths.sort();
    Ok(paths)
}
