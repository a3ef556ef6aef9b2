//! Overlap metrics for binary masks and per-region reports.
//!
//! Degenerate denominators (both masks empty for DSC, no positives for
//! sensitivity, no negatives for specificity) score 1.0 and are flagged in
//! the report.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{region_binarize, LabelVolume, Region};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(value, degenerate)`.
    pub fn dsc(&self) -> (f64, bool) {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn sensitivity(&self) -> (f64, bool) {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> (f64, bool) {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Confusion counts of two 0/1 masks of equal length.
pub fn confusion(pred: &[u8], gt: &[u8]) -> Result<Confusion> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidValue(format!(
            "mask lengths differ: prediction {} vs ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fn_ += 1,
            _ => {
                return Err(Error::InvalidValue(format!(
                    "masks must be binary, found values {p} and {g}"
                )))
            }
        }
    }
    Ok(c)
}

/// 2|A∩B| / (|A| + |B|); 1.0 when both masks are empty.
pub fn dsc(pred: &[u8], gt: &[u8]) -> Result<f64> {
    Ok(confusion(pred, gt)?.dsc().0)
}

/// TP / (TP + FN); 1.0 when the ground truth has no positives.
pub fn sensitivity(pred: &[u8], gt: &[u8]) -> Result<f64> {
    Ok(confusion(pred, gt)?.sensitivity().0)
}

/// TN / (TN + FP); 1.0 when the ground truth has no negatives.
pub fn specificity(pred: &[u8], gt: &[u8]) -> Result<f64> {
    Ok(confusion(pred, gt)?.specificity().0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMetrics {
    pub region: Region,
    pub dsc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub counts: Confusion,
    pub dsc_degenerate: bool,
    pub sensitivity_degenerate: bool,
    pub specificity_degenerate: bool,
}

impl RegionMetrics {
    pub fn from_counts(region: Region, counts: Confusion) -> Self {
        let (dsc, dsc_degenerate) = counts.dsc();
        let (sensitivity, sensitivity_degenerate) = counts.sensitivity();
        let (specificity, specificity_degenerate) = counts.specificity();
        RegionMetrics {
            region,
            dsc,
            sensitivity,
            specificity,
            counts,
            dsc_degenerate,
            sensitivity_degenerate,
            specificity_degenerate,
        }
    }
}

/// WT, TC and ET metrics of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub regions: Vec<RegionMetrics>,
}

impl MetricsReport {
    pub fn region(&self, region: Region) -> Option<&RegionMetrics> {
        self.regions.iter().find(|m| m.region == region)
    }

    /// Mean DSC over the three tumour regions.
    pub fn mean_dsc(&self) -> f64 {
        self.regions.iter().map(|m| m.dsc).sum::<f64>() / self.regions.len().max(1) as f64
    }
}

pub fn evaluate(pred: &LabelVolume, gt: &LabelVolume) -> Result<MetricsReport> {
    if pred.dims() != gt.dims() {
        return Err(Error::InvalidValue(format!(
            "prediction extents {:?} differ from ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let regions = Region::ALL
        .into_iter()
        .map(|r| {
            let p = region_binarize(pred.data(), r)?;
            let g = region_binarize(gt.data(), r)?;
            Ok(RegionMetrics::from_counts(r, confusion(&p, &g)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { regions })
}
