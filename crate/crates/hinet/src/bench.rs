//! Full 3x3x3 convolution against one factorized three-view stage.

use std::time::{Duration, Instant};

use hinet_core::blocks::{view_conv, ViewAxis};
use hinet_core::cost::{factorized_stage_macs, factorized_stage_params, full_conv_macs, full_conv_params};
use hinet_core::ops::{concat_channels, conv3d, relu, ConvWeights};
use hinet_core::rng::SplitMix64;
use hinet_core::{Shape5, Tensor5};
use serde::Serialize;

use crate::error::{HinetError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub channels: usize,
    pub branch_channels: usize,
    pub extent: usize,
    pub repeats: usize,
    pub full_params: usize,
    pub factorized_params: usize,
    pub full_macs: usize,
    pub factorized_macs: usize,
    pub full_median_s: f64,
    pub factorized_median_s: f64,
}

impl BenchReport {
    /// Closed-form counts favour the factorized stage.
    pub fn counts_hold(&self) -> bool {
        self.factorized_params < self.full_params && self.factorized_macs < self.full_macs
    }
}

fn random_conv(rng: &mut SplitMix64, c_out: usize, c_in: usize, kernel: [usize; 3]) -> ConvWeights<f32> {
    let shape = Shape5::new(c_out, c_in, kernel[0], kernel[1], kernel[2]);
    let bound = (6.0 / (c_in * kernel.iter().product::<usize>()) as f64).sqrt();
    let w = Tensor5::from_fn(shape, |_| rng.uniform(-bound, bound) as f32);
    ConvWeights::new(w, vec![0.0; c_out], 1).expect("valid kernel")
}

fn median(mut times: Vec<Duration>) -> f64 {
    times.sort();
    times[times.len() / 2].as_secs_f64()
}

/// Time both layers on a random `(1, channels, extent^3)` input. The
/// factorized stage uses branch width `channels / 2`.
pub fn run(channels: usize, extent: usize, repeats: usize) -> Result<BenchReport> {
    if channels < 2 || extent == 0 || repeats == 0 {
        return Err(HinetError::Config(format!(
            "bench needs channels >= 2, extent >= 1 and repeats >= 1, got {channels}, {extent}, {repeats}"
        )));
    }
    let c_b = channels / 2;
    let voxels = extent * extent * extent;
    let mut rng = SplitMix64::new(0xbe7c);
    let x = Tensor5::from_fn(Shape5::new(1, channels, extent, extent, extent), |_| {
        rng.uniform(-1.0, 1.0) as f32
    });
    let full = random_conv(&mut rng, channels, channels, [3, 3, 3]);
    let views: Vec<_> = ViewAxis::ALL
        .iter()
        .map(|v| (*v, random_conv(&mut rng, c_b, channels, v.kernel())))
        .collect();

    let mut full_times = Vec::with_capacity(repeats);
    let mut fact_times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        let y = relu(&conv3d(&x, &full)?);
        full_times.push(t.elapsed());
        std::hint::black_box(&y);

        let t = Instant::now();
        let branches = views
            .iter()
            .map(|(v, k)| view_conv(&x, *v, k))
            .collect::<hinet_core::Result<Vec<_>>>()?;
        let y = concat_channels(&branches.iter().collect::<Vec<_>>())?;
        fact_times.push(t.elapsed());
        std::hint::black_box(&y);
    }
    Ok(BenchReport {
        channels,
        branch_channels: c_b,
        extent,
        repeats,
        full_params: full_conv_params(channels, channels),
        factorized_params: factorized_stage_params(channels, c_b),
        full_macs: full_conv_macs(channels, channels, voxels),
        factorized_macs: factorized_stage_macs(channels, c_b, voxels),
        full_median_s: median(full_times),
        factorized_median_s: median(fact_times),
    })
}
