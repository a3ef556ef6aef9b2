//! Closed-form parameter and multiply-accumulate counts for comparing a full
//! 3x3x3 convolution with one factorized three-view stage.

/// Taps of a full cubic kernel.
pub const FULL_TAPS: usize = 27;
/// Taps of one planar view kernel.
pub const VIEW_TAPS: usize = 9;

/// Parameters of a 3x3x3 convolution, bias included.
pub const fn full_conv_params(c_in: usize, c_out: usize) -> usize {
    FULL_TAPS * c_in * c_out + c_out
}

/// Parameters of three parallel view convolutions `c_in -> c_b`, biases included.
pub const fn factorized_stage_params(c_in: usize, c_b: usize) -> usize {
    3 * (VIEW_TAPS * c_in * c_b + c_b)
}

/// Multiply-accumulates of a 3x3x3 convolution over `voxels` output voxels.
pub const fn full_conv_macs(c_in: usize, c_out: usize, voxels: usize) -> usize {
    FULL_TAPS * c_in * c_out * voxels
}

/// Multiply-accumulates of a factorized stage over `voxels` output voxels.
pub const fn factorized_stage_macs(c_in: usize, c_b: usize, voxels: usize) -> usize {
    3 * VIEW_TAPS * c_in * c_b * voxels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_channel_counts() {
        assert_eq!(full_conv_params(8, 8), 1736);
        assert_eq!(factorized_stage_params(8, 4), 876);
        assert_eq!(full_conv_macs(8, 8, 1), 1728);
        assert_eq!(factorized_stage_macs(8, 4, 1), 864);
    }
}
