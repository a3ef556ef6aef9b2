//! Residual inception blocks built from orthogonal-view factorized
//! convolutions, plus the resolution transitions between network levels.
//!
//! A block has two stages of three parallel view branches (axial, coronal,
//! sagittal). In the [`BlockVariant::Hyperdense`] wiring every stage-2 branch
//! reads the concatenation of all three stage-1 outputs; in the
//! [`BlockVariant::Baseline`] wiring branch `v` of stage 2 reads only branch
//! `v` of stage 1. The stage-2 outputs are concatenated, fused by a 1×1×1
//! projection back to the input width and added to the block input.

use alloc::format;
use alloc::vec::Vec;

use crate::ops::{
    concat_channels, conv3d, conv3d_backward, eltwise_add, relu, relu_backward, split_channels, upsample_nearest,
    upsample_nearest_backward, ConvGrads, ConvWeights,
};
use crate::{Error, Result, Scalar, Tensor5};

/// Anatomical plane a factorized kernel spans. The remaining axis has
/// kernel extent 1 and is never mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewAxis {
    Axial,
    Coronal,
    Sagittal,
}

impl ViewAxis {
    /// Fixed branch order used for concatenation and parameter naming.
    pub const ALL: [ViewAxis; 3] = [ViewAxis::Axial, ViewAxis::Coronal, ViewAxis::Sagittal];

    /// Kernel extents over (z, y, x).
    pub const fn kernel(self) -> [usize; 3] {
        match self {
            ViewAxis::Axial => [1, 3, 3],
            ViewAxis::Coronal => [3, 1, 3],
            ViewAxis::Sagittal => [3, 3, 1],
        }
    }

    /// Index (0 = z, 1 = y, 2 = x) of the axis the view does not mix.
    pub const fn unit_axis(self) -> usize {
        match self {
            ViewAxis::Axial => 0,
            ViewAxis::Coronal => 1,
            ViewAxis::Sagittal => 2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            ViewAxis::Axial => "axial",
            ViewAxis::Coronal => "coronal",
            ViewAxis::Sagittal => "sagittal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockVariant {
    Hyperdense,
    Baseline,
}

impl BlockVariant {
    /// Input width of each stage-2 branch for branch width `c_b`.
    pub const fn stage2_in(self, c_b: usize) -> usize {
        match self {
            BlockVariant::Hyperdense => 3 * c_b,
            BlockVariant::Baseline => c_b,
        }
    }
}

/// Parameters of one residual inception block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub variant: BlockVariant,
    pub c_in: usize,
    pub c_b: usize,
    /// Indexed like [`ViewAxis::ALL`].
    pub stage1: [ConvWeights<T>; 3],
    pub stage2: [ConvWeights<T>; 3],
    pub proj: ConvWeights<T>,
}

/// Gradients of a [`BlockParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads<T> {
    pub stage1: [ConvGrads<T>; 3],
    pub stage2: [ConvGrads<T>; 3],
    pub proj: ConvGrads<T>,
}

impl<T: Scalar> BlockParams<T> {
    /// All-zero block: the residual path makes it an exact identity.
    pub fn zeros(variant: BlockVariant, c_in: usize, c_b: usize) -> Result<Self> {
        let s2_in = variant.stage2_in(c_b);
        let view = |v: ViewAxis, cin| ConvWeights::zeros(c_b, cin, v.kernel(), 1);
        Ok(BlockParams {
            variant,
            c_in,
            c_b,
            stage1: [
                view(ViewAxis::Axial, c_in)?,
                view(ViewAxis::Coronal, c_in)?,
                view(ViewAxis::Sagittal, c_in)?,
            ],
            stage2: [
                view(ViewAxis::Axial, s2_in)?,
                view(ViewAxis::Coronal, s2_in)?,
                view(ViewAxis::Sagittal, s2_in)?,
            ],
            proj: ConvWeights::zeros(c_in, 3 * c_b, [1, 1, 1], 1)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_b == 0 {
            return Err(Error::InvalidConfig(format!(
                "block widths must be positive (c_in={}, c_b={})",
                self.c_in, self.c_b
            )));
        }
        let s2_in = self.variant.stage2_in(self.c_b);
        for (i, v) in ViewAxis::ALL.into_iter().enumerate() {
            for (stage, k, cin) in [(1, &self.stage1[i], self.c_in), (2, &self.stage2[i], s2_in)] {
                k.validate()?;
                if k.kernel() != v.kernel() || k.stride != 1 {
                    return Err(Error::InvalidKernel(format!(
                        "stage {stage} {} branch has kernel {:?} stride {}, expected {:?} stride 1",
                        v.name(),
                        k.kernel(),
                        k.stride,
                        v.kernel()
                    )));
                }
                if k.c_in() != cin || k.c_out() != self.c_b {
                    return Err(Error::InvalidConfig(format!(
                        "stage {stage} {} branch maps {} -> {} channels, expected {} -> {}",
                        v.name(),
                        k.c_in(),
                        k.c_out(),
                        cin,
                        self.c_b
                    )));
                }
            }
        }
        self.proj.validate()?;
        if self.proj.kernel() != [1, 1, 1] || self.proj.c_in() != 3 * self.c_b || self.proj.c_out() != self.c_in {
            return Err(Error::InvalidConfig(format!(
                "projection must be 1x1x1 from {} to {} channels",
                3 * self.c_b,
                self.c_in
            )));
        }
        Ok(())
    }

    /// Convolutions in registry order: stage 1 views, stage 2 views, projection.
    pub fn convs(&self) -> impl Iterator<Item = (&'static str, &ConvWeights<T>)> {
        let names1 = ["stage1.axial", "stage1.coronal", "stage1.sagittal"];
        let names2 = ["stage2.axial", "stage2.coronal", "stage2.sagittal"];
        names1
            .into_iter()
            .zip(self.stage1.iter())
            .chain(names2.into_iter().zip(self.stage2.iter()))
            .chain(core::iter::once(("proj", &self.proj)))
    }

    pub fn convs_mut(&mut self) -> impl Iterator<Item = &mut ConvWeights<T>> {
        self.stage1
            .iter_mut()
            .chain(self.stage2.iter_mut())
            .chain(core::iter::once(&mut self.proj))
    }

    pub fn param_count(&self) -> usize {
        self.convs().map(|(_, k)| k.param_count()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> BlockParams<U> {
        BlockParams {
            variant: self.variant,
            c_in: self.c_in,
            c_b: self.c_b,
            stage1: [self.stage1[0].cast(), self.stage1[1].cast(), self.stage1[2].cast()],
            stage2: [self.stage2[0].cast(), self.stage2[1].cast(), self.stage2[2].cast()],
            proj: self.proj.cast(),
        }
    }
}

impl<T: Scalar> BlockGrads<T> {
    pub fn zeros_like(p: &BlockParams<T>) -> Self {
        BlockGrads {
            stage1: p.stage1.each_ref().map(ConvGrads::zeros_like),
            stage2: p.stage2.each_ref().map(ConvGrads::zeros_like),
            proj: ConvGrads::zeros_like(&p.proj),
        }
    }

    pub fn grads(&self) -> impl Iterator<Item = &ConvGrads<T>> {
        self.stage1
            .iter()
            .chain(self.stage2.iter())
            .chain(core::iter::once(&self.proj))
    }
}

/// Closed-form parameter count of one block (weights and biases).
pub const fn block_param_count(variant: BlockVariant, c_in: usize, c_b: usize) -> usize {
    let s2_in = variant.stage2_in(c_b);
    // Every view kernel has 9 taps.
    let stage1 = 3 * (9 * c_in * c_b + c_b);
    let stage2 = 3 * (9 * s2_in * c_b + c_b);
    let proj = 3 * c_b * c_in + c_in;
    stage1 + stage2 + proj
}

/// Anisotropic single-view convolution followed by relu.
pub fn view_conv<T: Scalar>(x: &Tensor5<T>, view: ViewAxis, k: &ConvWeights<T>) -> Result<Tensor5<T>> {
    check_view(view, k)?;
    Ok(relu(&conv3d(x, k)?))
}

/// Backward of [`view_conv`] given its output `y`.
pub fn view_conv_backward<T: Scalar>(
    x: &Tensor5<T>,
    view: ViewAxis,
    k: &ConvWeights<T>,
    y: &Tensor5<T>,
    dy: &Tensor5<T>,
) -> Result<(Tensor5<T>, ConvGrads<T>)> {
    check_view(view, k)?;
    let dpre = relu_backward(y, dy)?;
    conv3d_backward(x, k, &dpre)
}

fn check_view<T: Scalar>(view: ViewAxis, k: &ConvWeights<T>) -> Result<()> {
    if k.kernel() != view.kernel() || k.stride != 1 {
        return Err(Error::InvalidKernel(format!(
            "{} view expects kernel {:?} with stride 1, got {:?} stride {}",
            view.name(),
            view.kernel(),
            k.kernel(),
            k.stride
        )));
    }
    Ok(())
}

/// Intermediate activations of one block forward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    pub stage1: [Tensor5<T>; 3],
    /// Concatenated stage-1 outputs (hyperdense wiring only).
    pub stage1_cat: Option<Tensor5<T>>,
    pub stage2: [Tensor5<T>; 3],
    pub stage2_cat: Tensor5<T>,
}

impl<T: Scalar> BlockCache<T> {
    /// Post-relu activations, in a fixed order.
    pub fn relu_outputs(&self) -> impl Iterator<Item = &Tensor5<T>> {
        self.stage1.iter().chain(self.stage2.iter())
    }
}

/// Forward pass of either block variant, keeping the activations needed by
/// [`block_backward`].
pub fn block_forward<T: Scalar>(x: &Tensor5<T>, p: &BlockParams<T>) -> Result<(Tensor5<T>, BlockCache<T>)> {
    p.validate()?;
    if x.shape().c != p.c_in {
        return Err(Error::InvalidConfig(format!(
            "block expects {} input channels, got input {}",
            p.c_in,
            x.shape()
        )));
    }
    let mut s1 = Vec::with_capacity(3);
    for (i, v) in ViewAxis::ALL.into_iter().enumerate() {
        s1.push(view_conv(x, v, &p.stage1[i])?);
    }
    let stage1: [Tensor5<T>; 3] = s1.try_into().map_err(|_| Error::StaleCache)?;
    let stage1_cat = match p.variant {
        BlockVariant::Hyperdense => Some(concat_channels(&[&stage1[0], &stage1[1], &stage1[2]])?),
        BlockVariant::Baseline => None,
    };
    let mut s2 = Vec::with_capacity(3);
    for (i, v) in ViewAxis::ALL.into_iter().enumerate() {
        let input = stage1_cat.as_ref().unwrap_or(&stage1[i]);
        s2.push(view_conv(input, v, &p.stage2[i])?);
    }
    let stage2: [Tensor5<T>; 3] = s2.try_into().map_err(|_| Error::StaleCache)?;
    let stage2_cat = concat_channels(&[&stage2[0], &stage2[1], &stage2[2]])?;
    let fused = conv3d(&stage2_cat, &p.proj)?;
    let out = eltwise_add(x, &fused)?;
    Ok((
        out,
        BlockCache {
            stage1,
            stage1_cat,
            stage2,
            stage2_cat,
        },
    ))
}

/// Hyperdense residual inception block (cross-view stage-2 inputs).
pub fn hyperdense_block<T: Scalar>(x: &Tensor5<T>, p: &BlockParams<T>) -> Result<Tensor5<T>> {
    if p.variant != BlockVariant::Hyperdense {
        return Err(Error::InvalidConfig(format!(
            "hyperdense_block given {:?} parameters",
            p.variant
        )));
    }
    block_forward(x, p).map(|(y, _)| y)
}

/// Baseline residual inception block (no cross-view connections).
pub fn baseline_block<T: Scalar>(x: &Tensor5<T>, p: &BlockParams<T>) -> Result<Tensor5<T>> {
    if p.variant != BlockVariant::Baseline {
        return Err(Error::InvalidConfig(format!(
            "baseline_block given {:?} parameters",
            p.variant
        )));
    }
    block_forward(x, p).map(|(y, _)| y)
}

/// Reverse pass through one block. Returns the input cotangent and the
/// parameter gradients.
pub fn block_backward<T: Scalar>(
    x: &Tensor5<T>,
    p: &BlockParams<T>,
    cache: &BlockCache<T>,
    dy: &Tensor5<T>,
) -> Result<(Tensor5<T>, BlockGrads<T>)> {
    if dy.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "block_backward",
            left: dy.shape(),
            right: x.shape(),
        });
    }
    let (dcat2, proj) = conv3d_backward(&cache.stage2_cat, &p.proj, dy)?;
    let ds2 = split_channels(&dcat2, &[p.c_b; 3])?;

    let mut stage2 = Vec::with_capacity(3);
    let mut ds1: [Tensor5<T>; 3] = cache.stage1.each_ref().map(|t| Tensor5::zeros(t.shape()));
    let mut dcat1 = cache.stage1_cat.as_ref().map(|t| Tensor5::zeros(t.shape()));
    for (i, v) in ViewAxis::ALL.into_iter().enumerate() {
        let input = cache.stage1_cat.as_ref().unwrap_or(&cache.stage1[i]);
        let (din, g) = view_conv_backward(input, v, &p.stage2[i], &cache.stage2[i], &ds2[i])?;
        stage2.push(g);
        let target = match dcat1.as_mut() {
            Some(acc) => acc,
            None => &mut ds1[i],
        };
        accumulate(target, &din);
    }
    if let Some(dcat1) = dcat1 {
        let parts = split_channels(&dcat1, &[p.c_b; 3])?;
        for (slot, part) in ds1.iter_mut().zip(parts) {
            *slot = part;
        }
    }

    // Residual path carries dy straight to the input.
    let mut dx = dy.clone();
    let mut stage1 = Vec::with_capacity(3);
    for (i, v) in ViewAxis::ALL.into_iter().enumerate() {
        let (din, g) = view_conv_backward(x, v, &p.stage1[i], &cache.stage1[i], &ds1[i])?;
        accumulate(&mut dx, &din);
        stage1.push(g);
    }
    let to3 = |v: Vec<ConvGrads<T>>| -> [ConvGrads<T>; 3] {
        let mut it = v.into_iter();
        [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
    };
    Ok((
        dx,
        BlockGrads {
            stage1: to3(stage1),
            stage2: to3(stage2),
            proj,
        },
    ))
}

pub(crate) fn accumulate<T: Scalar>(acc: &mut Tensor5<T>, v: &Tensor5<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(v.data()) {
        *a = *a + b;
    }
}

/// Stride-2 3×3×3 convolution plus relu; halves each spatial extent (ceil).
pub fn down_transition<T: Scalar>(x: &Tensor5<T>, k: &ConvWeights<T>) -> Result<Tensor5<T>> {
    check_down(x, k)?;
    Ok(relu(&conv3d(x, k)?))
}

pub fn down_transition_backward<T: Scalar>(
    x: &Tensor5<T>,
    k: &ConvWeights<T>,
    y: &Tensor5<T>,
    dy: &Tensor5<T>,
) -> Result<(Tensor5<T>, ConvGrads<T>)> {
    check_down(x, k)?;
    conv3d_backward(x, k, &relu_backward(y, dy)?)
}

fn check_down<T: Scalar>(x: &Tensor5<T>, k: &ConvWeights<T>) -> Result<()> {
    if k.kernel() != [3, 3, 3] || k.stride != 2 {
        return Err(Error::InvalidKernel(format!(
            "down transition needs a 3x3x3 stride-2 kernel, got {:?} stride {}",
            k.kernel(),
            k.stride
        )));
    }
    let s = x.shape();
    if s.z < 2 || s.y < 2 || s.x < 2 {
        return Err(Error::InvalidValue(format!(
            "cannot downsample input {s}: every spatial extent must be at least 2"
        )));
    }
    Ok(())
}

/// Activations kept by [`up_transition`].
#[derive(Debug, Clone)]
pub struct UpCache<T> {
    pub upsampled: Tensor5<T>,
    pub projected: Tensor5<T>,
}

/// Nearest ×2 upsample, 1×1×1 conv + relu, then concatenation with the
/// encoder skip (coarse path first).
pub fn up_transition<T: Scalar>(
    x: &Tensor5<T>,
    skip: &Tensor5<T>,
    k: &ConvWeights<T>,
) -> Result<(Tensor5<T>, UpCache<T>)> {
    if k.kernel() != [1, 1, 1] || k.stride != 1 {
        return Err(Error::InvalidKernel(format!(
            "up transition needs a 1x1x1 stride-1 kernel, got {:?} stride {}",
            k.kernel(),
            k.stride
        )));
    }
    let upsampled = upsample_nearest(x, 2)?;
    if !upsampled.shape().same_grid(skip.shape()) {
        return Err(Error::ShapeMismatch {
            op: "up_transition (upsampled input vs skip)",
            left: upsampled.shape(),
            right: skip.shape(),
        });
    }
    let projected = relu(&conv3d(&upsampled, k)?);
    let out = concat_channels(&[&projected, skip])?;
    Ok((out, UpCache { upsampled, projected }))
}

/// Returns (d coarse input, d skip, kernel grads).
pub fn up_transition_backward<T: Scalar>(
    k: &ConvWeights<T>,
    cache: &UpCache<T>,
    dy: &Tensor5<T>,
) -> Result<(Tensor5<T>, Tensor5<T>, ConvGrads<T>)> {
    let c_up = cache.projected.shape().c;
    let c_skip = dy.shape().c.checked_sub(c_up).ok_or(Error::ShapeMismatch {
        op: "up_transition_backward",
        left: dy.shape(),
        right: cache.projected.shape(),
    })?;
    let mut parts = split_channels(dy, &[c_up, c_skip])?.into_iter();
    let (dproj, dskip) = (parts.next().unwrap(), parts.next().unwrap());
    let dpre = relu_backward(&cache.projected, &dproj)?;
    let (dup, g) = conv3d_backward(&cache.upsampled, k, &dpre)?;
    let dx = upsample_nearest_backward(&dup, 2)?;
    Ok((dx, dskip, g))
}
