//! Finite-difference verification of every analytic gradient in the crate.
//!
//! Each component is reduced to a scalar function of a flat f64 vector
//! (inputs and parameters), whose central differences with step
//! [`FD_STEP`] are compared with the analytic reverse pass. Scalar losses
//! are `sum(cotangent * output)` with a fixed random cotangent, except for
//! the network (`sum(probs^2)`) and the dice loss itself.
//!
//! Coordinates whose ±step perturbations flip the sign of any relu
//! pre-activation are skipped: the function is not differentiable across
//! that interval, so the difference quotient is not an estimate of the
//! derivative. Skips are counted in the report.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::blocks::{
    block_backward, block_forward, down_transition, down_transition_backward, up_transition, up_transition_backward,
    view_conv, view_conv_backward, BlockParams, BlockVariant, ViewAxis,
};
use crate::loss::{dice_loss, dice_loss_grad, DiceConfig, DiceForm};
use crate::network::{Network, NetworkConfig};
use crate::ops::{
    concat_channels, conv3d, conv3d_backward, eltwise_add, relu, relu_backward, softmax_channels,
    softmax_channels_backward, split_channels, upsample_nearest, upsample_nearest_backward, ConvWeights,
};
use crate::rng::SplitMix64;
use crate::{Shape5, Tensor5};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, for entries near zero.
pub const REL_FLOOR: f64 = 1e-3;
/// Threshold for primitives, blocks and the dice loss.
pub const OP_TOLERANCE: f64 = 1e-6;
/// Threshold for the end-to-end network check.
pub const NETWORK_TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    pub name: String,
    pub worst_rel_err: f64,
    pub threshold: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl ComponentReport {
    pub fn passed(&self) -> bool {
        self.worst_rel_err < self.threshold && self.checked > 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckOptions {
    /// Corrupt the analytic gradient of the named component (harness self-test).
    pub fault: Option<String>,
}

/// Compare `analytic` against central differences of `f` around `x0`.
/// `f` returns the scalar and the relu sign pattern of that evaluation.
pub fn check_component(
    name: &str,
    threshold: f64,
    x0: &[f64],
    mut analytic: Vec<f64>,
    f: impl Fn(&[f64]) -> (f64, Vec<bool>),
    opts: &GradcheckOptions,
) -> ComponentReport {
    assert_eq!(x0.len(), analytic.len(), "{name}: gradient length mismatch");
    if opts.fault.as_deref() == Some(name) {
        for a in analytic.iter_mut() {
            *a = *a * 1.05 + 1e-2;
        }
    }
    let mut x = x0.to_vec();
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let (plus, pat_plus) = f(&x);
        x[i] = orig - FD_STEP;
        let (minus, pat_minus) = f(&x);
        x[i] = orig;
        if pat_plus != pat_minus {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = relative_error(analytic[i], numeric);
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        checked += 1;
    }
    ComponentReport {
        name: String::from(name),
        worst_rel_err: worst,
        threshold,
        checked,
        skipped_kinks: skipped,
    }
}

fn random_tensor(shape: Shape5, rng: &mut SplitMix64, lo: f64, hi: f64) -> Tensor5<f64> {
    Tensor5::from_fn(shape, |_| rng.uniform(lo, hi))
}

fn random_conv(c_out: usize, c_in: usize, kernel: [usize; 3], stride: usize, rng: &mut SplitMix64) -> ConvWeights<f64> {
    let w = random_tensor(
        Shape5::new(c_out, c_in, kernel[0], kernel[1], kernel[2]),
        rng,
        -0.5,
        0.5,
    );
    let b = (0..c_out).map(|_| rng.uniform(-0.2, 0.2)).collect();
    ConvWeights { w, b, stride }
}

fn dot(a: &Tensor5<f64>, b: &Tensor5<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn positive(t: &Tensor5<f64>) -> impl Iterator<Item = bool> + '_ {
    t.data().iter().map(|&v| v > 0.0)
}

/// Splits a flat vector into consecutive slices of the given lengths.
struct Unpack<'a> {
    rest: &'a [f64],
}

impl<'a> Unpack<'a> {
    fn take(&mut self, n: usize) -> &'a [f64] {
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        head
    }

    fn tensor(&mut self, shape: Shape5) -> Tensor5<f64> {
        Tensor5 {
            shape,
            data: self.take(shape.len()).to_vec(),
        }
    }

    fn conv_into(&mut self, k: &mut ConvWeights<f64>) {
        let nw = k.w.len();
        k.w.data.copy_from_slice(self.take(nw));
        let nb = k.b.len();
        k.b.copy_from_slice(self.take(nb));
    }
}

fn flat_conv(k: &ConvWeights<f64>, out: &mut Vec<f64>) {
    out.extend_from_slice(k.w.data());
    out.extend_from_slice(&k.b);
}

fn conv_case(
    name: &str,
    x_shape: Shape5,
    c_out: usize,
    kernel: [usize; 3],
    stride: usize,
    seed: u64,
    opts: &GradcheckOptions,
) -> ComponentReport {
    let mut rng = SplitMix64::new(seed);
    let x = random_tensor(x_shape, &mut rng, -1.0, 1.0);
    let k = random_conv(c_out, x_shape.c, kernel, stride, &mut rng);
    let dy = random_tensor(k.output_shape(x_shape), &mut rng, -1.0, 1.0);
    let (dx, g) = conv3d_backward(&x, &k, &dy).expect("conv case");
    let mut x0 = x.data().to_vec();
    flat_conv(&k, &mut x0);
    let mut analytic = dx.into_vec();
    analytic.extend_from_slice(g.dw.data());
    analytic.extend_from_slice(&g.db);
    let template = k.clone();
    check_component(
        name,
        OP_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut u = Unpack { rest: v };
            let x = u.tensor(x_shape);
            let mut k = template.clone();
            u.conv_into(&mut k);
            (dot(&dy, &conv3d(&x, &k).expect("conv case")), Vec::new())
        },
        opts,
    )
}

fn relu_case(opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(31);
    let s = Shape5::new(1, 2, 3, 3, 3);
    // Keep every point at least 1e-3 away from the kink.
    let x = Tensor5::from_fn(s, |_| loop {
        let v = rng.uniform(-1.0, 1.0);
        if v.abs() > 1e-3 {
            break v;
        }
    });
    let dy = random_tensor(s, &mut rng, -1.0, 1.0);
    let analytic = relu_backward(&x, &dy).expect("relu case").into_vec();
    check_component(
        "relu",
        OP_TOLERANCE,
        x.data(),
        analytic,
        |v| {
            let x = Tensor5 {
                shape: s,
                data: v.to_vec(),
            };
            (dot(&dy, &relu(&x)), positive(&x).collect())
        },
        opts,
    )
}

fn upsample_case(opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(32);
    let s = Shape5::new(1, 1, 2, 2, 2);
    let x = random_tensor(s, &mut rng, -1.0, 1.0);
    let dy = random_tensor(Shape5::new(1, 1, 4, 4, 4), &mut rng, -1.0, 1.0);
    let analytic = upsample_nearest_backward(&dy, 2).expect("upsample case").into_vec();
    check_component(
        "upsample_nearest",
        OP_TOLERANCE,
        x.data(),
        analytic,
        |v| {
            let x = Tensor5 {
                shape: s,
                data: v.to_vec(),
            };
            (dot(&dy, &upsample_nearest(&x, 2).expect("upsample case")), Vec::new())
        },
        opts,
    )
}

fn concat_case(opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(33);
    let (sa, sb) = (Shape5::new(1, 2, 2, 2, 2), Shape5::new(1, 3, 2, 2, 2));
    let a = random_tensor(sa, &mut rng, -1.0, 1.0);
    let b = random_tensor(sb, &mut rng, -1.0, 1.0);
    let dy = random_tensor(sa.with_channels(5), &mut rng, -1.0, 1.0);
    let parts = split_channels(&dy, &[2, 3]).expect("concat case");
    let analytic: Vec<f64> = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
    let x0: Vec<f64> = a.data().iter().chain(b.data()).copied().collect();
    check_component(
        "concat_channels",
        OP_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut u = Unpack { rest: v };
            let (a, b) = (u.tensor(sa), u.tensor(sb));
            (dot(&dy, &concat_channels(&[&a, &b]).expect("concat case")), Vec::new())
        },
        opts,
    )
}

fn add_case(opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(34);
    let s = Shape5::new(1, 2, 2, 2, 2);
    let a = random_tensor(s, &mut rng, -1.0, 1.0);
    let b = random_tensor(s, &mut rng, -1.0, 1.0);
    let dy = random_tensor(s, &mut rng, -1.0, 1.0);
    let analytic: Vec<f64> = dy.data().iter().chain(dy.data()).copied().collect();
    let x0: Vec<f64> = a.data().iter().chain(b.data()).copied().collect();
    check_component(
        "eltwise_add",
        OP_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut u = Unpack { rest: v };
            let (a, b) = (u.tensor(s), u.tensor(s));
            (dot(&dy, &eltwise_add(&a, &b).expect("add case")), Vec::new())
        },
        opts,
    )
}

fn softmax_case(opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(35);
    let s = Shape5::new(1, 4, 2, 2, 2);
    let x = random_tensor(s, &mut rng, -2.0, 2.0);
    let dy = random_tensor(s, &mut rng, -1.0, 1.0);
    let p = softmax_channels(&x).expect("softmax case");
    let analytic = softmax_channels_backward(&p, &dy).expect("softmax case").into_vec();
    check_component(
        "softmax_channels",
        OP_TOLERANCE,
        x.data(),
        analytic,
        |v| {
            let x = Tensor5 {
                shape: s,
                data: v.to_vec(),
            };
            (dot(&dy, &softmax_channels(&x).expect("softmax case")), Vec::new())
        },
        opts,
    )
}

fn view_case(view: ViewAxis, opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(40 + view.unit_axis() as u64);
    let s = Shape5::new(1, 2, 4, 4, 4);
    let x = random_tensor(s, &mut rng, -1.0, 1.0);
    let k = random_conv(2, 2, view.kernel(), 1, &mut rng);
    let y = view_conv(&x, view, &k).expect("view case");
    let dy = random_tensor(y.shape(), &mut rng, -1.0, 1.0);
    let (dx, g) = view_conv_backward(&x, view, &k, &y, &dy).expect("view case");
    let mut x0 = x.data().to_vec();
    flat_conv(&k, &mut x0);
    let mut analytic = dx.into_vec();
    analytic.extend_from_slice(g.dw.data());
    analytic.extend_from_slice(&g.db);
    let name = match view {
        ViewAxis::Axial => "view_conv.axial",
        ViewAxis::Coronal => "view_conv.coronal",
        ViewAxis::Sagittal => "view_conv.sagittal",
    };
    let template = k.clone();
    check_component(
        name,
        OP_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut u = Unpack { rest: v };
            let x = u.tensor(s);
            let mut k = template.clone();
            u.conv_into(&mut k);
            let y = view_conv(&x, view, &k).expect("view case");
            (dot(&dy, &y), positive(&y).collect())
        },
        opts,
    )
}

fn block_case(variant: BlockVariant, opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(50 + variant as u64);
    let s = Shape5::new(1, 2, 3, 3, 3);
    let x = random_tensor(s, &mut rng, -1.0, 1.0);
    let mut p = BlockParams::<f64>::zeros(variant, 2, 2).expect("block case");
    for k in p.convs_mut() {
        for v in k.w.data_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
        for v in k.b.iter_mut() {
            *v = rng.uniform(-0.2, 0.2);
        }
    }
    let dy = random_tensor(s, &mut rng, -1.0, 1.0);
    let (_, cache) = block_forward(&x, &p).expect("block case");
    let (dx, g) = block_backward(&x, &p, &cache, &dy).expect("block case");
    let mut x0 = x.data().to_vec();
    let mut analytic = dx.into_vec();
    for (k, gk) in p.convs().map(|(_, k)| k).zip(g.grads()) {
        flat_conv(k, &mut x0);
        analytic.extend_from_slice(gk.dw.data());
        analytic.extend_from_slice(&gk.db);
    }
    let name = match variant {
        BlockVariant::Hyperdense => "hyperdense_block",
        BlockVariant::Baseline => "baseline_block",
    };
    check_component(
        name,
        OP_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut u = Unpack { rest: v };
            let x = u.tensor(s);
            let mut p = p.clone();
            for k in p.convs_mut() {
                u.conv_into(k);
            }
            let (y, cache) = block_forward(&x, &p).expect("block case");
            let pattern = cache.relu_outputs().flat_map(positive).collect();
            (dot(&dy, &y), pattern)
        },
        opts,
    )
}

fn down_case(opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(60);
    let s = Shape5::new(1, 1, 4, 4, 4);
    let x = random_tensor(s, &mut rng, -1.0, 1.0);
    let k = random_conv(2, 1, [3, 3, 3], 2, &mut rng);
    let y = down_transition(&x, &k).expect("down case");
    let dy = random_tensor(y.shape(), &mut rng, -1.0, 1.0);
    let (dx, g) = down_transition_backward(&x, &k, &y, &dy).expect("down case");
    let mut x0 = x.data().to_vec();
    flat_conv(&k, &mut x0);
    let mut analytic = dx.into_vec();
    analytic.extend_from_slice(g.dw.data());
    analytic.extend_from_slice(&g.db);
    let template = k.clone();
    check_component(
        "down_transition",
        OP_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut u = Unpack { rest: v };
            let x = u.tensor(s);
            let mut k = template.clone();
            u.conv_into(&mut k);
            let y = down_transition(&x, &k).expect("down case");
            (dot(&dy, &y), positive(&y).collect())
        },
        opts,
    )
}

fn up_case(opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(61);
    let (sx, ss) = (Shape5::new(1, 2, 2, 2, 2), Shape5::new(1, 1, 4, 4, 4));
    let x = random_tensor(sx, &mut rng, -1.0, 1.0);
    let skip = random_tensor(ss, &mut rng, -1.0, 1.0);
    let k = random_conv(1, 2, [1, 1, 1], 1, &mut rng);
    let (y, cache) = up_transition(&x, &skip, &k).expect("up case");
    let dy = random_tensor(y.shape(), &mut rng, -1.0, 1.0);
    let (dx, dskip, g) = up_transition_backward(&k, &cache, &dy).expect("up case");
    let mut x0: Vec<f64> = x.data().iter().chain(skip.data()).copied().collect();
    flat_conv(&k, &mut x0);
    let mut analytic = dx.into_vec();
    analytic.extend_from_slice(dskip.data());
    analytic.extend_from_slice(g.dw.data());
    analytic.extend_from_slice(&g.db);
    let template = k.clone();
    check_component(
        "up_transition",
        OP_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut u = Unpack { rest: v };
            let (x, skip) = (u.tensor(sx), u.tensor(ss));
            let mut k = template.clone();
            u.conv_into(&mut k);
            let (y, cache) = up_transition(&x, &skip, &k).expect("up case");
            (dot(&dy, &y), positive(&cache.projected).collect())
        },
        opts,
    )
}

/// Micro-network used by the end-to-end check.
pub fn micro_config(variant: BlockVariant) -> NetworkConfig {
    NetworkConfig {
        levels: 2,
        base_filters: 2,
        repetitions: vec![1, 2],
        block_variant: variant,
        num_classes: 3,
        in_channels: 2,
        branch_divisor: 2,
        seed: 7,
    }
}

fn network_case(variant: BlockVariant, opts: &GradcheckOptions) -> ComponentReport {
    let cfg = micro_config(variant);
    let net = Network::<f64>::build(&cfg).expect("network case");
    let mut rng = SplitMix64::new(70);
    let x = random_tensor(Shape5::new(1, 2, 4, 4, 4), &mut rng, -1.0, 1.0);
    let (probs, cache) = net.forward(&x).expect("network case");
    let dprobs = probs.map(|p| 2.0 * p);
    let grads = net.backward(&cache, &dprobs).expect("network case");
    let x0: Vec<f64> = net.params().iter().flat_map(|p| p.data.iter().copied()).collect();
    let analytic: Vec<f64> = grads.tensors().flat_map(|t| t.iter().copied()).collect();
    let name = match variant {
        BlockVariant::Hyperdense => "network.hyperdense",
        BlockVariant::Baseline => "network.baseline",
    };
    check_component(
        name,
        NETWORK_TOLERANCE,
        &x0,
        analytic,
        |v| {
            let mut net = net.clone();
            let mut u = Unpack { rest: v };
            for k in net.convs_mut() {
                u.conv_into(k);
            }
            let (probs, cache) = net.forward(&x).expect("network case");
            (probs.data().iter().map(|p| p * p).sum(), cache.relu_pattern())
        },
        opts,
    )
}

fn dice_case(form: DiceForm, opts: &GradcheckOptions) -> ComponentReport {
    let mut rng = SplitMix64::new(80);
    let s = Shape5::new(1, 2, 2, 2, 2);
    let logits = random_tensor(s, &mut rng, -2.0, 2.0);
    let p = softmax_channels(&logits).expect("dice case");
    let labels: Vec<usize> = (0..s.spatial()).map(|_| rng.below(2) as usize).collect();
    let t = Tensor5::from_fn(
        s,
        |[_, c, z, y, x]| {
            if labels[(z * s.y + y) * s.x + x] == c {
                1.0
            } else {
                0.0
            }
        },
    );
    let cfg = DiceConfig {
        form,
        ..DiceConfig::all_classes(2, 1.0)
    };
    let analytic = dice_loss_grad(&p, &t, &cfg).expect("dice case").into_vec();
    let name = match form {
        DiceForm::Outer => "dice_loss",
        DiceForm::Conventional => "dice_loss.conventional",
    };
    check_component(
        name,
        OP_TOLERANCE,
        p.data(),
        analytic,
        |v| {
            let p = Tensor5 {
                shape: s,
                data: v.to_vec(),
            };
            (dice_loss(&p, &t, &cfg).expect("dice case"), Vec::new())
        },
        opts,
    )
}

/// Names of every component in [`run_suite`] order.
pub const COMPONENTS: [&str; 19] = [
    "conv3d",
    "conv3d.stride2",
    "conv3d.anisotropic",
    "relu",
    "upsample_nearest",
    "concat_channels",
    "eltwise_add",
    "softmax_channels",
    "view_conv.axial",
    "view_conv.coronal",
    "view_conv.sagittal",
    "hyperdense_block",
    "baseline_block",
    "down_transition",
    "up_transition",
    "network.hyperdense",
    "network.baseline",
    "dice_loss",
    "dice_loss.conventional",
];

/// Run every component check.
pub fn run_suite(opts: &GradcheckOptions) -> Vec<ComponentReport> {
    vec![
        conv_case("conv3d", Shape5::new(1, 2, 3, 3, 3), 3, [3, 3, 3], 1, 20, opts),
        conv_case("conv3d.stride2", Shape5::new(1, 2, 4, 4, 3), 2, [3, 3, 3], 2, 21, opts),
        conv_case(
            "conv3d.anisotropic",
            Shape5::new(2, 1, 3, 4, 2),
            2,
            [1, 3, 5],
            1,
            22,
            opts,
        ),
        relu_case(opts),
        upsample_case(opts),
        concat_case(opts),
        add_case(opts),
        softmax_case(opts),
        view_case(ViewAxis::Axial, opts),
        view_case(ViewAxis::Coronal, opts),
        view_case(ViewAxis::Sagittal, opts),
        block_case(BlockVariant::Hyperdense, opts),
        block_case(BlockVariant::Baseline, opts),
        down_case(opts),
        up_case(opts),
        network_case(BlockVariant::Hyperdense, opts),
        network_case(BlockVariant::Baseline, opts),
        dice_case(DiceForm::Outer, opts),
        dice_case(DiceForm::Conventional, opts),
    ]
}
