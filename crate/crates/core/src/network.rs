//! The hyperdense inception encoder-decoder: stem, repeated residual inception blocks per
//! encoder level, stride-2 transitions, a decoder with skip concatenation
//! and one block per level, and a 1×1×1 softmax head.
//!
//! Parameters live in a flat registry with stable path-like names
//! (`enc.L2.block1.stage2.sagittal.w`); the order of that registry is the
//! order of weight initialization, optimizer state and checkpoint records.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::blocks::{
    block_backward, block_forward, block_param_count, down_transition, down_transition_backward, up_transition,
    up_transition_backward, BlockCache, BlockParams, BlockVariant, UpCache,
};
use crate::ops::{
    conv3d, conv3d_backward, relu, relu_backward, softmax_channels, softmax_channels_backward, ConvGrads, ConvWeights,
};
use crate::rng::SplitMix64;
use crate::{Error, Result, Scalar, Shape5, Tensor5};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub levels: usize,
    pub base_filters: usize,
    /// Encoder blocks per level, shallowest first.
    pub repetitions: Vec<usize>,
    pub block_variant: BlockVariant,
    pub num_classes: usize,
    pub in_channels: usize,
    /// Branch width of a block is its width divided by this.
    pub branch_divisor: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            levels: 4,
            base_filters: 8,
            repetitions: vec![1, 2, 3, 4],
            block_variant: BlockVariant::Hyperdense,
            num_classes: 4,
            in_channels: 4,
            branch_divisor: 2,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Ramp `1, 2, ..` over the upper levels with 4 blocks at the deepest one.
    pub fn default_repetitions(levels: usize) -> Vec<usize> {
        (0..levels)
            .map(|l| if l + 1 == levels { levels.max(4) } else { l + 1 })
            .collect()
    }

    /// Default configuration with a different depth.
    pub fn with_levels(levels: usize) -> Self {
        NetworkConfig {
            levels,
            repetitions: NetworkConfig::default_repetitions(levels),
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.levels == 0 || self.levels > 16 {
            return bad(format!("levels must be in 1..=16, got {}", self.levels));
        }
        if self.repetitions.len() != self.levels {
            return bad(format!(
                "{} repetition counts given for {} levels",
                self.repetitions.len(),
                self.levels
            ));
        }
        if self.repetitions.contains(&0) {
            return bad(format!("every level needs at least one block: {:?}", self.repetitions));
        }
        let deepest = self.repetitions[self.levels - 1];
        if self.repetitions.iter().any(|&r| r > deepest) {
            return bad(format!(
                "the deepest level must carry the most repetitions: {:?}",
                self.repetitions
            ));
        }
        if self.base_filters == 0 || self.num_classes == 0 || self.in_channels == 0 {
            return bad("base_filters, num_classes and in_channels must be positive".into());
        }
        if self.branch_divisor == 0 || self.base_filters < self.branch_divisor {
            return bad(format!(
                "branch_divisor {} leaves no branch channels at width {}",
                self.branch_divisor, self.base_filters
            ));
        }
        Ok(())
    }

    /// Encoder width at `level`.
    pub fn width(&self, level: usize) -> usize {
        self.base_filters << level
    }

    pub fn branch_width(&self, width: usize) -> usize {
        width / self.branch_divisor
    }

    /// Required divisor of every spatial input extent.
    pub fn spatial_divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    /// Input width of the decoder's up transition at `level`.
    fn up_input(&self, level: usize) -> usize {
        if level + 2 == self.levels {
            self.width(level + 1)
        } else {
            2 * self.width(level + 1)
        }
    }

    fn head_input(&self) -> usize {
        if self.levels == 1 {
            self.width(0)
        } else {
            2 * self.width(0)
        }
    }
}

/// Parameter count computed from the configuration alone.
pub fn closed_form_count(cfg: &NetworkConfig) -> usize {
    let conv = |c_out: usize, c_in: usize, taps: usize| c_out * c_in * taps + c_out;
    let v = cfg.block_variant;
    let mut total = conv(cfg.width(0), cfg.in_channels, 27);
    for l in 0..cfg.levels {
        let w = cfg.width(l);
        total += cfg.repetitions[l] * block_param_count(v, w, cfg.branch_width(w));
        if l + 1 < cfg.levels {
            total += conv(cfg.width(l + 1), w, 27);
        }
    }
    for l in 0..cfg.levels.saturating_sub(1) {
        let w = cfg.width(l);
        total += conv(w, cfg.up_input(l), 1);
        total += block_param_count(v, 2 * w, cfg.branch_width(2 * w));
    }
    total + conv(cfg.num_classes, cfg.head_input(), 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLevel<T> {
    pub blocks: Vec<BlockParams<T>>,
    /// Absent at the deepest level.
    pub down: Option<ConvWeights<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLevel<T> {
    pub level: usize,
    pub up: ConvWeights<T>,
    pub block: BlockParams<T>,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// The assembled network. `T = f32` for training, `T = f64` for gradient
/// checks.
#[derive(Debug)]
pub struct Network<T> {
    config: NetworkConfig,
    stem: ConvWeights<T>,
    encoder: Vec<EncoderLevel<T>>,
    /// Ordered deepest-first, i.e. in execution order.
    decoder: Vec<DecoderLevel<T>>,
    head: ConvWeights<T>,
    /// Changes whenever parameters may have been mutated; ties caches to a state.
    state_id: u64,
}

impl<T: Scalar> Clone for Network<T> {
    fn clone(&self) -> Self {
        Network {
            config: self.config.clone(),
            stem: self.stem.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            head: self.head.clone(),
            state_id: fresh_id(),
        }
    }
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.stem == other.stem
            && self.encoder == other.encoder
            && self.decoder == other.decoder
            && self.head == other.head
    }
}

/// Borrowed view of one registry entry.
#[derive(Debug, Clone)]
pub struct ParamRef<'a, T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [T],
}

/// Gradients aligned with [`Network::convs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub Vec<ConvGrads<T>>);

impl<T: Scalar> Gradients<T> {
    /// Flattened view matching [`Network::params`] (weights then bias per conv).
    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.0.iter().flat_map(|g| [g.dw.data(), g.db.as_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl<T: Scalar> Network<T> {
    /// Build the network skeleton with every parameter zero.
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let v = cfg.block_variant;
        let block = |w: usize| BlockParams::zeros(v, w, cfg.branch_width(w));
        let stem = ConvWeights::zeros(cfg.width(0), cfg.in_channels, [3, 3, 3], 1)?;
        let mut encoder = Vec::with_capacity(cfg.levels);
        for l in 0..cfg.levels {
            let w = cfg.width(l);
            let blocks = (0..cfg.repetitions[l]).map(|_| block(w)).collect::<Result<Vec<_>>>()?;
            let down = if l + 1 < cfg.levels {
                Some(ConvWeights::zeros(cfg.width(l + 1), w, [3, 3, 3], 2)?)
            } else {
                None
            };
            encoder.push(EncoderLevel { blocks, down });
        }
        let mut decoder = Vec::with_capacity(cfg.levels.saturating_sub(1));
        for l in (0..cfg.levels.saturating_sub(1)).rev() {
            let w = cfg.width(l);
            decoder.push(DecoderLevel {
                level: l,
                up: ConvWeights::zeros(w, cfg.up_input(l), [1, 1, 1], 1)?,
                block: block(2 * w)?,
            });
        }
        let head = ConvWeights::zeros(cfg.num_classes, cfg.head_input(), [1, 1, 1], 1)?;
        Ok(Network {
            config: cfg.clone(),
            stem,
            encoder,
            decoder,
            head,
            state_id: fresh_id(),
        })
    }

    /// Build and initialize from the configured seed: weights uniform in
    /// ±sqrt(6 / fan_in) drawn in registry order, biases zero.
    pub fn build(cfg: &NetworkConfig) -> Result<Self> {
        let mut net = Network::zeros(cfg)?;
        let mut rng = SplitMix64::new(cfg.seed);
        for k in net.convs_mut() {
            let s = k.w.shape();
            let fan_in = (s.c * s.spatial()) as f64;
            let bound = libm_sqrt(6.0 / fan_in);
            for v in k.w.data_mut() {
                *v = T::from_f64(rng.uniform(-bound, bound));
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn encoder(&self) -> &[EncoderLevel<T>] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DecoderLevel<T>] {
        &self.decoder
    }

    /// All convolutions with their name prefixes, in registry order.
    pub fn convs(&self) -> Vec<(String, &ConvWeights<T>)> {
        let mut out = Vec::new();
        out.push((String::from("stem"), &self.stem));
        for (l, level) in self.encoder.iter().enumerate() {
            for (i, b) in level.blocks.iter().enumerate() {
                for (name, k) in b.convs() {
                    out.push((format!("enc.L{l}.block{i}.{name}"), k));
                }
            }
            if let Some(d) = &level.down {
                out.push((format!("enc.L{l}.down"), d));
            }
        }
        for d in &self.decoder {
            out.push((format!("dec.L{}.up", d.level), &d.up));
            for (name, k) in d.block.convs() {
                out.push((format!("dec.L{}.block0.{name}", d.level), k));
            }
        }
        out.push((String::from("head"), &self.head));
        out
    }

    /// Mutable convolutions in registry order. Invalidates outstanding caches.
    pub fn convs_mut(&mut self) -> Vec<&mut ConvWeights<T>> {
        self.state_id = fresh_id();
        let mut out = Vec::new();
        out.push(&mut self.stem);
        for level in self.encoder.iter_mut() {
            for b in level.blocks.iter_mut() {
                out.extend(b.convs_mut());
            }
            if let Some(d) = level.down.as_mut() {
                out.push(d);
            }
        }
        for d in self.decoder.iter_mut() {
            out.push(&mut d.up);
            out.extend(d.block.convs_mut());
        }
        out.push(&mut self.head);
        out
    }

    /// Flat registry: `<prefix>.w` (rank 5) then `<prefix>.b` (rank 1) per conv.
    pub fn params(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        for (prefix, k) in self.convs() {
            out.push(ParamRef {
                name: format!("{prefix}.w"),
                dims: k.w.shape().to_array().to_vec(),
                data: k.w.data(),
            });
            out.push(ParamRef {
                name: format!("{prefix}.b"),
                dims: vec![k.b.len()],
                data: &k.b,
            });
        }
        out
    }

    /// Sum of element counts over the registry.
    pub fn count_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Rebuild a network from registry entries (as read from a checkpoint).
    /// The configuration is recovered from names and shapes; entries must
    /// match the rebuilt registry exactly, in order.
    pub fn from_params(entries: Vec<(String, Vec<usize>, Vec<T>)>, seed: u64) -> Result<Self> {
        let cfg = infer_config(&entries, seed)?;
        let mut net = Network::zeros(&cfg)?;
        let expected: Vec<(String, Vec<usize>)> = net.params().into_iter().map(|p| (p.name, p.dims)).collect();
        if expected.len() != entries.len() {
            return Err(Error::InvalidConfig(format!(
                "registry has {} entries, parameters supply {}",
                expected.len(),
                entries.len()
            )));
        }
        for ((name, dims), (got_name, got_dims, _)) in expected.iter().zip(&entries) {
            if name != got_name || dims != got_dims {
                return Err(Error::InvalidConfig(format!(
                    "expected parameter {name} {dims:?}, found {got_name} {got_dims:?}"
                )));
            }
        }
        let mut it = entries.into_iter();
        for k in net.convs_mut() {
            let (_, _, w) = it.next().unwrap();
            k.w.data_mut().copy_from_slice(&w);
            let (_, _, b) = it.next().unwrap();
            k.b.copy_from_slice(&b);
        }
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            stem: self.stem.cast(),
            encoder: self
                .encoder
                .iter()
                .map(|l| EncoderLevel {
                    blocks: l.blocks.iter().map(|b| b.cast()).collect(),
                    down: l.down.as_ref().map(|d| d.cast()),
                })
                .collect(),
            decoder: self
                .decoder
                .iter()
                .map(|d| DecoderLevel {
                    level: d.level,
                    up: d.up.cast(),
                    block: d.block.cast(),
                })
                .collect(),
            head: self.head.cast(),
            state_id: fresh_id(),
        }
    }

    /// Forward pass; returns class probabilities (n, D, z, y, x) and the
    /// activations needed by [`Network::backward`].
    pub fn forward(&self, x: &Tensor5<T>) -> Result<(Tensor5<T>, ForwardCache<T>)> {
        let cfg = &self.config;
        let s = x.shape();
        if s.c != cfg.in_channels {
            return Err(Error::ShapeMismatch {
                op: "network input channels",
                left: s,
                right: s.with_channels(cfg.in_channels),
            });
        }
        if s.is_empty() {
            return Err(Error::ZeroExtent {
                op: "network forward",
                shape: s,
            });
        }
        let div = cfg.spatial_divisor();
        for e in s.spatial_dims() {
            if e % div != 0 {
                return Err(Error::Indivisible {
                    extent: e,
                    divisor: div,
                });
            }
        }

        let stem_out = relu(&conv3d(x, &self.stem)?);
        let mut h = stem_out.clone();
        let mut enc = Vec::with_capacity(self.encoder.len());
        for level in &self.encoder {
            let mut inputs = Vec::with_capacity(level.blocks.len());
            let mut caches = Vec::with_capacity(level.blocks.len());
            for b in &level.blocks {
                let (y, c) = block_forward(&h, b)?;
                inputs.push(core::mem::replace(&mut h, y));
                caches.push(c);
            }
            let down = match &level.down {
                Some(k) => {
                    let y = down_transition(&h, k)?;
                    Some(core::mem::replace(&mut h, y))
                }
                None => None,
            };
            // With a transition, `down` holds the level output (the skip) and
            // `h` the downsampled tensor; otherwise `h` is the level output.
            enc.push(EncoderCache {
                inputs,
                caches,
                skip: down,
            });
        }
        let mut dec = Vec::with_capacity(self.decoder.len());
        for d in &self.decoder {
            let skip = enc[d.level].skip.as_ref().ok_or(Error::StaleCache)?;
            let (u, up) = up_transition(&h, skip, &d.up)?;
            let (y, block) = block_forward(&u, &d.block)?;
            h = y;
            dec.push(DecoderCache {
                up,
                block_input: u,
                block,
            });
        }
        let logits = conv3d(&h, &self.head)?;
        let probs = softmax_channels(&logits)?;
        Ok((
            probs.clone(),
            ForwardCache {
                state_id: self.state_id,
                input: x.clone(),
                stem_out,
                enc,
                dec,
                head_input: h,
                probs,
            },
        ))
    }

    /// Class probabilities only.
    pub fn predict(&self, x: &Tensor5<T>) -> Result<Tensor5<T>> {
        self.forward(x).map(|(p, _)| p)
    }

    /// Reverse pass from a probability cotangent to parameter gradients in
    /// registry order.
    pub fn backward(&self, cache: &ForwardCache<T>, dprobs: &Tensor5<T>) -> Result<Gradients<T>> {
        if cache.state_id != self.state_id {
            return Err(Error::StaleCache);
        }
        if dprobs.shape() != cache.probs.shape() {
            return Err(Error::ShapeMismatch {
                op: "network backward",
                left: dprobs.shape(),
                right: cache.probs.shape(),
            });
        }
        let dlogits = softmax_channels_backward(&cache.probs, dprobs)?;
        let (mut dh, head) = conv3d_backward(&cache.head_input, &self.head, &dlogits)?;

        let mut dskips: Vec<Option<Tensor5<T>>> = vec![None; self.encoder.len()];
        let mut dec_grads = Vec::with_capacity(self.decoder.len());
        for (d, c) in self.decoder.iter().zip(&cache.dec).rev() {
            let (du, bg) = block_backward(&c.block_input, &d.block, &c.block, &dh)?;
            let (dcoarse, dskip, ug) = up_transition_backward(&d.up, &c.up, &du)?;
            dskips[d.level] = Some(dskip);
            dh = dcoarse;
            dec_grads.push((ug, bg));
        }
        dec_grads.reverse();

        let mut enc_grads = Vec::with_capacity(self.encoder.len());
        for (l, (level, c)) in self.encoder.iter().zip(&cache.enc).enumerate().rev() {
            let down = match (&level.down, &c.skip) {
                (Some(k), Some(skip)) => {
                    let out = if l + 1 < cache.enc.len() {
                        cache.enc[l + 1].inputs.first().ok_or(Error::StaleCache)?
                    } else {
                        return Err(Error::StaleCache);
                    };
                    let (mut dx, g) = down_transition_backward(skip, k, out, &dh)?;
                    if let Some(ds) = dskips[l].take() {
                        crate::blocks::accumulate(&mut dx, &ds);
                    }
                    dh = dx;
                    Some(g)
                }
                (None, None) => None,
                _ => return Err(Error::StaleCache),
            };
            let mut blocks = Vec::with_capacity(level.blocks.len());
            for ((b, x), bc) in level.blocks.iter().zip(&c.inputs).zip(&c.caches).rev() {
                let (dx, g) = block_backward(x, b, bc, &dh)?;
                dh = dx;
                blocks.push(g);
            }
            blocks.reverse();
            enc_grads.push((blocks, down));
        }
        enc_grads.reverse();

        let dstem_pre = relu_backward(&cache.stem_out, &dh)?;
        let (_, stem) = conv3d_backward(&cache.input, &self.stem, &dstem_pre)?;

        let mut out = Vec::new();
        out.push(stem);
        for (blocks, down) in enc_grads {
            for g in blocks {
                out.extend(g.grads().cloned());
            }
            out.extend(down);
        }
        for (ug, bg) in dec_grads {
            out.push(ug);
            out.extend(bg.grads().cloned());
        }
        out.push(head);
        Ok(Gradients(out))
    }
}

fn libm_sqrt(v: f64) -> f64 {
    num_traits::Float::sqrt(v)
}

struct Lookup<'a, T>(&'a [(String, Vec<usize>, Vec<T>)]);

impl<T> Lookup<'_, T> {
    fn dims(&self, name: &str) -> Result<&[usize]> {
        self.0
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, d, _)| d.as_slice())
            .ok_or_else(|| Error::InvalidConfig(format!("missing parameter {name}")))
    }
}

fn infer_config<T>(entries: &[(String, Vec<usize>, Vec<T>)], seed: u64) -> Result<NetworkConfig> {
    let find = Lookup(entries);
    let dim = |name: &str, axis: usize| -> Result<usize> {
        find.dims(name)?
            .get(axis)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("parameter {name} has too few dimensions")))
    };
    let base_filters = dim("stem.w", 0)?;
    let in_channels = dim("stem.w", 1)?;
    let num_classes = dim("head.w", 0)?;
    let mut repetitions = Vec::new();
    loop {
        let l = repetitions.len();
        let count = (0..)
            .take_while(|i| find.dims(&format!("enc.L{l}.block{i}.proj.w")).is_ok())
            .count();
        if count == 0 {
            break;
        }
        repetitions.push(count);
    }
    let c_b = dim("enc.L0.block0.stage1.axial.w", 0)?;
    let s2_in = dim("enc.L0.block0.stage2.axial.w", 1)?;
    let block_variant = if s2_in == 3 * c_b {
        BlockVariant::Hyperdense
    } else {
        BlockVariant::Baseline
    };
    if c_b == 0 || base_filters % c_b != 0 {
        return Err(Error::InvalidConfig(format!(
            "branch width {c_b} does not divide base width {base_filters}"
        )));
    }
    Ok(NetworkConfig {
        levels: repetitions.len(),
        base_filters,
        repetitions,
        block_variant,
        num_classes,
        in_channels,
        branch_divisor: base_filters / c_b,
        seed,
    })
}

#[derive(Debug, Clone)]
struct EncoderCache<T> {
    inputs: Vec<Tensor5<T>>,
    caches: Vec<BlockCache<T>>,
    /// Level output before the down transition; `None` at the deepest level.
    skip: Option<Tensor5<T>>,
}

#[derive(Debug, Clone)]
struct DecoderCache<T> {
    up: UpCache<T>,
    block_input: Tensor5<T>,
    block: BlockCache<T>,
}

/// Activations of one forward pass, bound to the parameter state that
/// produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    state_id: u64,
    input: Tensor5<T>,
    stem_out: Tensor5<T>,
    enc: Vec<EncoderCache<T>>,
    dec: Vec<DecoderCache<T>>,
    head_input: Tensor5<T>,
    probs: Tensor5<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn probs(&self) -> &Tensor5<T> {
        &self.probs
    }

    pub fn input_shape(&self) -> Shape5 {
        self.input.shape()
    }

    /// Sign pattern of every relu output, in a fixed order. Two forward
    /// passes with equal patterns took the same linear pieces.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut acts: Vec<&Tensor5<T>> = vec![&self.stem_out];
        for (l, e) in self.enc.iter().enumerate() {
            for c in &e.caches {
                acts.extend(c.relu_outputs());
            }
            if e.skip.is_some() {
                if let Some(next) = self.enc.get(l + 1).and_then(|n| n.inputs.first()) {
                    acts.push(next);
                }
            }
        }
        for d in &self.dec {
            acts.push(&d.up.projected);
            acts.extend(d.block.relu_outputs());
        }
        acts.iter()
            .flat_map(|t| t.data().iter().map(|&v| v > T::zero()))
            .collect()
    }
}
