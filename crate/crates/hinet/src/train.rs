//! The training loop behind `hinet train`.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use hinet_core::data::{augment, center_crop, make_phantom, one_hot, VolumeSample};
use hinet_core::loss::{dice_loss, dice_loss_grad};
use hinet_core::network::Network;
use hinet_core::optim::{adam_step, AdamState};
use hinet_core::rng::SplitMix64;
use hinet_core::Scalar;

use crate::checkpoint;
use crate::config::{DataSource, RunConfig};
use crate::error::{HinetError, Result};
use crate::hvol;

pub const CHECKPOINT_FILE: &str = "checkpoint.hint";
pub const LOG_FILE: &str = "loss.csv";

const SAMPLE_STREAM: u64 = 0x5a4d_504c;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: u64,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<LogRow>,
    pub checkpoint: PathBuf,
    pub log_file: PathBuf,
}

/// Training volumes named by the config, all cubes of side `cfg.extent`.
pub fn load_samples(cfg: &RunConfig) -> Result<Vec<VolumeSample>> {
    let e = cfg.extent;
    let samples = match &cfg.data {
        DataSource::Phantom { count, first_seed } => (0..*count as u64)
            .map(|i| make_phantom(first_seed.wrapping_add(i), e).map_err(HinetError::from))
            .collect::<Result<Vec<_>>>()?,
        DataSource::Hvol { dir } => {
            let paths = hvol::list_volumes(dir)?;
            if paths.is_empty() {
                return Err(HinetError::Config(format!("no .hvol volumes in {}", dir.display())));
            }
            paths
                .iter()
                .map(|p| Ok(center_crop(&hvol::read_volume(p)?, [e, e, e])?))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let c = samples[0].image.shape().c;
    if c == 0 || samples.iter().any(|s| s.image.shape().c != c) {
        return Err(HinetError::Config(
            "training volumes need the same positive number of modalities".into(),
        ));
    }
    Ok(samples)
}

pub fn format_log(log: &[LogRow]) -> String {
    let mut out = String::from("epoch,step,loss,lr\n");
    for r in log {
        writeln!(out, "{},{},{:e},{:e}", r.epoch, r.step, r.loss, r.lr).unwrap();
    }
    out
}

/// Run `cfg` to completion in precision `T`, writing the final checkpoint
/// and the loss log into `cfg.output_dir`. A non-finite loss stops the run
/// after writing the log so far.
pub fn train<T: Scalar>(cfg: &RunConfig, mut progress: impl FnMut(&LogRow)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = load_samples(cfg)?;
    let mut net = Network::<T>::build(&cfg.network(samples[0].image.shape().c))?;
    let dice = cfg.dice();
    let schedule = cfg.schedule();
    let mut adam = AdamState::for_network(&net, schedule.lr_at(0));
    let mut order = SplitMix64::derive(cfg.seed, SAMPLE_STREAM);

    fs::create_dir_all(&cfg.output_dir).map_err(|e| HinetError::io(&cfg.output_dir, e))?;
    let checkpoint = cfg.output_dir.join(CHECKPOINT_FILE);
    let log_file = cfg.output_dir.join(LOG_FILE);
    let mut log = Vec::with_capacity(cfg.epochs as usize * cfg.steps_per_epoch);
    let write_log = |log: &[LogRow]| fs::write(&log_file, format_log(log)).map_err(|e| HinetError::io(&log_file, e));

    for epoch in 0..cfg.epochs {
        adam.lr = schedule.lr_at(epoch);
        for step in 0..cfg.steps_per_epoch {
            let idx = order.below(samples.len() as u64) as usize;
            let aug_seed = order.next_u64();
            let drawn;
            let sample = if cfg.augment {
                drawn = augment(&samples[idx], aug_seed);
                &drawn
            } else {
                &samples[idx]
            };
            let target = one_hot::<T>(&sample.labels);
            let (probs, cache) = net.forward(&sample.image.cast())?;
            let loss = if probs.is_finite() {
                dice_loss(&probs, &target, &dice)?
            } else {
                f64::NAN
            };
            if !loss.is_finite() {
                write_log(&log)?;
                return Err(HinetError::NonFiniteLoss { epoch, step, loss });
            }
            let dprobs = dice_loss_grad(&probs, &target, &dice)?;
            let grads = net.backward(&cache, &dprobs)?;
            adam_step(&mut net, &grads, &mut adam)?;
            let row = LogRow {
                epoch,
                step,
                loss,
                lr: adam.lr,
            };
            progress(&row);
            log.push(row);
        }
    }
    checkpoint::save(&checkpoint, &net)?;
    write_log(&log)?;
    Ok(TrainOutcome {
        log,
        checkpoint,
        log_file,
    })
}
