//! JSON run configuration for `hinet train`.

use std::fs;
use std::path::{Path, PathBuf};

use hinet_core::blocks::BlockVariant;
use hinet_core::data::CLASS_CODES;
use hinet_core::loss::{DiceConfig, DiceForm};
use hinet_core::network::NetworkConfig;
use hinet_core::optim::LrSchedule;
use serde::{Deserialize, Serialize};

use crate::error::{HinetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Hyperdense,
    Baseline,
}

impl From<Variant> for BlockVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Hyperdense => BlockVariant::Hyperdense,
            Variant::Baseline => BlockVariant::Baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiceClasses {
    /// Background included.
    All,
    Foreground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiceFormName {
    Outer,
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// `count` synthetic phantoms of side `extent`, seeded
    /// `first_seed, first_seed + 1, ..`.
    Phantom {
        count: usize,
        #[serde(default)]
        first_seed: u64,
    },
    /// Every `.hvol` volume in a directory, center-cropped to `extent`.
    Hvol { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: u64,
    pub steps_per_epoch: usize,
    pub data: DataSource,
    /// Cubic side of every training volume.
    pub extent: usize,
    pub output_dir: PathBuf,
    pub levels: usize,
    pub base_filters: usize,
    /// Encoder blocks per level; derived from `levels` when absent.
    pub repetitions: Option<Vec<usize>>,
    pub block_variant: Variant,
    pub branch_divisor: usize,
    pub dice_r: f64,
    pub dice_classes: DiceClasses,
    pub dice_form: DiceFormName,
    pub lr0: f64,
    pub lr_factor: f64,
    pub lr_period: u64,
    pub augment: bool,
    /// Train in f64 instead of f32.
    pub check64: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lr = LrSchedule::default();
        RunConfig {
            seed: 0,
            epochs: 30,
            steps_per_epoch: 10,
            data: DataSource::Phantom {
                count: 1,
                first_seed: 0,
            },
            extent: 32,
            output_dir: PathBuf::from("hinet-run"),
            levels: 4,
            base_filters: 4,
            repetitions: None,
            block_variant: Variant::Hyperdense,
            branch_divisor: 2,
            dice_r: 1.0,
            dice_classes: DiceClasses::All,
            dice_form: DiceFormName::Outer,
            lr0: lr.lr0,
            lr_factor: lr.factor,
            lr_period: lr.period,
            augment: true,
            check64: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HinetError::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| HinetError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Network configuration for `in_channels` input modalities.
    pub fn network(&self, in_channels: usize) -> NetworkConfig {
        NetworkConfig {
            levels: self.levels,
            base_filters: self.base_filters,
            repetitions: self
                .repetitions
                .clone()
                .unwrap_or_else(|| NetworkConfig::default_repetitions(self.levels)),
            block_variant: self.block_variant.into(),
            num_classes: CLASS_CODES.len(),
            in_channels,
            branch_divisor: self.branch_divisor,
            seed: self.seed,
        }
    }

    pub fn dice(&self) -> DiceConfig {
        let mut cfg = match self.dice_classes {
            DiceClasses::All => DiceConfig::all_classes(CLASS_CODES.len(), self.dice_r),
            DiceClasses::Foreground => DiceConfig::foreground(CLASS_CODES.len(), self.dice_r),
        };
        cfg.form = match self.dice_form {
            DiceFormName::Outer => DiceForm::Outer,
            DiceFormName::Conventional => DiceForm::Conventional,
        };
        cfg
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr0: self.lr0,
            factor: self.lr_factor,
            period: self.lr_period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HinetError::Config(m));
        self.network(4)
            .validate()
            .map_err(|e| HinetError::Config(e.to_string()))?;
        let divisor = 1usize << (self.levels - 1);
        if self.extent == 0 || !self.extent.is_multiple_of(divisor) {
            return bad(format!(
                "extent {} must be a positive multiple of {divisor} for {} levels",
                self.extent, self.levels
            ));
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be positive".into());
        }
        if !(self.dice_r > 0.0 && self.dice_r.is_finite()) {
            return bad(format!("dice_r must be positive, got {}", self.dice_r));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad(format!(
                "invalid schedule lr0={} lr_factor={}",
                self.lr0, self.lr_factor
            ));
        }
        if self.lr_period == 0 {
            return bad("lr_period must be positive".into());
        }
        if let DataSource::Phantom { count: 0, .. } = self.data {
            return bad("phantom count must be positive".into());
        }
        Ok(())
    }
}
