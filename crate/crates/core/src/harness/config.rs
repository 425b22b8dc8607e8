use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentPolicy;
use crate::error::{Error, Result};
use crate::mdnn::{ModelConfig, TrainConfig};
use crate::spectrum::{default_library, MixtureLabel, SpectrumAxis, SubstanceProfile};
use crate::tf::TransformConfig;

/// Raw spectra to simulate for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: MixtureLabel,
    pub raw_count: usize,
}

/// Per-spectrum variation of the simulated acquisitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawVariation {
    /// Each mixture weight is scaled by `1 + u`, `u` uniform in `±weight_jitter`.
    pub weight_jitter: f64,
    /// Fluorescence amplitude relative to the strongest Raman line.
    pub fluorescence_amplitude: (f64, f64),
    /// Fluorescence sigma as a fraction of the axis span; must stay above 0.25.
    pub fluorescence_width_frac: (f64, f64),
    /// Acquisition SNR of the raw spectra.
    pub snr_db: (f64, f64),
}

impl Default for RawVariation {
    fn default() -> Self {
        RawVariation { weight_jitter: 0.2, fluorescence_amplitude: (0.2, 1.0), fluorescence_width_frac: (0.3, 1.0), snr_db: (30.0, 40.0) }
    }
}

/// Size and SNR range of an independently generated spectrum set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSet {
    pub size: usize,
    pub snr_db: (f64, f64),
}

impl Default for SpectrumSet {
    fn default() -> Self {
        SpectrumSet { size: 700, snr_db: (20.0, 30.0) }
    }
}

/// One experiment, end to end. Unknown keys are rejected.
///
/// The master `seed` drives every random stream; the `seed` fields inside
/// `augment` and `train` are overwritten by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub axis: SpectrumAxis,
    pub substances: Vec<SubstanceProfile>,
    /// Relative amount of each substance in a mixture, indexed by label bit.
    pub mixture_weights: Vec<f64>,
    pub classes: Vec<ClassSpec>,
    pub raw: RawVariation,
    pub transform: TransformConfig,
    pub target_per_class: usize,
    pub augment: AugmentPolicy,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_frac: f64,
    pub test_set: SpectrumSet,
    pub bench: SpectrumSet,
    pub threshold: f64,
    pub seed: u64,
}

/// Raw counts per class, in [`MixtureLabel::CLASSES`] order.
pub const DEFAULT_RAW_COUNTS: [usize; 7] = [35, 36, 28, 42, 28, 28, 28];

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            axis: SpectrumAxis::default(),
            substances: default_library(),
            mixture_weights: vec![2.0, 1.0, 1.0],
            classes: MixtureLabel::CLASSES
                .iter()
                .zip(DEFAULT_RAW_COUNTS)
                .map(|(&label, raw_count)| ClassSpec { label, raw_count })
                .collect(),
            raw: RawVariation::default(),
            transform: TransformConfig::default(),
            target_per_class: 360,
            augment: AugmentPolicy::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            train_frac: 0.8,
            test_set: SpectrumSet::default(),
            bench: SpectrumSet::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

fn config_err(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

fn check_range(field: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(config_err(field, format!("need finite low <= high, got ({lo}, {hi})")))
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Sets the master seed and propagates it into the nested sections.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.augment.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn substance_for_bit(&self, bit: usize) -> Option<&SubstanceProfile> {
        self.substances.iter().find(|s| s.bit == bit)
    }

    pub fn class_labels(&self) -> Vec<MixtureLabel> {
        self.classes.iter().map(|c| c.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.axis.validate().map_err(|e| config_err("axis", e))?;
        let mut bits = BTreeSet::new();
        for s in &self.substances {
            s.validate().map_err(|e| config_err("substances", e))?;
            if !bits.insert(s.bit) {
                return Err(config_err("substances", format!("label bit {} used twice", s.bit)));
            }
            if let Some(pk) = s.peaks.iter().find(|pk| !self.axis.contains(pk.center)) {
                return Err(config_err("substances", format!("`{}` has a peak at {} cm-1 outside the axis", s.name, pk.center)));
            }
        }
        if self.mixture_weights.len() != MixtureLabel::N_BITS {
            return Err(config_err("mixture_weights", format!("need {} entries", MixtureLabel::N_BITS)));
        }
        if self.mixture_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(config_err("mixture_weights", "weights must be positive"));
        }
        if self.classes.is_empty() {
            return Err(config_err("classes", "at least one class is required"));
        }
        let mut seen = BTreeSet::new();
        for c in &self.classes {
            if c.label.is_empty() {
                return Err(config_err("classes", "the empty label is not a class"));
            }
            if !seen.insert(c.label) {
                return Err(config_err("classes", format!("class {} listed twice", c.label)));
            }
            if c.raw_count == 0 {
                return Err(config_err("classes", format!("class {} needs at least one raw spectrum", c.label)));
            }
            for bit in 0..MixtureLabel::N_BITS {
                if c.label.is_set(bit) && self.substance_for_bit(bit).is_none() {
                    return Err(config_err("classes", format!("class {} references bit {bit}, which no substance owns", c.label)));
                }
            }
        }
        let max_raw = self.classes.iter().map(|c| c.raw_count).max().unwrap_or(0);
        if self.target_per_class < max_raw {
            return Err(config_err("target_per_class", format!("{} is below the largest raw count {max_raw}", self.target_per_class)));
        }
        if !(0.0..1.0).contains(&self.raw.weight_jitter) {
            return Err(config_err("raw.weight_jitter", "must lie in [0, 1)"));
        }
        check_range("raw.fluorescence_amplitude", self.raw.fluorescence_amplitude)?;
        if self.raw.fluorescence_amplitude.0 < 0.0 {
            return Err(config_err("raw.fluorescence_amplitude", "must be >= 0"));
        }
        check_range("raw.fluorescence_width_frac", self.raw.fluorescence_width_frac)?;
        if self.raw.fluorescence_width_frac.0 <= 0.25 {
            return Err(config_err("raw.fluorescence_width_frac", "lower bound must exceed 0.25 (wideband background)"));
        }
        check_range("raw.snr_db", self.raw.snr_db)?;
        check_range("test_set.snr_db", self.test_set.snr_db)?;
        check_range("bench.snr_db", self.bench.snr_db)?;
        self.augment.validate().map_err(|e| config_err("augment", e))?;
        self.model.validate().map_err(|e| config_err("model", e))?;
        self.train.validate().map_err(|e| config_err("train", e))?;
        if (self.transform.height, self.transform.width) != self.model.input_hw {
            return Err(config_err(
                "transform",
                format!(
                    "image size {}x{} differs from model input {}x{}",
                    self.transform.height, self.transform.width, self.model.input_hw.0, self.model.input_hw.1
                ),
            ));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(config_err("train_frac", "must lie strictly between 0 and 1"));
        }
        if !self.threshold.is_finite() {
            return Err(config_err("threshold", "must be finite"));
        }
        Ok(())
    }
}
