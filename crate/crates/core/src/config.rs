//! Run configuration: every tunable of the pipeline, grouped by stage.
//!
//! The file format is TOML. Unknown keys are rejected and a missing section
//! takes its defaults. `schema_version` must equal [`SCHEMA_VERSION`].
//!
//! All randomness derives from the single top-level `seed`:
//! each consumer uses [`derive_seed`] with its own stream constant
//! ([`SeedStream`]), so changing one consumer never perturbs another.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binarize::{DEFAULT_DYN_RANGE_DB, DEFAULT_GAMMA_COEFFICIENT};
use crate::classifier::{ForestParams, ForestSettings};
use crate::detector::PulseRules;
use crate::dsp::{FilterSpec, StftParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("config schema version {found} not supported (expected {SCHEMA_VERSION})")]
    Version { found: u32 },
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub channel: usize,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            window_s: 30.0,
            hop_s: 15.0,
            channel: 0,
        }
    }
}

/// Frequency band kept after the spectrogram is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropBand {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Default for CropBand {
    fn default() -> Self {
        Self {
            lo_hz: 75.0,
            hi_hz: 350.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinarizeConfig {
    pub gamma_coefficient: f64,
    pub dyn_range_db: f64,
}

impl Default for BinarizeConfig {
    fn default() -> Self {
        Self {
            gamma_coefficient: DEFAULT_GAMMA_COEFFICIENT,
            dyn_range_db: DEFAULT_DYN_RANGE_DB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Duration of the window centered on each peak that counts as the pulse.
    pub pulse_extent_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            pulse_extent_s: 0.05,
        }
    }
}

/// Everything the per-slice detection and feature stages need.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub audio: AudioConfig,
    pub filter: FilterSpec,
    pub stft: StftParams,
    pub crop: CropBand,
    pub binarize: BinarizeConfig,
    pub detector: PulseRules,
    pub features: FeatureConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub decision_threshold: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            decision_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub train_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.66,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Worker threads; 0 picks the number of CPUs.
    pub threads: usize,
    pub audio: AudioConfig,
    pub filter: FilterSpec,
    pub stft: StftParams,
    pub crop: CropBand,
    pub binarize: BinarizeConfig,
    pub detector: PulseRules,
    pub features: FeatureConfig,
    pub forest: ForestSettings,
    pub classify: ClassifyConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            threads: 0,
            audio: AudioConfig::default(),
            filter: FilterSpec::default(),
            stft: StftParams::default(),
            crop: CropBand::default(),
            binarize: BinarizeConfig::default(),
            detector: PulseRules::default(),
            features: FeatureConfig::default(),
            forest: ForestSettings::default(),
            classify: ClassifyConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Schema(e.message().to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version {
                found: cfg.schema_version,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            audio: self.audio,
            filter: self.filter,
            stft: self.stft,
            crop: self.crop,
            binarize: self.binarize,
            detector: self.detector,
            features: self.features,
        }
    }

    /// Forest hyperparameters with the seed derived from the run seed.
    pub fn forest_params(&self) -> ForestParams {
        self.forest.with_seed(derive_seed(self.seed, SeedStream::Forest))
    }

    /// Checks what can be checked without knowing the sample rate.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let a = &self.audio;
        if !(a.hop_s > 0.0 && a.hop_s <= a.window_s && a.window_s.is_finite()) {
            return invalid(format!("need 0 < hop_s <= window_s, got {} / {}", a.hop_s, a.window_s));
        }
        if !(self.crop.lo_hz >= 0.0 && self.crop.lo_hz < self.crop.hi_hz) {
            return invalid("crop band must satisfy 0 <= lo_hz < hi_hz".into());
        }
        if !(self.binarize.dyn_range_db > 0.0 && self.binarize.gamma_coefficient.is_finite()) {
            return invalid("dyn_range_db must be > 0 and gamma_coefficient finite".into());
        }
        if !(self.features.pulse_extent_s > 0.0) {
            return invalid("pulse_extent_s must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.classify.decision_threshold) {
            return invalid("decision_threshold must be in [0, 1]".into());
        }
        if !(self.eval.train_fraction > 0.0 && self.eval.train_fraction < 1.0) {
            return invalid("train_fraction must be in (0, 1)".into());
        }
        self.stft
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.detector
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.forest_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Forest = 1,
    Split = 2,
    Synth = 3,
}

/// SplitMix64 finalizer over `seed` and the stream constant.
pub fn derive_seed(seed: u64, stream: SeedStream) -> u64 {
    splitmix64(seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.audio.window_s, 30.0);
        assert_eq!(c.binarize.gamma_coefficient, 1.75);
        assert_eq!(c.detector.threshold, 6.0);
        assert_eq!(c.stft.nfft, 512);
        assert_eq!(c.forest.n_trees, 10);
        assert_eq!(c.forest.n_split_features, 5);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = RunConfig::from_toml_str("schema_version = 1\n[detector]\nthreshold = 8\n").unwrap();
        assert_eq!(c.detector.threshold, 8.0);
        assert_eq!(c.detector.min_peaks, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("schema_version = 1\n[detector]\nthreshhold = 8\n").unwrap_err();
        assert!(matches!(err, ConfigError::Schema(_)), "{err}");
        let err = RunConfig::from_toml_str("bogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Schema(_)));
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("schema_version = 7\n"),
            Err(ConfigError::Version { found: 7 })
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_str("[audio]\nhop_s = 40\n").is_err());
        assert!(RunConfig::from_toml_str("[stft]\nnfft = 500\n").is_err());
    }

    #[test]
    fn seed_streams_differ() {
        let a = derive_seed(42, SeedStream::Forest);
        let b = derive_seed(42, SeedStream::Split);
        let c = derive_seed(42, SeedStream::Synth);
        assert!(a != b && b != c && a != c);
        assert_eq!(a, derive_seed(42, SeedStream::Forest));
    }
}
