//! The unified run configuration read by the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::probes::{FeatureSource, Pooling, ProbeKind, ProbeOptions, ProbeSpec, Target};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub synth: SynthConfig,
    /// PCM16 mono files to cut into windows instead of synthesizing.
    /// Their windows carry no attribute labels (all zero).
    pub wav: Vec<PathBuf>,
    /// Hop between WAV windows in samples (0: the window length).
    pub wav_hop: usize,
    pub split_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { synth: SynthConfig::default(), wav: Vec::new(), wav_hop: 0, split_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub specs: Vec<ProbeSpec>,
    pub options: ProbeOptions,
    /// Cap on the windows used for probing, taken proportionally from the
    /// train/val/test splits.
    pub max_windows: Option<usize>,
    pub seed: u64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self { specs: default_probe_specs(), options: ProbeOptions::default(), max_windows: None, seed: 0 }
    }
}

/// Every context source against every target with a linear probe, the
/// hidden-layer probe on the combined context, utterance pooling for the
/// long-term targets, and Δ-modulated contexts for the long-term targets.
pub fn default_probe_specs() -> Vec<ProbeSpec> {
    let spec = |source, target, kind, pooling, quantized| ProbeSpec { source, target, kind, pooling, quantized };
    let mut v = Vec::new();
    for source in [FeatureSource::Cs, FeatureSource::Cl, FeatureSource::CsCl] {
        for target in [Target::LongAttr, Target::LongAttr2, Target::ShortAttr] {
            v.push(spec(source, target, ProbeKind::Linear, Pooling::PerFrame, false));
        }
    }
    v.push(spec(FeatureSource::CsCl, Target::ShortAttr, ProbeKind::Mlp, Pooling::PerFrame, false));
    for source in [FeatureSource::Cs, FeatureSource::Cl] {
        for target in [Target::LongAttr, Target::LongAttr2] {
            v.push(spec(source, target, ProbeKind::Linear, Pooling::MeanUtterance, false));
        }
    }
    for source in [FeatureSource::Cs, FeatureSource::Cl] {
        for target in [Target::LongAttr, Target::LongAttr2] {
            v.push(spec(source, target, ProbeKind::Linear, Pooling::PerFrame, true));
        }
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerConfig {
    /// Context sources to Δ-modulate (`c_s`, `c_l`).
    pub sources: Vec<FeatureSource>,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { sources: vec![FeatureSource::Cs, FeatureSource::Cl] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub probes: ProbeSection,
    pub quantizer: QuantizerConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            probes: ProbeSection::default(),
            quantizer: QuantizerConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) if !msg.starts_with(section) => Error::Config(format!("{section}.{msg}")),
        other => other,
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate().map_err(|e| prefixed("train", e))?;
        if self.dataset.wav.is_empty() {
            self.dataset.synth.validate()?;
            if self.dataset.synth.window_len != self.model.window_len {
                return Err(Error::config(format!(
                    "dataset.synth.window_len ({}) differs from model.window_len ({})",
                    self.dataset.synth.window_len, self.model.window_len
                )));
            }
        }
        for p in &self.dataset.wav {
            if !p.is_file() {
                return Err(Error::config(format!("dataset.wav: {} does not exist", p.display())));
            }
        }
        for s in &self.probes.specs {
            s.validate()?;
            if !self.model.is_cognitive() && s.source != FeatureSource::Cs && s.source != FeatureSource::Zs {
                return Err(Error::config(format!("probes.specs: source {} needs the cognitive variant", s.source)));
            }
        }
        if self.probes.options.hidden == 0 || self.probes.options.max_epochs == 0 {
            return Err(Error::config("probes.options.hidden and probes.options.max_epochs must be >= 1"));
        }
        if !(self.probes.options.learning_rate > 0.0) {
            return Err(Error::config("probes.options.learning_rate must be > 0"));
        }
        for s in &self.quantizer.sources {
            if !matches!(s, FeatureSource::Cs | FeatureSource::Cl) {
                return Err(Error::config(format!("quantizer.sources: {s} is not a context source")));
            }
        }
        Ok(())
    }

    /// Parses and validates a JSON document; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
