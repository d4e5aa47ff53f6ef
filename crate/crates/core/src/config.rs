//! Run configuration: every knob of a pipeline run in one TOML document.
//!
//! ```toml
//! seed = 7
//! shards = 4
//!
//! [paths]
//! log = "log.tsv"
//! workdir = "work"
//!
//! [generate]
//! n_users = 100000
//! n_brands = 200
//!
//! [spans]
//! fixed_end = 67
//! sliding_ends = [47, 67]
//!
//! [models.gbrt]
//! n_trees = 50
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every random seed is derived from `seed` through a labeled
//! substream, so the `seed` fields inside `[generate]` and `[models.rf]` are
//! overwritten.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::GenConfig;
use crate::ensemble::{default_groups, BlendConfig, DecisionGrid, ModelGroup};
use crate::error::{Error, Result};
use crate::features::DateBucketSet;
use crate::instances::{Scheme, TimeSpanConfig};
use crate::models::{LrConfig, ModelConfigs, ModelSpec, REGISTRY};
use crate::preprocess::{SplitSpec, DEFAULT_CLICK_THRESHOLD};
use crate::shard::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub log: PathBuf,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            log: "log.tsv".into(),
            workdir: "work".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    /// Users with more clicks than this and no buys are dropped.
    pub click_threshold: u64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            click_threshold: DEFAULT_CLICK_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanSettings {
    pub window_start: u16,
    /// Feature-span end of the fixed scheme.
    pub fixed_end: u16,
    /// Feature-span ends of the sliding scheme.
    pub sliding_ends: Vec<u16>,
}

impl Default for SpanSettings {
    fn default() -> Self {
        SpanSettings {
            window_start: 0,
            fixed_end: 67,
            sliding_ends: vec![47, 67],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendSettings {
    pub lr: LrConfig,
    pub compress: bool,
    pub groups: Vec<ModelGroup>,
}

impl Default for BlendSettings {
    fn default() -> Self {
        let c = BlendConfig::default();
        BlendSettings {
            lr: c.lr,
            compress: c.compress,
            groups: default_groups(),
        }
    }
}

impl BlendSettings {
    pub fn config(&self) -> BlendConfig {
        BlendConfig {
            lr: self.lr.clone(),
            compress: self.compress,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub shards: usize,
    pub paths: Paths,
    pub generate: GenConfig,
    pub clean: CleanConfig,
    pub split: SplitSpec,
    pub spans: SpanSettings,
    pub features: DateBucketSet,
    pub models: ModelConfigs,
    pub blend: BlendSettings,
    pub decision: DecisionGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            shards: 4,
            paths: Paths::default(),
            generate: GenConfig::default(),
            clean: CleanConfig::default(),
            split: SplitSpec::local(),
            spans: SpanSettings::default(),
            features: DateBucketSet::default(),
            models: ModelConfigs::default(),
            blend: BlendSettings::default(),
            decision: DecisionGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.log, &mut cfg.paths.workdir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shards == 0 {
            return Err(Error::Config("shards must be positive".into()));
        }
        self.generate.validate()?;
        self.split.validate()?;
        self.fixed_spans().validate()?;
        self.sliding_spans().validate()?;
        self.features.validate()?;
        self.models.validate()?;
        self.decision.validate()?;
        let names: Vec<String> = REGISTRY.iter().map(|s| s.name.to_string()).collect();
        crate::ensemble::validate_groups(&self.blend.groups, &names)?;
        self.blend.lr.validate()
    }

    pub fn window_end(&self) -> u16 {
        self.split.visible_end()
    }

    pub fn fixed_spans(&self) -> TimeSpanConfig {
        TimeSpanConfig::fixed(self.spans.fixed_end, self.spans.window_start, self.window_end())
    }

    pub fn sliding_spans(&self) -> TimeSpanConfig {
        TimeSpanConfig::sliding(
            self.spans.sliding_ends.clone(),
            self.spans.window_start,
            self.window_end(),
        )
    }

    pub fn spans_for(&self, scheme: Scheme) -> TimeSpanConfig {
        match scheme {
            Scheme::Fixed => self.fixed_spans(),
            Scheme::Sliding => self.sliding_spans(),
        }
    }

    /// Every training feature-span end, ascending.
    pub fn training_ends(&self) -> Vec<u16> {
        let mut ends = self.spans.sliding_ends.clone();
        ends.push(self.spans.fixed_end);
        ends.sort_unstable();
        ends.dedup();
        ends
    }

    /// Feature-span end of the prediction instances.
    pub fn prediction_end(&self) -> u16 {
        self.window_end()
    }

    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    pub fn generator(&self) -> GenConfig {
        GenConfig {
            seed: self.seed_for("generate"),
            ..self.generate.clone()
        }
    }

    /// Model configs with the random-forest seed drawn for `spec`.
    pub fn models_for(&self, spec: &ModelSpec) -> ModelConfigs {
        let mut m = self.models.clone();
        m.rf.seed = self.seed_for(spec.name);
        m
    }
}

/// First 16 hex digits of the SHA-256 of a value's JSON form.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config values serialize");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
