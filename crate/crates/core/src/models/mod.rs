//! Individual models behind one scoring interface, the (model, scheme)
//! registry, and the on-disk model container.
//!
//! A model file is a single JSON object:
//!
//! ```text
//! {"format": "tmpp-model", "version": 1, "name": "gbrt_fixed",
//!  "kind": "gbrt", "scheme": "fixed", "schema_hash": "<16 hex>",
//!  "model": {"gbrt": {...parameters...}}}
//! ```
//!
//! `scheme` is `null` for the global scorer. Floats are written with
//! shortest round-trip formatting, so a reloaded model scores bit-identically.

pub mod gbrt;
pub mod global;
pub mod lr;
pub mod rf;
pub mod tree;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gbrt::{GbrtConfig, GbrtModel, RegressionTarget};
pub use global::{global_score, GlobalScorer, GlobalScorerConfig, PairHistoryIndex};
pub use lr::{LrConfig, LrModel};
pub use rf::{RfConfig, RfModel};

use crate::error::{Error, Result};
use crate::instances::{Instance, Scheme};

pub const MODEL_FORMAT: &str = "tmpp-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Gbrt,
    Rf,
    Global,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Gbrt => "gbrt",
            ModelKind::Rf => "rf",
            ModelKind::Global => "global",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(ModelKind::Lr),
            "gbrt" => Ok(ModelKind::Gbrt),
            "rf" => Ok(ModelKind::Rf),
            "global" => Ok(ModelKind::Global),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub name: &'static str,
    pub kind: ModelKind,
    /// `None` for the global scorer, which reads raw history instead of
    /// training instances.
    pub scheme: Option<Scheme>,
}

/// Every trainable (model, scheme) combination, in score-matrix column order.
pub const REGISTRY: [ModelSpec; 6] = [
    ModelSpec { name: "lr_fixed", kind: ModelKind::Lr, scheme: Some(Scheme::Fixed) },
    ModelSpec { name: "gbrt_fixed", kind: ModelKind::Gbrt, scheme: Some(Scheme::Fixed) },
    ModelSpec { name: "gbrt_sliding", kind: ModelKind::Gbrt, scheme: Some(Scheme::Sliding) },
    ModelSpec { name: "rf_fixed", kind: ModelKind::Rf, scheme: Some(Scheme::Fixed) },
    ModelSpec { name: "rf_sliding", kind: ModelKind::Rf, scheme: Some(Scheme::Sliding) },
    ModelSpec { name: "global", kind: ModelKind::Global, scheme: None },
];

/// The registry entry for a (model, scheme) request. The global scorer
/// accepts any scheme argument since it has no training set.
pub fn lookup(kind: ModelKind, scheme: Option<Scheme>) -> Result<ModelSpec> {
    REGISTRY
        .iter()
        .find(|s| s.kind == kind && (kind == ModelKind::Global || s.scheme == scheme))
        .copied()
        .ok_or_else(|| {
            Error::Config(format!(
                "model {} is not trained under the {} scheme",
                kind.name(),
                scheme.map_or("(none)", Scheme::name)
            ))
        })
}

pub fn spec_by_name(name: &str) -> Result<ModelSpec> {
    REGISTRY
        .iter()
        .find(|s| s.name == name)
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown model name {name:?}")))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfigs {
    pub lr: LrConfig,
    pub gbrt: GbrtConfig,
    pub rf: RfConfig,
    pub global: GlobalScorerConfig,
}

impl ModelConfigs {
    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        self.gbrt.validate()?;
        self.rf.validate()?;
        self.global.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Lr(LrModel),
    Gbrt(GbrtModel),
    Rf(RfModel),
    Global(GlobalScorer),
}

fn labelled<'a>(instances: &[&'a Instance]) -> Result<(Vec<&'a [f32]>, Vec<u8>, Vec<u32>)> {
    let mut rows = Vec::with_capacity(instances.len());
    let mut labels = Vec::with_capacity(instances.len());
    let mut counts = Vec::with_capacity(instances.len());
    for inst in instances {
        let t = inst.target.ok_or_else(|| {
            Error::Training(format!(
                "instance ({}, {}) at end {} has no target",
                inst.user, inst.brand, inst.feature_end
            ))
        })?;
        rows.push(inst.features.as_slice());
        labels.push(t.label);
        counts.push(t.buy_count);
    }
    Ok((rows, labels, counts))
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Lr(_) => ModelKind::Lr,
            Model::Gbrt(_) => ModelKind::Gbrt,
            Model::Rf(_) => ModelKind::Rf,
            Model::Global(_) => ModelKind::Global,
        }
    }

    pub fn fit(kind: ModelKind, instances: &[&Instance], configs: &ModelConfigs) -> Result<Model> {
        if kind == ModelKind::Global {
            return GlobalScorer::new(configs.global.clone()).map(Model::Global);
        }
        let (rows, labels, counts) = labelled(instances)?;
        Ok(match kind {
            ModelKind::Lr => Model::Lr(LrModel::fit(&rows, &labels, &configs.lr)?),
            ModelKind::Gbrt => {
                let targets: Vec<f64> = match configs.gbrt.target {
                    RegressionTarget::Label => labels.iter().map(|&l| f64::from(l)).collect(),
                    RegressionTarget::BuyCount => counts.iter().map(|&c| f64::from(c)).collect(),
                };
                Model::Gbrt(GbrtModel::fit(&rows, &targets, &configs.gbrt)?)
            }
            ModelKind::Rf => Model::Rf(RfModel::fit(&rows, &labels, &configs.rf)?),
            ModelKind::Global => unreachable!(),
        })
    }

    /// Larger means more likely to buy. The global scorer needs a history
    /// index built for the instance's feature-span end.
    pub fn score(&self, inst: &Instance, history: Option<&PairHistoryIndex>) -> Result<f64> {
        match self {
            Model::Lr(m) => Ok(m.score(&inst.features)),
            Model::Gbrt(m) => Ok(m.score(&inst.features)),
            Model::Rf(m) => Ok(m.score(&inst.features)),
            Model::Global(g) => {
                let index = history.ok_or_else(|| {
                    Error::Schema("global scorer needs the raw pair history".into())
                })?;
                if index.feature_end != inst.feature_end {
                    return Err(Error::Schema(format!(
                        "history index ends at day {} but instance ends at day {}",
                        index.feature_end, inst.feature_end
                    )));
                }
                g.score(index, inst.user, inst.brand)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub kind: ModelKind,
    pub scheme: Option<Scheme>,
    pub schema_hash: String,
    pub model: Model,
}

impl ModelFile {
    pub fn new(spec: ModelSpec, schema_hash: impl Into<String>, model: Model) -> Result<Self> {
        if model.kind() != spec.kind {
            return Err(Error::Config(format!(
                "{} model stored under registry entry {}",
                model.kind().name(),
                spec.name
            )));
        }
        Ok(ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            name: spec.name.into(),
            kind: spec.kind,
            scheme: spec.scheme,
            schema_hash: schema_hash.into(),
            model,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model container {} v{}; expected {MODEL_FORMAT} v{MODEL_VERSION}",
                self.format, self.version
            )));
        }
        let spec = spec_by_name(&self.name)?;
        if spec.kind != self.kind || spec.scheme != self.scheme || self.model.kind() != self.kind {
            return Err(Error::Schema(format!(
                "model file {} disagrees with its registry entry",
                self.name
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, self).map_err(|e| Error::Serde(e.to_string()))?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: ModelFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        parsed.check()?;
        Ok(parsed)
    }
}
