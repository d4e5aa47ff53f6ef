use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Pair,
    User,
    Brand,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Pair, Granularity::User, Granularity::Brand];

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Pair => "pair",
            Granularity::User => "user",
            Granularity::Brand => "brand",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Granularity::ALL.into_iter().find(|g| g.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Count,
    Ratio,
    Flag,
    Global,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Count => "count",
            Family::Ratio => "ratio",
            Family::Flag => "flag",
            Family::Global => "global",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Family::Count, Family::Ratio, Family::Flag, Family::Global]
            .into_iter()
            .find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDesc {
    pub granularity: Granularity,
    pub family: Family,
    /// Base name without granularity or bucket, e.g. `click_count`.
    pub base: String,
    /// Bucket length in days; `None` for global features.
    pub bucket: Option<u16>,
}

impl FeatureDesc {
    /// Unique name, e.g. `pair_click_count_7d` or `user_active_span`.
    pub fn name(&self) -> String {
        match self.bucket {
            Some(k) => format!("{}_{}_{}d", self.granularity.name(), self.base, k),
            None => format!("{}_{}", self.granularity.name(), self.base),
        }
    }
}

/// Ordered feature descriptors; the order is the feature-vector order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDesc>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name() == name)
    }

    /// Short content hash of the sidecar text; models record it to detect
    /// mismatched feature layouts.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut features = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::parse(path, i + 1, m.to_string());
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad("expected 5 tab-separated columns"));
            }
            if cols[0].parse::<usize>().ok() != Some(features.len()) {
                return Err(bad("feature index out of order"));
            }
            let granularity = Granularity::parse(cols[1]).ok_or_else(|| bad("bad granularity"))?;
            let family = Family::parse(cols[2]).ok_or_else(|| bad("bad family"))?;
            let bucket = match cols[4] {
                "GLOBAL" => None,
                k => Some(k.parse::<u16>().map_err(|_| bad("bad bucket"))?),
            };
            let prefix = format!("{}_", granularity.name());
            let mut base = cols[3]
                .strip_prefix(&prefix)
                .ok_or_else(|| bad("name lacks granularity prefix"))?
                .to_string();
            if let Some(k) = bucket {
                let suffix = format!("_{k}d");
                base = base
                    .strip_suffix(&suffix)
                    .ok_or_else(|| bad("name lacks bucket suffix"))?
                    .to_string();
            }
            features.push(FeatureDesc {
                granularity,
                family,
                base,
                bucket,
            });
        }
        Ok(FeatureSchema { features })
    }
}

/// Sidecar layout: `index<TAB>granularity<TAB>family<TAB>name<TAB>bucket`.
impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.features.iter().enumerate() {
            let bucket = d.bucket.map_or("GLOBAL".to_string(), |k| k.to_string());
            writeln!(
                f,
                "{i}\t{}\t{}\t{}\t{bucket}",
                d.granularity.name(),
                d.family.name(),
                d.name()
            )?;
        }
        Ok(())
    }
}
