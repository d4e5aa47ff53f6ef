//! Time-decay scorer computed directly from a pair's raw history.
//!
//! Every action contributes `alpha[type] * day^2`, where `day` is the 1-based
//! offset of the action from `day_origin`, so recent actions dominate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::ActionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalScorerConfig {
    /// Weights indexed by action code: click, buy, collect, cart.
    pub alpha: [f64; 4],
    pub day_origin: u16,
}

impl Default for GlobalScorerConfig {
    fn default() -> Self {
        GlobalScorerConfig {
            alpha: [1.0, 4.0, 2.0, 3.0],
            day_origin: 0,
        }
    }
}

impl GlobalScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("global: alpha weights must be finite".into()));
        }
        Ok(())
    }

    fn combine(&self, sums: &[u64; 4]) -> f64 {
        self.alpha
            .iter()
            .zip(sums)
            .map(|(a, &s)| a * s as f64)
            .sum()
    }
}

/// Per-type sums of squared day offsets. Integer accumulation keeps the
/// score independent of record order.
fn accumulate(sums: &mut [u64; 4], r: &ActionRecord, origin: u16) {
    if let Some(d) = r.day().checked_sub(origin) {
        let day = u64::from(d) + 1;
        sums[r.action.index()] += day * day;
    }
}

/// Score of one pair history; records before `day_origin` are ignored.
pub fn global_score<'a>(
    history: impl IntoIterator<Item = &'a ActionRecord>,
    config: &GlobalScorerConfig,
) -> f64 {
    let mut sums = [0u64; 4];
    for r in history {
        accumulate(&mut sums, r, config.day_origin);
    }
    config.combine(&sums)
}

/// Squared-day sums for every pair active in `[origin, feature_end)`.
#[derive(Debug, Clone)]
pub struct PairHistoryIndex {
    pub day_origin: u16,
    pub feature_end: u16,
    sums: HashMap<(u64, u64), [u64; 4]>,
}

impl PairHistoryIndex {
    pub fn build(log: &[ActionRecord], day_origin: u16, feature_end: u16) -> Self {
        let mut sums: HashMap<(u64, u64), [u64; 4]> = HashMap::new();
        for r in log {
            let d = r.day();
            if d >= day_origin && d < feature_end {
                accumulate(sums.entry((r.user, r.brand)).or_default(), r, day_origin);
            }
        }
        PairHistoryIndex {
            day_origin,
            feature_end,
            sums,
        }
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalScorer {
    pub config: GlobalScorerConfig,
}

impl GlobalScorer {
    pub fn new(config: GlobalScorerConfig) -> Result<Self> {
        config.validate()?;
        Ok(GlobalScorer { config })
    }

    pub fn score(&self, index: &PairHistoryIndex, user: u64, brand: u64) -> Result<f64> {
        if index.day_origin != self.config.day_origin {
            return Err(Error::Schema(format!(
                "global scorer origin {} does not match history index origin {}",
                self.config.day_origin, index.day_origin
            )));
        }
        Ok(index
            .sums
            .get(&(user, brand))
            .map_or(0.0, |s| self.config.combine(s)))
    }
}
