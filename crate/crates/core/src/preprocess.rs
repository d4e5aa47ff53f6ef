//! Crawler cleansing and month-based splitting for local validation.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::{ActionRecord, ActionType, Month};
use crate::shard;
use crate::submission::AnswerSet;

pub const DEFAULT_CLICK_THRESHOLD: u64 = 500;

/// Removes every record of users with more than `click_threshold` clicks and
/// no buys over the whole log. Returns the kept records in input order and the
/// removed user ids ascending.
pub fn cleanse(
    log: &[ActionRecord],
    click_threshold: u64,
    shards: usize,
) -> (Vec<ActionRecord>, Vec<u64>) {
    // pass 1: per-user click/buy counts, one map per user-hash shard
    let parts = shard::partition_by_user(log, shards, |r| r.user);
    let per_shard: Vec<Vec<u64>> = shard::map_shards(parts, |_, records| {
        let mut counts: HashMap<u64, (u64, u64)> = HashMap::new();
        for r in records {
            let c = counts.entry(r.user).or_default();
            match r.action {
                ActionType::Click => c.0 += 1,
                ActionType::Buy => c.1 += 1,
                _ => {}
            }
        }
        counts
            .into_iter()
            .filter(|&(_, (clicks, buys))| clicks > click_threshold && buys == 0)
            .map(|(u, _)| u)
            .collect()
    });
    let removed: BTreeSet<u64> = per_shard.into_iter().flatten().collect();

    // pass 2: filter
    let kept = log
        .iter()
        .filter(|r| !removed.contains(&r.user))
        .copied()
        .collect();
    (kept, removed.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub feature_months: Vec<Month>,
    pub answer_month: Month,
}

impl SplitSpec {
    /// April to June visible, July as the answer month.
    pub fn local() -> Self {
        SplitSpec {
            feature_months: vec![Month::April, Month::May, Month::June],
            answer_month: Month::July,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut months = self.feature_months.clone();
        months.sort();
        months.dedup();
        if months.is_empty() {
            return Err(Error::Config("split: no feature months".into()));
        }
        if months.len() != self.feature_months.len() {
            return Err(Error::Config("split: duplicate feature month".into()));
        }
        if months.windows(2).any(|w| w[0].next() != Some(w[1])) {
            return Err(Error::Config("split: feature months must be contiguous".into()));
        }
        if months.contains(&self.answer_month) {
            return Err(Error::Config(
                "split: answer month overlaps the feature months".into(),
            ));
        }
        if months.last().and_then(|m| m.next()) != Some(self.answer_month) {
            return Err(Error::Config(
                "split: answer month must directly follow the feature months".into(),
            ));
        }
        Ok(())
    }

    /// First visible day.
    pub fn visible_start(&self) -> u16 {
        self.feature_months.iter().map(|m| m.first_day()).min().unwrap_or(0)
    }

    /// Exclusive end of the visible data.
    pub fn visible_end(&self) -> u16 {
        self.feature_months.iter().map(|m| m.end()).max().unwrap_or(0)
    }

    /// The answer month as a half-open day range.
    pub fn target_span(&self) -> (u16, u16) {
        (self.answer_month.first_day(), self.answer_month.end())
    }
}

pub struct Split {
    pub visible: Vec<ActionRecord>,
    pub answer: AnswerSet,
    /// Raw Buy records of the answer month, for hit-day analysis.
    pub answer_buys: Vec<ActionRecord>,
}

pub fn split(log: &[ActionRecord], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let feature: HashSet<Month> = spec.feature_months.iter().copied().collect();
    let mut visible = Vec::new();
    let mut answer_buys = Vec::new();
    for r in log {
        let m = r.day.month();
        if feature.contains(&m) {
            visible.push(*r);
        } else if m == spec.answer_month && r.action == ActionType::Buy {
            answer_buys.push(*r);
        }
    }
    let answer = answer_buys.iter().map(|r| (r.user, r.brand)).collect();
    Ok(Split {
        visible,
        answer,
        answer_buys,
    })
}
