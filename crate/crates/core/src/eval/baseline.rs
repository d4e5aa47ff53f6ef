//! Rule-of-thumb predictors used as yardsticks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{evaluate, EvaluationReport};
use crate::instances::candidate_pairs;
use crate::log::{ActionRecord, ActionType};
use crate::submission::{AnswerSet, PredictionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineKind {
    Random,
    Popularity,
    RepeatBuyer,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::Random,
        BaselineKind::Popularity,
        BaselineKind::RepeatBuyer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Popularity => "popularity",
            BaselineKind::RepeatBuyer => "repeat-buyer",
        }
    }
}

/// `n_pairs` pairs drawn uniformly without replacement from the pairs active
/// in `[window_start, feature_end)`.
pub fn random(
    log: &[ActionRecord],
    window_start: u16,
    feature_end: u16,
    n_pairs: usize,
    seed: u64,
) -> PredictionSet {
    let pairs: Vec<(u64, u64)> = candidate_pairs(log, window_start, feature_end).into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_pairs.min(pairs.len());
    sample(&mut rng, pairs.len(), n).into_iter().map(|i| pairs[i]).collect()
}

/// The `top_n` brands by Buy count in `[window_start, feature_end)` (ties to
/// the lower brand id), crossed with every user active in the last
/// `recency_days` days before `feature_end`.
pub fn popularity(
    log: &[ActionRecord],
    window_start: u16,
    feature_end: u16,
    top_n: usize,
    recency_days: u16,
) -> PredictionSet {
    let mut buys: BTreeMap<u64, u64> = BTreeMap::new();
    let mut users = BTreeSet::new();
    let recent = feature_end.saturating_sub(recency_days).max(window_start);
    for r in log {
        let d = r.day();
        if d < window_start || d >= feature_end {
            continue;
        }
        if r.action == ActionType::Buy {
            *buys.entry(r.brand).or_default() += 1;
        }
        if d >= recent {
            users.insert(r.user);
        }
    }
    let mut ranked: Vec<(u64, u64)> = buys.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let top: Vec<u64> = ranked.into_iter().take(top_n).map(|(b, _)| b).collect();
    let mut out = PredictionSet::new();
    for &u in &users {
        for &b in &top {
            out.insert(u, b);
        }
    }
    out
}

/// Pairs with at least one Buy in the last `recency_days` days before
/// `feature_end` (the whole span from `window_start` when `None`).
pub fn repeat_buyer(
    log: &[ActionRecord],
    window_start: u16,
    feature_end: u16,
    recency_days: Option<u16>,
) -> PredictionSet {
    let from = recency_days.map_or(window_start, |r| feature_end.saturating_sub(r).max(window_start));
    log.iter()
        .filter(|r| r.action == ActionType::Buy && (from..feature_end).contains(&r.day()))
        .map(|r| (r.user, r.brand))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    pub params: String,
    pub report: EvaluationReport,
}

impl fmt::Display for BaselineResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<14}{:<28}f1={:.6}", self.kind.name(), self.params, self.report.f1)
    }
}

/// Best setting of each baseline over a small parameter grid, scored against
/// `answer`. Earlier grid points win ties.
pub fn tune_baselines(
    log: &[ActionRecord],
    window_start: u16,
    feature_end: u16,
    answer: &AnswerSet,
    seed: u64,
) -> Vec<BaselineResult> {
    let mut best: Vec<BaselineResult> = Vec::new();
    let mut consider = |kind: BaselineKind, params: String, pred: PredictionSet| {
        let report = evaluate(&pred, answer);
        match best.iter_mut().find(|r| r.kind == kind) {
            Some(r) if report.f1 > r.report.f1 => *r = BaselineResult { kind, params, report },
            Some(_) => {}
            None => best.push(BaselineResult { kind, params, report }),
        }
    };

    let n_candidates = candidate_pairs(log, window_start, feature_end).len();
    for frac in [0.001, 0.003, 0.01, 0.03, 0.1] {
        let n = ((n_candidates as f64 * frac).ceil() as usize).max(1);
        consider(
            BaselineKind::Random,
            format!("pairs={n}"),
            random(log, window_start, feature_end, n, seed),
        );
    }
    for top_n in [1, 2, 3, 5] {
        for recency in [1, 3, 7, 15, 30] {
            consider(
                BaselineKind::Popularity,
                format!("top={top_n} recency={recency}d"),
                popularity(log, window_start, feature_end, top_n, recency),
            );
        }
    }
    for recency in [Some(7), Some(15), Some(30), None] {
        let label = recency.map_or("recency=all".to_string(), |r| format!("recency={r}d"));
        consider(
            BaselineKind::RepeatBuyer,
            label,
            repeat_buyer(log, window_start, feature_end, recency),
        );
    }
    best
}
