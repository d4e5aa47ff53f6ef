//! Two-stage aggregation: a logistic blend inside each model group, then a
//! fixed linear combination of the blended group scores, and the decision
//! rule that turns final scores into a prediction set.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::f1_from_counts;
use crate::features::FeatureSchema;
use crate::instances::Instance;
use crate::models::lr::{LrConfig, LrModel};
use crate::models::{ModelFile, ModelKind, PairHistoryIndex, REGISTRY};
use crate::shard::user_hash;
use crate::submission::{AnswerSet, PredictionSet};

const SCORE_CHUNK: usize = 2048;

/// Instances of users with `user_hash % 5 == 4` form the blend split; base
/// models never train on them.
pub fn is_blend_user(user: u64) -> bool {
    user_hash(user) % 5 == 4
}

pub fn split_for_blend(instances: &[Instance]) -> (Vec<&Instance>, Vec<&Instance>) {
    instances.iter().partition(|i| !is_blend_user(i.user))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelGroup {
    pub name: String,
    pub members: Vec<String>,
}

/// Fixed-span models, sliding-span models, and the global scorer.
pub fn default_groups() -> Vec<ModelGroup> {
    let group = |name: &str, members: &[&str]| ModelGroup {
        name: name.into(),
        members: members.iter().map(|m| m.to_string()).collect(),
    };
    vec![
        group("fixed", &["lr_fixed", "gbrt_fixed", "rf_fixed"]),
        group("sliding", &["gbrt_sliding", "rf_sliding"]),
        group("global", &["global"]),
    ]
}

/// Groups must be non-empty and partition `models`.
pub fn validate_groups(groups: &[ModelGroup], models: &[String]) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::Config("at least one model group is required".into()));
    }
    let mut seen = BTreeSet::new();
    for g in groups {
        if g.members.is_empty() {
            return Err(Error::Config(format!("model group {} is empty", g.name)));
        }
        for m in &g.members {
            if !models.contains(m) {
                return Err(Error::Config(format!("group {} names unknown model {m}", g.name)));
            }
            if !seen.insert(m.as_str()) {
                return Err(Error::Config(format!("model {m} appears in more than one group")));
            }
        }
    }
    if let Some(m) = models.iter().find(|m| !seen.contains(m.as_str())) {
        return Err(Error::Config(format!("model {m} belongs to no group")));
    }
    Ok(())
}

/// One row per instance, one column per model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub columns: Vec<String>,
    pub keys: Vec<(u64, u64)>,
    pub values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.columns.len();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("score matrix has no column {name}")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok((0..self.n_rows()).map(|i| self.row(i)[j]).collect())
    }
}

/// Scores every instance with every model; columns follow registry order.
pub fn score_matrix(
    models: &[ModelFile],
    instances: &[Instance],
    schema: &FeatureSchema,
    history: Option<&PairHistoryIndex>,
) -> Result<ScoreMatrix> {
    let hash = schema.hash();
    let mut ordered: Vec<&ModelFile> = models.iter().collect();
    ordered.sort_by_key(|m| REGISTRY.iter().position(|s| s.name == m.name));
    for w in ordered.windows(2) {
        if w[0].name == w[1].name {
            return Err(Error::Config(format!("model {} given twice", w[0].name)));
        }
    }
    for m in &ordered {
        if m.kind != ModelKind::Global && m.schema_hash != hash {
            return Err(Error::Schema(format!(
                "model {} was trained on feature schema {} but the instances use {hash}",
                m.name, m.schema_hash
            )));
        }
    }
    if let Some(bad) = instances.iter().find(|i| i.features.len() != schema.len()) {
        return Err(Error::Schema(format!(
            "instance ({}, {}) has {} features, schema has {}",
            bad.user,
            bad.brand,
            bad.features.len(),
            schema.len()
        )));
    }
    let chunks: Vec<Result<Vec<f64>>> = instances
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len() * ordered.len());
            for inst in chunk {
                for m in &ordered {
                    out.push(m.model.score(inst, history)?);
                }
            }
            Ok(out)
        })
        .collect();
    let mut values = Vec::with_capacity(instances.len() * ordered.len());
    for c in chunks {
        values.extend(c?);
    }
    Ok(ScoreMatrix {
        columns: ordered.iter().map(|m| m.name.clone()).collect(),
        keys: instances.iter().map(|i| (i.user, i.brand)).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendConfig {
    pub lr: LrConfig,
    /// Feed `sign(s) * ln(1 + |s|)` instead of raw scores, taming the heavy
    /// tail of the time-decay scores.
    pub compress: bool,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            lr: LrConfig {
                learning_rate: 1.0,
                l2: 0.0,
                epochs: 500,
                tolerance: 1e-9,
            },
            compress: true,
        }
    }
}

fn compress(s: f64) -> f64 {
    s.signum() * s.abs().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendModel {
    pub group: String,
    pub members: Vec<String>,
    pub compress: bool,
    pub lr: LrModel,
}

impl BlendModel {
    fn inputs(&self, matrix: &ScoreMatrix) -> Result<Vec<Vec<f32>>> {
        let idx: Vec<usize> = self
            .members
            .iter()
            .map(|m| matrix.column_index(m))
            .collect::<Result<_>>()?;
        Ok((0..matrix.n_rows())
            .map(|i| {
                let row = matrix.row(i);
                idx.iter()
                    .map(|&j| if self.compress { compress(row[j]) } else { row[j] } as f32)
                    .collect()
            })
            .collect())
    }

    pub fn score_matrix(&self, matrix: &ScoreMatrix) -> Result<Vec<f64>> {
        Ok(self.inputs(matrix)?.iter().map(|x| self.lr.score(x)).collect())
    }

    /// Weights and intercept acting on the (possibly compressed) member
    /// scores directly.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let m = &self.lr;
        let mut b = m.bias;
        let w = m
            .weights
            .iter()
            .zip(m.mean.iter().zip(&m.scale))
            .map(|(w, (mu, s))| {
                b -= w * mu / s;
                w / s
            })
            .collect();
        (w, b)
    }
}

/// One logistic model per group over that group's score columns.
pub fn blend_fit(
    matrix: &ScoreMatrix,
    labels: &[u8],
    groups: &[ModelGroup],
    config: &BlendConfig,
) -> Result<Vec<BlendModel>> {
    validate_groups(groups, &matrix.columns)?;
    if labels.len() != matrix.n_rows() {
        return Err(Error::Training("blend: one label per score row is required".into()));
    }
    groups
        .iter()
        .map(|g| {
            let positives = labels.iter().filter(|&&l| l == 1).count();
            if positives == 0 || positives == labels.len() {
                return Err(Error::DegenerateLabels(format!(
                    "blend split for group {} has only one label class",
                    g.name
                )));
            }
            let mut blend = BlendModel {
                group: g.name.clone(),
                members: g.members.clone(),
                compress: config.compress,
                lr: LrModel {
                    config: config.lr.clone(),
                    mean: vec![],
                    scale: vec![],
                    weights: vec![],
                    bias: 0.0,
                },
            };
            let inputs = blend.inputs(matrix)?;
            let rows: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
            blend.lr = LrModel::fit(&rows, labels, &config.lr)?;
            Ok(blend)
        })
        .collect()
}

/// Blended score columns, one per group.
pub fn blend_scores(blends: &[BlendModel], matrix: &ScoreMatrix) -> Result<Vec<Vec<f64>>> {
    blends.iter().map(|b| b.score_matrix(matrix)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decision {
    /// Emit pairs scoring at least this much.
    pub threshold: f64,
    /// Keep at most this many brands per user.
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleModel {
    pub groups: Vec<String>,
    pub weights: Vec<f64>,
    pub decision: Decision,
}

pub fn combine(group_scores: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = group_scores.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| group_scores.iter().zip(weights).map(|(g, w)| w * g[i]).sum())
        .collect()
}

/// Row indices sorted by user, then score descending, then brand ascending,
/// with each row's rank inside its user.
fn user_ranks(keys: &[(u64, u64)], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .0
            .cmp(&keys[b].0)
            .then(scores[b].total_cmp(&scores[a]))
            .then(keys[a].1.cmp(&keys[b].1))
    });
    let mut rank = vec![0usize; keys.len()];
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && keys[order[pos - 1]].0 == keys[i].0 {
            rank[i] = rank[order[pos - 1]] + 1;
        }
    }
    rank
}

pub fn decide(keys: &[(u64, u64)], scores: &[f64], decision: &Decision) -> PredictionSet {
    let rank = decision.top_k.map(|_| user_ranks(keys, scores));
    let mut out = PredictionSet::new();
    for (i, &(u, b)) in keys.iter().enumerate() {
        let within_k = match (&rank, decision.top_k) {
            (Some(r), Some(k)) => r[i] < k,
            _ => true,
        };
        if within_k && scores[i] >= decision.threshold {
            out.insert(u, b);
        }
    }
    out
}

pub fn ensemble_predict(
    keys: &[(u64, u64)],
    group_scores: &[Vec<f64>],
    weights: &[f64],
    decision: &Decision,
) -> PredictionSet {
    decide(keys, &combine(group_scores, weights), decision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionGrid {
    /// Thresholds are placed at the score that keeps this fraction of rows.
    pub keep_fractions: Vec<f64>,
    /// Per-user caps to try.
    pub top_k: Vec<usize>,
    /// Also try leaving users uncapped.
    pub uncapped: bool,
    /// Spacing of the ensemble weight simplex grid.
    pub weight_step: f64,
}

impl Default for DecisionGrid {
    fn default() -> Self {
        DecisionGrid {
            keep_fractions: (0..48).map(|i| 0.5 * 0.8f64.powi(i)).collect(),
            top_k: vec![1, 2, 3, 5, 10],
            uncapped: true,
            weight_step: 0.2,
        }
    }
}

impl DecisionGrid {
    pub fn validate(&self) -> Result<()> {
        if self.keep_fractions.is_empty() || (self.top_k.is_empty() && !self.uncapped) {
            return Err(Error::Config("decision grid is empty".into()));
        }
        if self.keep_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config("keep fractions must lie in (0, 1]".into()));
        }
        if self.top_k.contains(&0) {
            return Err(Error::Config("top-k caps must be positive".into()));
        }
        let steps = 1.0 / self.weight_step;
        if !(self.weight_step > 0.0 && self.weight_step <= 1.0 && (steps - steps.round()).abs() < 1e-9) {
            return Err(Error::Config("weight_step must divide 1".into()));
        }
        Ok(())
    }

    /// Per-user caps in grid order; `None` is uncapped and comes last.
    pub fn caps(&self) -> Vec<Option<usize>> {
        let mut caps: Vec<Option<usize>> = self.top_k.iter().map(|&k| Some(k)).collect();
        if self.uncapped {
            caps.push(None);
        }
        caps
    }

    /// Thresholds for `scores`, in grid order.
    pub fn thresholds(&self, scores: &[f64]) -> Vec<f64> {
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        self.keep_fractions
            .iter()
            .map(|f| match sorted.len() {
                0 => f64::INFINITY,
                n => sorted[((f * n as f64).ceil() as usize).clamp(1, n) - 1],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tuned {
    pub decision: Decision,
    pub f1: f64,
    pub n_pairs: u64,
}

/// Larger F1 wins; among equal F1, the smaller prediction set; among equal
/// sizes, the earlier grid point.
fn better(f1: f64, n: u64, best: &Option<Tuned>) -> bool {
    match best {
        None => true,
        Some(b) => f1 > b.f1 || (f1 == b.f1 && n < b.n_pairs),
    }
}

/// Grid search over thresholds x per-user caps maximizing F1 against `answer`.
pub fn tune_decision(
    keys: &[(u64, u64)],
    scores: &[f64],
    answer: &AnswerSet,
    grid: &DecisionGrid,
) -> Result<Tuned> {
    grid.validate()?;
    let thresholds = grid.thresholds(scores);
    let total_answer = answer.n_pairs() as u64;
    let rank = user_ranks(keys, scores);
    let mut best: Option<Tuned> = None;
    for k in grid.caps() {
        let mut eligible: Vec<(f64, bool)> = (0..keys.len())
            .filter(|&i| k.is_none_or(|k| rank[i] < k))
            .map(|i| (scores[i], answer.contains(keys[i].0, keys[i].1)))
            .collect();
        eligible.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut hits_prefix = Vec::with_capacity(eligible.len() + 1);
        hits_prefix.push(0u64);
        for &(_, hit) in &eligible {
            hits_prefix.push(hits_prefix.last().unwrap() + u64::from(hit));
        }
        for &tau in &thresholds {
            let p = eligible.partition_point(|e| e.0 >= tau);
            let h = hits_prefix[p];
            let f1 = if h == 0 { 0.0 } else { f1_from_counts(h, p as u64, total_answer) };
            if better(f1, p as u64, &best) {
                best = Some(Tuned {
                    decision: Decision {
                        threshold: tau,
                        top_k: k,
                    },
                    f1,
                    n_pairs: p as u64,
                });
            }
        }
    }
    best.ok_or_else(|| Error::Config("decision grid is empty".into()))
}

/// Weight vectors on the simplex with coordinates in multiples of `step`,
/// in lexicographic order.
pub fn simplex_grid(dims: usize, step: f64) -> Vec<Vec<f64>> {
    let units = (1.0 / step).round() as usize;
    fn go(dims: usize, left: usize, units: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if dims == 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&u| u as f64 / units as f64).collect());
            prefix.pop();
            return;
        }
        for u in 0..=left {
            prefix.push(u);
            go(dims - 1, left - u, units, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dims > 0 {
        go(dims, units, units, &mut Vec::new(), &mut out);
    }
    out
}

/// Ensemble weights and decision rule maximizing F1 against `answer`.
pub fn tune_ensemble(
    group_names: &[String],
    keys: &[(u64, u64)],
    group_scores: &[Vec<f64>],
    answer: &AnswerSet,
    grid: &DecisionGrid,
) -> Result<(EnsembleModel, Tuned)> {
    grid.validate()?;
    if group_scores.is_empty() || group_scores.len() != group_names.len() {
        return Err(Error::Config("one score column per group is required".into()));
    }
    let mut best: Option<(Vec<f64>, Tuned)> = None;
    for weights in simplex_grid(group_scores.len(), grid.weight_step) {
        let t = tune_decision(keys, &combine(group_scores, &weights), answer, grid)?;
        if better(t.f1, t.n_pairs, &best.as_ref().map(|b| b.1)) {
            best = Some((weights, t));
        }
    }
    let (weights, tuned) = best.expect("simplex grid is never empty");
    Ok((
        EnsembleModel {
            groups: group_names.to_vec(),
            weights,
            decision: tuned.decision,
        },
        tuned,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(columns: &[&str], rows: Vec<Vec<f64>>) -> ScoreMatrix {
        ScoreMatrix {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            keys: (0..rows.len() as u64).map(|i| (i / 3, i % 3)).collect(),
            values: rows.into_iter().flatten().collect(),
        }
    }

    fn reference_logistic(x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
        // Newton's method on raw inputs with an explicit intercept column.
        let d = x[0].len() + 1;
        let mut theta = vec![0.0; d];
        for _ in 0..100 {
            let mut g = vec![0.0; d];
            let mut h = vec![vec![0.0; d]; d];
            for (xi, &yi) in x.iter().zip(y) {
                let z: Vec<f64> = xi.iter().copied().chain([1.0]).collect();
                let m: f64 = z.iter().zip(&theta).map(|(a, b)| a * b).sum();
                let p = 1.0 / (1.0 + (-m).exp());
                for a in 0..d {
                    g[a] += (p - f64::from(yi)) * z[a];
                    for b in 0..d {
                        h[a][b] += p * (1.0 - p) * z[a] * z[b];
                    }
                }
            }
            // Gaussian elimination on h * step = g.
            let mut aug: Vec<Vec<f64>> = h.iter().zip(&g).map(|(r, gi)| r.iter().copied().chain([*gi]).collect()).collect();
            for c in 0..d {
                let piv = (c..d).max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs())).unwrap();
                aug.swap(c, piv);
                for r in 0..d {
                    if r != c {
                        let f = aug[r][c] / aug[c][c];
                        for k in c..=d {
                            aug[r][k] -= f * aug[c][k];
                        }
                    }
                }
            }
            for a in 0..d {
                theta[a] -= aug[a][d] / aug[a][a];
            }
        }
        theta
    }

    #[test]
    fn two_model_blend_matches_reference_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..5.0)]).collect();
        let labels: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(rng.gen_bool(1.0 / (1.0 + (-(3.0 * r[0] - 0.5 * r[1])).exp()))))
            .collect();
        let m = matrix(&["a", "b"], rows.clone());
        let groups = vec![ModelGroup { name: "g".into(), members: vec!["a".into(), "b".into()] }];
        let cfg = BlendConfig { compress: false, ..BlendConfig::default() };
        let blends = blend_fit(&m, &labels, &groups, &cfg).unwrap();
        let (w, b) = blends[0].raw_coefficients();
        // The blend sees f32 inputs; feed the reference the same values.
        let rounded: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v as f32)).collect()).collect();
        let reference = reference_logistic(&rounded, &labels);
        for (got, want) in w.iter().chain([&b]).zip(&reference) {
            assert!((got - want).abs() < 1e-4, "{w:?} {b} vs {reference:?}");
        }
    }

    #[test]
    fn single_member_blend_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(0.0..100.0)]).collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] > 40.0 || rng.gen_bool(0.2))).collect();
        let m = matrix(&["a"], rows.clone());
        let groups = vec![ModelGroup { name: "g".into(), members: vec!["a".into()] }];
        let blends = blend_fit(&m, &labels, &groups, &BlendConfig::default()).unwrap();
        let scores = blend_scores(&blends, &m).unwrap().remove(0);
        let mut pairs: Vec<(f64, f64)> = rows.iter().map(|r| r[0]).zip(scores).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn noise_column_does_not_worsen_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(rng.gen_bool(0.2 + 0.6 * r[0]))).collect();
        let cfg = BlendConfig { compress: false, ..BlendConfig::default() };
        let loss = |cols: &[&str]| {
            let m = matrix(&["a", "noise"], rows.clone());
            let g = vec![ModelGroup { name: "g".into(), members: cols.iter().map(|c| c.to_string()).collect() }];
            let rest: Vec<ModelGroup> = ["a", "noise"]
                .iter()
                .filter(|c| !cols.contains(c))
                .map(|c| ModelGroup { name: c.to_string(), members: vec![c.to_string()] })
                .collect();
            let all: Vec<ModelGroup> = g.into_iter().chain(rest).collect();
            let blend = &blend_fit(&m, &labels, &all, &cfg).unwrap()[0];
            let s = blend.score_matrix(&m).unwrap();
            s.iter().zip(&labels).map(|(p, &y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() }).sum::<f64>() / 200.0
        };
        assert!(loss(&["a", "noise"]) <= loss(&["a"]) + 1e-6);
    }

    #[test]
    fn degenerate_labels_name_the_group() {
        let m = matrix(&["a"], vec![vec![1.0], vec![2.0]]);
        let groups = vec![ModelGroup { name: "solo".into(), members: vec!["a".into()] }];
        let err = blend_fit(&m, &[1, 1], &groups, &BlendConfig::default()).unwrap_err();
        assert!(err.to_string().contains("solo"), "{err}");
    }

    #[test]
    fn groups_must_partition() {
        let models: Vec<String> = REGISTRY.iter().map(|s| s.name.to_string()).collect();
        validate_groups(&default_groups(), &models).unwrap();
        let mut g = default_groups();
        g[1].members.pop();
        assert!(validate_groups(&g, &models).is_err());
        g[1].members.push("lr_fixed".into());
        assert!(validate_groups(&g, &models).is_err());
    }

    #[test]
    fn decision_rules() {
        let keys = vec![(1, 1), (1, 2), (1, 3), (2, 1), (2, 5), (3, 4)];
        let scores = vec![0.9, 0.5, 0.9, 0.1, 0.3, 0.7];
        let none = decide(&keys, &scores, &Decision { threshold: f64::INFINITY, top_k: None });
        assert!(none.is_empty());
        let capped = decide(&keys, &scores, &Decision { threshold: 0.0, top_k: Some(2) });
        let want: PredictionSet = [(1, 1), (1, 3), (2, 1), (2, 5), (3, 4)].into_iter().collect();
        assert_eq!(capped, want);
        let one = decide(&keys, &scores, &Decision { threshold: 0.0, top_k: Some(1) });
        let want: PredictionSet = [(1, 1), (2, 5), (3, 4)].into_iter().collect();
        assert_eq!(one, want);
        let median = decide(&keys, &scores, &Decision { threshold: 0.6, top_k: None });
        let want: PredictionSet = [(1, 1), (1, 3), (3, 4)].into_iter().collect();
        assert_eq!(median, want);
    }

    #[test]
    fn tuning_edge_cases() {
        let keys = vec![(1, 1), (1, 2), (2, 1), (3, 3)];
        let scores = vec![0.9, 0.4, 0.3, 0.2];
        let grid = DecisionGrid::default();
        let t = tune_decision(&keys, &scores, &AnswerSet::new(), &grid).unwrap();
        assert_eq!(t.f1, 0.0);
        assert_eq!(t.n_pairs, 1);
        let answer: AnswerSet = [(1, 1)].into_iter().collect();
        let t = tune_decision(&keys, &scores, &answer, &grid).unwrap();
        assert_eq!(t.f1, 1.0);
        assert_eq!(decide(&keys, &scores, &t.decision), answer);
        let empty = DecisionGrid { keep_fractions: vec![], ..DecisionGrid::default() };
        assert!(tune_decision(&keys, &scores, &answer, &empty).is_err());
    }

    #[test]
    fn tuning_matches_exhaustive_search() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let keys: Vec<(u64, u64)> = (0..50).map(|i| (i / 5, i % 5)).collect();
            let scores: Vec<f64> = (0..50).map(|_| f64::from(rng.gen_range(0..20u8)) / 20.0).collect();
            let answer: AnswerSet = keys.iter().copied().filter(|_| rng.gen_bool(0.2)).collect();
            let grid = DecisionGrid::default();
            let got = tune_decision(&keys, &scores, &answer, &grid).unwrap();

            let mut best: Option<(f64, usize, Decision)> = None;
            for k in grid.caps() {
                for tau in grid.thresholds(&scores) {
                    let d = Decision { threshold: tau, top_k: k };
                    let pred = decide(&keys, &scores, &d);
                    let f1 = evaluate(&pred, &answer).f1;
                    let n = pred.n_pairs();
                    if best.is_none_or(|b| f1 > b.0 || (f1 == b.0 && n < b.1)) {
                        best = Some((f1, n, d));
                    }
                }
            }
            let (f1, n, d) = best.unwrap();
            assert_eq!((got.f1, got.n_pairs as usize, got.decision), (f1, n, d), "seed {seed}");
        }
    }

    #[test]
    fn simplex_grid_shape() {
        let g = simplex_grid(3, 0.2);
        assert_eq!(g.len(), 21);
        assert!(g.iter().all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
        assert_eq!(g[0], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn scaling_a_single_group_keeps_the_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let keys: Vec<(u64, u64)> = (0..80).map(|i| (i / 4, i % 4)).collect();
        let scores: Vec<f64> = (0..80).map(|_| rng.gen_range(0.0..1.0)).collect();
        let answer: AnswerSet = keys.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        let names = vec!["g".to_string()];
        let grid = DecisionGrid::default();
        let (m1, _) = tune_ensemble(&names, &keys, &[scores.clone()], &answer, &grid).unwrap();
        let scaled: Vec<f64> = scores.iter().map(|s| s * 7.5).collect();
        let (m2, _) = tune_ensemble(&names, &keys, &[scaled.clone()], &answer, &grid).unwrap();
        assert_eq!(
            ensemble_predict(&keys, &[scores], &m1.weights, &m1.decision),
            ensemble_predict(&keys, &[scaled], &m2.weights, &m2.decision)
        );
    }

    #[test]
    fn blend_split_is_disjoint() {
        let insts: Vec<Instance> = (0..500)
            .map(|u| Instance { user: u, brand: 1, feature_end: 67, features: vec![], target: None })
            .collect();
        let (base, blend) = split_for_blend(&insts);
        let a: BTreeSet<u64> = base.iter().map(|i| i.user).collect();
        let b: BTreeSet<u64> = blend.iter().map(|i| i.user).collect();
        assert!(a.is_disjoint(&b));
        assert!(!b.is_empty() && b.len() < 200);
    }

    proptest! {
        #[test]
        fn lowering_threshold_only_adds_pairs(scores in prop::collection::vec(0.0f64..1.0, 1..40), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, k in prop::option::of(1usize..4)) {
            let keys: Vec<(u64, u64)> = (0..scores.len() as u64).map(|i| (i % 5, i)).collect();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let a = decide(&keys, &scores, &Decision { threshold: hi, top_k: k });
            let b = decide(&keys, &scores, &Decision { threshold: lo, top_k: k });
            prop_assert!(a.pairs().all(|(u, br)| b.contains(u, br)));
        }
    }
}
