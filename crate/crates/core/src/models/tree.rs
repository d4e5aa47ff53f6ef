//! Regression / classification trees with exact greedy splits.
//!
//! Each feature column is mapped to the rank of its value among the sorted
//! distinct training values, so a histogram over ranks enumerates every
//! threshold an exact greedy search would try. A split on rank `s` sends
//! `x <= value[s]` left.
//!
//! Splits maximize `a_L^2 / w_L + a_R^2 / w_R - a^2 / w` where `a` is the
//! weighted sum of the node targets and `w` the total weight. With residual
//! targets this is squared-error reduction; with 0/1 labels it equals the Gini
//! impurity decrease up to a constant factor. Ties go to the lowest feature
//! index, then the lowest threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_GAIN: f64 = 1e-12;

enum Ranks {
    Small(Vec<u16>),
    Large(Vec<u32>),
}

impl Ranks {
    #[inline]
    fn get(&self, row: usize) -> usize {
        match self {
            Ranks::Small(v) => v[row] as usize,
            Ranks::Large(v) => v[row] as usize,
        }
    }
}

struct Column {
    values: Vec<f32>,
    ranks: Ranks,
}

/// Column-major rank encoding of a training matrix.
pub struct BinnedMatrix {
    columns: Vec<Column>,
    n_rows: usize,
}

impl BinnedMatrix {
    pub fn new(rows: &[&[f32]]) -> Result<Self> {
        let n_rows = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Training("ragged feature matrix".into()));
        }
        if rows.iter().any(|r| r.iter().any(|x| !x.is_finite())) {
            return Err(Error::Training("non-finite feature value".into()));
        }
        let columns = (0..d)
            .into_par_iter()
            .map(|f| {
                let mut values: Vec<f32> = rows.iter().map(|r| r[f]).collect();
                values.sort_unstable_by(f32::total_cmp);
                values.dedup();
                let rank = |x: f32| values.partition_point(|v| *v < x);
                let ranks = if values.len() <= u16::MAX as usize + 1 {
                    Ranks::Small(rows.iter().map(|r| rank(r[f]) as u16).collect())
                } else {
                    Ranks::Large(rows.iter().map(|r| rank(r[f]) as u32).collect())
                };
                Column { values, ranks }
            })
            .collect();
        Ok(BinnedMatrix { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: f64,
    /// Features considered per split; `None` means all of them.
    pub features_per_split: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Shape of a tree with thresholds replaced by their rank in the training
/// values; unchanged by strictly increasing transforms of a feature.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Leaf(u64),
    Split(u32, u32, Box<Shape>, Box<Shape>),
}

impl Tree {
    pub fn predict(&self, x: &[f32]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(t, *left as usize).max(go(t, *right as usize))
                }
            }
        }
        go(self, 0)
    }

    pub fn shape(&self, data: &BinnedMatrix) -> Shape {
        fn go(t: &Tree, data: &BinnedMatrix, i: usize) -> Shape {
            match &t.nodes[i] {
                Node::Leaf { value } => Shape::Leaf(value.to_bits()),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let values = &data.columns[*feature as usize].values;
                    let rank = values.partition_point(|v| v < threshold) as u32;
                    Shape::Split(
                        *feature,
                        rank,
                        Box::new(go(t, data, *left as usize)),
                        Box::new(go(t, data, *right as usize)),
                    )
                }
            }
        }
        go(self, data, 0)
    }
}

#[derive(Clone, Copy, Default)]
struct Stat {
    a: f64,
    w: f64,
}

struct Candidate {
    gain: f64,
    feature: usize,
    rank: usize,
}

fn score(s: Stat) -> f64 {
    if s.w > 0.0 {
        s.a * s.a / s.w
    } else {
        0.0
    }
}

fn best_for_feature(
    col: &Column,
    rows: &[u32],
    targets: &[f64],
    weights: &[f64],
    total: Stat,
    params: &TreeParams,
) -> Option<(f64, usize)> {
    if col.values.len() < 2 {
        return None;
    }
    let hist: Vec<(usize, Stat)> = if rows.len() * 4 < col.values.len() {
        // few rows over many distinct values: sort instead of a dense histogram
        let mut keyed: Vec<(usize, u32)> = rows.iter().map(|&r| (col.ranks.get(r as usize), r)).collect();
        keyed.sort_unstable();
        let mut out: Vec<(usize, Stat)> = Vec::new();
        for (rank, r) in keyed {
            let r = r as usize;
            if out.last().is_none_or(|(k, _)| *k != rank) {
                out.push((rank, Stat::default()));
            }
            let h = &mut out.last_mut().unwrap().1;
            h.a += weights[r] * targets[r];
            h.w += weights[r];
        }
        out
    } else {
        let mut dense = vec![Stat::default(); col.values.len()];
        for &r in rows {
            let r = r as usize;
            let h = &mut dense[col.ranks.get(r)];
            h.a += weights[r] * targets[r];
            h.w += weights[r];
        }
        dense.into_iter().enumerate().collect()
    };
    let parent = score(total);
    let mut left = Stat::default();
    let mut best: Option<(f64, usize)> = None;
    for &(s, h) in hist.iter().filter(|(s, _)| *s + 1 < col.values.len()) {
        left.a += h.a;
        left.w += h.w;
        if h.w == 0.0 {
            continue;
        }
        let right = Stat {
            a: total.a - left.a,
            w: total.w - left.w,
        };
        if left.w < params.min_samples_leaf || right.w < params.min_samples_leaf {
            continue;
        }
        if right.w <= 0.0 {
            break;
        }
        let gain = score(left) + score(right) - parent;
        if gain > MIN_GAIN && best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, s));
        }
    }
    best
}

struct Builder<'a> {
    data: &'a BinnedMatrix,
    targets: &'a [f64],
    weights: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, total: Stat) -> u32 {
        let value = if total.w > 0.0 { total.a / total.w } else { 0.0 };
        self.nodes.push(Node::Leaf { value });
        (self.nodes.len() - 1) as u32
    }

    fn grow(&mut self, rows: Vec<u32>, depth: usize, rng: &mut Option<ChaCha8Rng>) -> u32 {
        let total = rows.iter().fold(Stat::default(), |acc, &r| Stat {
            a: acc.a + self.weights[r as usize] * self.targets[r as usize],
            w: acc.w + self.weights[r as usize],
        });
        if depth >= self.params.max_depth || total.w < 2.0 * self.params.min_samples_leaf {
            return self.leaf(total);
        }
        let d = self.data.n_features();
        let features: Vec<usize> = match (self.params.features_per_split, rng.as_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut all: Vec<usize> = (0..d).collect();
                for i in 0..m {
                    let j = rng.gen_range(i..d);
                    all.swap(i, j);
                }
                let mut chosen = all[..m].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..d).collect(),
        };
        let found: Vec<Option<(f64, usize)>> = features
            .par_iter()
            .map(|&f| {
                best_for_feature(
                    &self.data.columns[f],
                    &rows,
                    self.targets,
                    self.weights,
                    total,
                    &self.params,
                )
            })
            .collect();
        let mut best: Option<Candidate> = None;
        for (&feature, cand) in features.iter().zip(found) {
            if let Some((gain, rank)) = cand {
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        gain,
                        feature,
                        rank,
                    });
                }
            }
        }
        let Some(split) = best else {
            return self.leaf(total);
        };
        let col = &self.data.columns[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .into_iter()
            .partition(|&r| col.ranks.get(r as usize) <= split.rank);
        let threshold = col.values[split.rank];
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature as u32,
            threshold,
            left,
            right,
        };
        id as u32
    }
}

/// Grows one tree on `rows` (indices into `data`). Rows with zero weight are
/// ignored. `rng` drives per-split feature sampling.
pub fn grow_tree(
    data: &BinnedMatrix,
    targets: &[f64],
    weights: &[f64],
    params: TreeParams,
    rows: Vec<u32>,
    mut rng: Option<ChaCha8Rng>,
) -> Tree {
    let mut b = Builder {
        data,
        targets,
        weights,
        params,
        nodes: Vec::new(),
    };
    let rows: Vec<u32> = rows
        .into_iter()
        .filter(|&r| weights[r as usize] > 0.0)
        .collect();
    b.grow(rows, 0, &mut rng);
    Tree { nodes: b.nodes }
}
