//! Random forest of Gini-split classification trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, BinnedMatrix, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::shard::splitmix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features sampled per split; defaults to ceil(sqrt(n_features)).
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 50,
            max_depth: 12,
            min_samples_leaf: 10,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "rf: n_trees, max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::Config("rf: features_per_split must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub config: RfConfig,
    pub trees: Vec<Tree>,
}

pub struct RfFit {
    pub model: RfModel,
    /// Mean vote of the trees that did not sample each row; `None` if every
    /// tree sampled it.
    pub oob: Vec<Option<f64>>,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tree as u64)))
}

impl RfModel {
    pub fn fit(rows: &[&[f32]], labels: &[u8], config: &RfConfig) -> Result<Self> {
        Self::fit_with_oob(rows, labels, config).map(|f| f.model)
    }

    pub fn fit_with_oob(rows: &[&[f32]], labels: &[u8], config: &RfConfig) -> Result<RfFit> {
        config.validate()?;
        if rows.is_empty() {
            return Err(Error::Training("rf: empty training set".into()));
        }
        if rows.len() != labels.len() || labels.iter().any(|&l| l > 1) {
            return Err(Error::Training("rf: labels must be 0/1, one per row".into()));
        }
        let data = BinnedMatrix::new(rows)?;
        let n = rows.len();
        let d = data.n_features();
        let targets: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let per_split = config
            .features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1));
        let params = TreeParams {
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf as f64,
            features_per_split: Some(per_split),
        };

        let fitted: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(config.seed, t);
                let weights = if config.bootstrap {
                    let mut w = vec![0.0; n];
                    for _ in 0..n {
                        w[rng.gen_range(0..n)] += 1.0;
                    }
                    w
                } else {
                    vec![1.0; n]
                };
                let tree = grow_tree(&data, &targets, &weights, params, (0..n as u32).collect(), Some(rng));
                (tree, weights)
            })
            .collect();

        let mut votes = vec![(0.0f64, 0u32); n];
        for (tree, weights) in &fitted {
            for (i, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    votes[i].0 += tree.predict(rows[i]);
                    votes[i].1 += 1;
                }
            }
        }
        let oob = votes
            .into_iter()
            .map(|(s, c)| (c > 0).then(|| s / f64::from(c)))
            .collect();
        Ok(RfFit {
            model: RfModel {
                config: config.clone(),
                trees: fitted.into_iter().map(|(t, _)| t).collect(),
            },
            oob,
        })
    }

    /// Mean leaf positive rate across trees.
    pub fn score(&self, x: &[f32]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
