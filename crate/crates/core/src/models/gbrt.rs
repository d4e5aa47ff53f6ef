//! Gradient-boosted regression trees with squared-error loss.

use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, BinnedMatrix, Tree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTarget {
    Label,
    BuyCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbrtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
    pub target: RegressionTarget,
}

impl Default for GbrtConfig {
    fn default() -> Self {
        GbrtConfig {
            n_trees: 50,
            max_depth: 4,
            shrinkage: 0.1,
            min_samples_leaf: 20,
            target: RegressionTarget::Label,
        }
    }
}

impl GbrtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "gbrt: max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config("gbrt: shrinkage must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel {
    pub config: GbrtConfig,
    pub init: f64,
    pub trees: Vec<Tree>,
}

fn mse(targets: &[f64], pred: &[f64]) -> f64 {
    targets
        .iter()
        .zip(pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / targets.len() as f64
}

impl GbrtModel {
    pub fn fit(rows: &[&[f32]], targets: &[f64], config: &GbrtConfig) -> Result<Self> {
        Self::fit_with_history(rows, targets, config).map(|(m, _)| m)
    }

    /// Also returns the training MSE before the first tree and after each round.
    pub fn fit_with_history(
        rows: &[&[f32]],
        targets: &[f64],
        config: &GbrtConfig,
    ) -> Result<(Self, Vec<f64>)> {
        config.validate()?;
        if rows.is_empty() {
            return Err(Error::Training("gbrt: empty training set".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::Training("gbrt: rows and targets differ in length".into()));
        }
        let data = BinnedMatrix::new(rows)?;
        let n = rows.len();
        let init = targets.iter().sum::<f64>() / n as f64;
        let mut pred = vec![init; n];
        let weights = vec![1.0; n];
        let params = TreeParams {
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf as f64,
            features_per_split: None,
        };
        let mut history = vec![mse(targets, &pred)];
        let mut trees = Vec::with_capacity(config.n_trees);
        for _ in 0..config.n_trees {
            let residuals: Vec<f64> = targets.iter().zip(&pred).map(|(y, p)| y - p).collect();
            let tree = grow_tree(&data, &residuals, &weights, params, (0..n as u32).collect(), None);
            for (p, x) in pred.iter_mut().zip(rows) {
                *p += config.shrinkage * tree.predict(x);
            }
            history.push(mse(targets, &pred));
            trees.push(tree);
        }
        Ok((
            GbrtModel {
                config: config.clone(),
                init,
                trees,
            },
            history,
        ))
    }

    pub fn score(&self, x: &[f32]) -> f64 {
        self.init
            + self.config.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_trees_predict_mean() {
        let rows = [vec![1.0f32], vec![2.0], vec![3.0]];
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let cfg = GbrtConfig {
            n_trees: 0,
            ..GbrtConfig::default()
        };
        let m = GbrtModel::fit(&refs, &[0.0, 1.0, 5.0], &cfg).unwrap();
        assert_eq!(m.score(&[10.0]), 2.0);
    }

    #[test]
    fn one_stump_fits_indicator_exactly() {
        let rows: Vec<Vec<f32>> = (0..8).map(|i| vec![(i * 7 % 5) as f32, f32::from(u8::from(i % 2 == 0))]).collect();
        let y: Vec<f64> = rows.iter().map(|r| f64::from(r[1])).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let cfg = GbrtConfig {
            n_trees: 1,
            max_depth: 1,
            shrinkage: 1.0,
            min_samples_leaf: 1,
            target: RegressionTarget::Label,
        };
        let (_, hist) = GbrtModel::fit_with_history(&refs, &y, &cfg).unwrap();
        assert_eq!(hist[1], 0.0);
    }

    #[test]
    fn training_mse_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f32>> = (0..300)
            .map(|_| (0..5).map(|_| rng.gen_range(0..20) as f32).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| f64::from(u8::from(r[0] + r[1] > 20.0 || rng.gen_bool(0.1))))
            .collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let cfg = GbrtConfig {
            n_trees: 30,
            min_samples_leaf: 3,
            ..GbrtConfig::default()
        };
        let (_, hist) = GbrtModel::fit_with_history(&refs, &y, &cfg).unwrap();
        assert!(hist.windows(2).all(|w| w[1] <= w[0]), "{hist:?}");
        assert!(hist.last().unwrap() < &hist[0]);
    }

    #[test]
    fn rejects_bad_config_and_empty_data() {
        let cfg = GbrtConfig {
            shrinkage: 0.0,
            ..GbrtConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(GbrtModel::fit(&[], &[], &GbrtConfig::default()).is_err());
    }
}
