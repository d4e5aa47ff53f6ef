//! L2-regularized logistic regression on standardized features.
//!
//! Optimization is full-batch gradient descent with a Barzilai-Borwein step
//! and Armijo backtracking, so the training loss never increases. Gradients
//! are reduced over fixed row chunks in chunk order, which keeps the result
//! independent of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    /// Initial step size.
    pub learning_rate: f64,
    pub l2: f64,
    /// Maximum number of descent iterations.
    pub epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            learning_rate: 1.0,
            l2: 1e-4,
            epochs: 100,
            tolerance: 1e-6,
        }
    }
}

impl LrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("lr: learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("lr: l2 must be nonnegative".into()));
        }
        if self.epochs == 0 || !(self.tolerance > 0.0) {
            return Err(Error::Config("lr: epochs and tolerance must be positive".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

fn softplus(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

/// Regularized mean log-loss over standardized features.
///
/// Parameters are laid out as `[w_0, .., w_{d-1}, b]`; the bias is not
/// penalized.
pub struct LrObjective<'a> {
    rows: &'a [&'a [f32]],
    labels: &'a [u8],
    mean: Vec<f64>,
    scale: Vec<f64>,
    l2: f64,
}

impl<'a> LrObjective<'a> {
    pub fn new(rows: &'a [&'a [f32]], labels: &'a [u8], l2: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Training("lr: empty training set".into()));
        }
        if rows.len() != labels.len() || labels.iter().any(|&l| l > 1) {
            return Err(Error::Training("lr: labels must be 0/1, one per row".into()));
        }
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut sum = vec![0.0f64; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::Training("lr: ragged feature rows".into()));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training("lr: non-finite feature value".into()));
            }
            for (s, &v) in sum.iter_mut().zip(r.iter()) {
                *s += f64::from(v);
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut sq = vec![0.0f64; d];
        for r in rows {
            for ((s, &v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                let c = f64::from(v) - m;
                *s += c * c;
            }
        }
        let scale = sq
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(LrObjective {
            rows,
            labels,
            mean,
            scale,
            l2,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len() + 1
    }

    /// Weights on raw features plus intercept equivalent to `params`.
    fn raw_weights(&self, params: &[f64]) -> (Vec<f64>, f64) {
        let d = self.mean.len();
        let mut b = params[d];
        let w: Vec<f64> = (0..d)
            .map(|j| {
                let wj = params[j] / self.scale[j];
                b -= wj * self.mean[j];
                wj
            })
            .collect();
        (w, b)
    }

    pub fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let d = self.mean.len();
        let (w, b) = self.raw_weights(params);
        let partials: Vec<(f64, Vec<f64>, f64)> = self
            .rows
            .par_chunks(CHUNK)
            .zip(self.labels.par_chunks(CHUNK))
            .map(|(rows, labels)| {
                let mut loss = 0.0;
                let mut g = vec![0.0f64; d];
                let mut gb = 0.0;
                for (r, &y) in rows.iter().zip(labels) {
                    let m = b + r.iter().zip(&w).map(|(&x, wj)| f64::from(x) * wj).sum::<f64>();
                    let y = f64::from(y);
                    loss += softplus(m) - y * m;
                    let e = sigmoid(m) - y;
                    gb += e;
                    for (gj, &x) in g.iter_mut().zip(r.iter()) {
                        *gj += e * f64::from(x);
                    }
                }
                (loss, g, gb)
            })
            .collect();
        let n = self.rows.len() as f64;
        let mut loss = 0.0;
        let mut graw = vec![0.0f64; d];
        let mut gb = 0.0;
        for (l, g, e) in partials {
            loss += l;
            gb += e;
            for (a, v) in graw.iter_mut().zip(g) {
                *a += v;
            }
        }
        let mut grad = Vec::with_capacity(d + 1);
        let mut penalty = 0.0;
        for j in 0..d {
            let gj = (graw[j] - self.mean[j] * gb) / (self.scale[j] * n);
            grad.push(gj + self.l2 * params[j]);
            penalty += params[j] * params[j];
        }
        grad.push(gb / n);
        (loss / n + 0.5 * self.l2 * penalty, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub config: LrConfig,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LrModel {
    pub fn fit(rows: &[&[f32]], labels: &[u8], config: &LrConfig) -> Result<Self> {
        Self::fit_with_history(rows, labels, config).map(|(m, _)| m)
    }

    /// Also returns the objective value at the start and after every iteration.
    pub fn fit_with_history(
        rows: &[&[f32]],
        labels: &[u8],
        config: &LrConfig,
    ) -> Result<(Self, Vec<f64>)> {
        config.validate()?;
        let obj = LrObjective::new(rows, labels, config.l2)?;
        let dim = obj.dim();
        let mut theta = vec![0.0f64; dim];
        let (mut loss, mut grad) = obj.loss_and_grad(&theta);
        let mut history = vec![loss];
        let mut step = config.learning_rate;
        for _ in 0..config.epochs {
            let gnorm2 = dot(&grad, &grad);
            if gnorm2.sqrt() < config.tolerance {
                break;
            }
            let mut accepted = None;
            for _ in 0..60 {
                let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
                let (l, g) = obj.loss_and_grad(&cand);
                if l.is_finite() && l <= loss - 1e-4 * step * gnorm2 {
                    accepted = Some((cand, l, g));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, l, g)) = accepted else { break };
            let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 0.0 {
                let bb = dot(&s, &s) / sy;
                if bb.is_finite() && bb > 0.0 {
                    step = bb;
                }
            }
            let improvement = loss - l;
            theta = cand;
            loss = l;
            grad = g;
            history.push(loss);
            if improvement <= config.tolerance * 1e-3 * loss.abs().max(1e-12) {
                break;
            }
        }
        let d = dim - 1;
        Ok((
            LrModel {
                config: config.clone(),
                mean: obj.mean,
                scale: obj.scale,
                bias: theta[d],
                weights: theta[..d].to_vec(),
            },
            history,
        ))
    }

    pub fn margin(&self, x: &[f32]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.weights)
                .zip(self.mean.iter().zip(&self.scale))
                .map(|((&v, w), (m, s))| w * ((f64::from(v) - m) / s))
                .sum::<f64>()
    }

    pub fn score(&self, x: &[f32]) -> f64 {
        sigmoid(self.margin(x))
    }
}
