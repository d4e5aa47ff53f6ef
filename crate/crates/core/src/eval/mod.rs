//! Precision / recall / F1 over per-user brand sets, the hit-day
//! distribution, and trivial baselines.

pub mod baseline;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::log::{ActionRecord, ActionType};
use crate::submission::{AnswerSet, PredictionSet};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Users with at least one predicted brand.
    pub n_pred_users: usize,
    /// Users with at least one answer brand.
    pub n_answer_users: usize,
    pub total_predicted: u64,
    pub total_answer: u64,
    pub total_hits: u64,
}

/// `num / den`, or 0 when the denominator is 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 from raw counts; `2PR / (P + R)` simplifies to `2h / (p + a)`.
pub fn f1_from_counts(hits: u64, predicted: u64, answer: u64) -> f64 {
    ratio(2 * hits, predicted + answer)
}

pub fn evaluate(pred: &PredictionSet, answer: &AnswerSet) -> EvaluationReport {
    let mut total_hits = 0u64;
    for (user, brands) in pred.users() {
        if let Some(truth) = answer.brands(user) {
            total_hits += brands.intersection(truth).count() as u64;
        }
    }
    let total_predicted = pred.n_pairs() as u64;
    let total_answer = answer.n_pairs() as u64;
    let precision = ratio(total_hits, total_predicted);
    let recall = ratio(total_hits, total_answer);
    let f1 = if total_hits == 0 {
        0.0
    } else {
        f1_from_counts(total_hits, total_predicted, total_answer)
    };
    EvaluationReport {
        precision,
        recall,
        f1,
        n_pred_users: pred.n_users(),
        n_answer_users: answer.n_users(),
        total_predicted,
        total_answer,
        total_hits,
    }
}

impl EvaluationReport {
    fn rows(&self) -> [(&'static str, String); 8] {
        [
            ("precision", format!("{:.6}", self.precision)),
            ("recall", format!("{:.6}", self.recall)),
            ("f1", format!("{:.6}", self.f1)),
            ("predicted_users", self.n_pred_users.to_string()),
            ("answer_users", self.n_answer_users.to_string()),
            ("predicted_pairs", self.total_predicted.to_string()),
            ("answer_pairs", self.total_answer.to_string()),
            ("hits", self.total_hits.to_string()),
        ]
    }

    pub fn to_csv(&self) -> String {
        let rows = self.rows();
        let header: Vec<&str> = rows.iter().map(|r| r.0).collect();
        let values: Vec<&str> = rows.iter().map(|r| r.1.as_str()).collect();
        format!("{}\n{}\n", header.join(","), values.join(","))
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in self.rows() {
            writeln!(f, "{name:<16}{value:>14}")?;
        }
        Ok(())
    }
}

/// Hits per day offset in the target span `[start, end)`: slot `i` counts
/// correctly predicted pairs whose first Buy falls on day `start + i`.
pub fn hit_day_histogram(
    pred: &PredictionSet,
    answer_log: &[ActionRecord],
    target_span: (u16, u16),
) -> Vec<u64> {
    let (start, end) = target_span;
    let mut first: HashMap<(u64, u64), u16> = HashMap::new();
    for r in answer_log {
        let d = r.day();
        if r.action == ActionType::Buy && (start..end).contains(&d) {
            first
                .entry((r.user, r.brand))
                .and_modify(|f| *f = (*f).min(d))
                .or_insert(d);
        }
    }
    let mut hist = vec![0u64; usize::from(end.saturating_sub(start))];
    for (u, b) in pred.pairs() {
        if let Some(&d) = first.get(&(u, b)) {
            hist[usize::from(d - start)] += 1;
        }
    }
    hist
}

/// Two-column CSV with 1-based day offsets.
pub fn histogram_csv(hist: &[u64]) -> String {
    let mut s = String::from("day_offset,hits\n");
    for (i, h) in hist.iter().enumerate() {
        s.push_str(&format!("{},{h}\n", i + 1));
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
