use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::log::{ActionRecord, ActionType, Month};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MonthStats {
    pub pairs: u64,
    pub users: u64,
    pub brands: u64,
    /// Indexed by action code.
    pub actions: [u64; 4],
}

impl MonthStats {
    pub fn action_total(&self) -> u64 {
        self.actions.iter().sum()
    }
}

/// Per-month and whole-window counts. Distinct counts in the total column
/// are distinct over the whole window, not sums of the month columns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub months: [MonthStats; 4],
    pub total: MonthStats,
}

pub const ROW_LABELS: [&str; 8] = [
    "(User ID, Brand ID)",
    "User ID",
    "Brand ID",
    "Action Click",
    "Action Buy",
    "Action Collect",
    "Action Cart",
    "Action Total",
];

pub const COLUMN_LABELS: [&str; 5] = ["April", "May", "June", "July", "Date Total"];

#[derive(Default)]
struct Acc {
    pairs: HashSet<(u64, u64)>,
    users: HashSet<u64>,
    brands: HashSet<u64>,
    actions: [u64; 4],
}

impl Acc {
    fn add(&mut self, r: &ActionRecord) {
        self.pairs.insert((r.user, r.brand));
        self.users.insert(r.user);
        self.brands.insert(r.brand);
        self.actions[r.action.index()] += 1;
    }

    fn finish(self) -> MonthStats {
        MonthStats {
            pairs: self.pairs.len() as u64,
            users: self.users.len() as u64,
            brands: self.brands.len() as u64,
            actions: self.actions,
        }
    }
}

pub fn dataset_stats(log: &[ActionRecord]) -> StatsReport {
    let mut months: [Acc; 4] = Default::default();
    let mut total = Acc::default();
    for r in log {
        months[r.day.month().index()].add(r);
        total.add(r);
    }
    StatsReport {
        months: months.map(Acc::finish),
        total: total.finish(),
    }
}

impl StatsReport {
    fn columns(&self) -> impl Iterator<Item = &MonthStats> {
        self.months.iter().chain(std::iter::once(&self.total))
    }

    /// Table rows, each with one value per column label.
    pub fn rows(&self) -> Vec<(&'static str, Vec<u64>)> {
        let get = |f: &dyn Fn(&MonthStats) -> u64| self.columns().map(f).collect::<Vec<_>>();
        let mut rows = vec![
            (ROW_LABELS[0], get(&|m| m.pairs)),
            (ROW_LABELS[1], get(&|m| m.users)),
            (ROW_LABELS[2], get(&|m| m.brands)),
        ];
        for (i, a) in ActionType::ALL.iter().enumerate() {
            let idx = a.index();
            rows.push((ROW_LABELS[3 + i], get(&|m| m.actions[idx])));
        }
        rows.push((ROW_LABELS[7], get(&|m| m.action_total())));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("row,{}\n", COLUMN_LABELS.join(","));
        for (label, values) in self.rows() {
            let vals: Vec<String> = values.iter().map(u64::to_string).collect();
            out.push_str(&format!("\"{label}\",{}\n", vals.join(",")));
        }
        out
    }

    pub fn month(&self, m: Month) -> &MonthStats {
        &self.months[m.index()]
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.rows();
        let label_w = ROW_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
        let mut widths: Vec<usize> = COLUMN_LABELS.iter().map(|c| c.len()).collect();
        for (_, values) in &rows {
            for (w, v) in widths.iter_mut().zip(values) {
                *w = (*w).max(v.to_string().len());
            }
        }
        write!(f, "{:label_w$}", "")?;
        for (c, w) in COLUMN_LABELS.iter().zip(&widths) {
            write!(f, "  {c:>w$}")?;
        }
        writeln!(f)?;
        for (label, values) in rows {
            write!(f, "{label:label_w$}")?;
            for (v, w) in values.iter().zip(&widths) {
                write!(f, "  {v:>w$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
