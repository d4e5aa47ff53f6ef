//! Per-user brand sets in the submission format.
//!
//! One line per user, `user_id<TAB>brand_id1,brand_id2,...`, brands ascending,
//! users ascending. Answer sets use the same layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    users: BTreeMap<u64, BTreeSet<u64>>,
}

/// Ground-truth purchases of the answer month; same shape as a prediction.
pub type AnswerSet = PredictionSet;

impl PredictionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: u64, brand: u64) -> bool {
        self.users.entry(user).or_default().insert(brand)
    }

    pub fn contains(&self, user: u64, brand: u64) -> bool {
        self.users.get(&user).is_some_and(|b| b.contains(&brand))
    }

    pub fn brands(&self, user: u64) -> Option<&BTreeSet<u64>> {
        self.users.get(&user)
    }

    pub fn users(&self) -> impl Iterator<Item = (u64, &BTreeSet<u64>)> + '_ {
        self.users.iter().map(|(u, b)| (*u, b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.users
            .iter()
            .flat_map(|(u, bs)| bs.iter().map(move |b| (*u, *b)))
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.users.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        for (user, brands) in &self.users {
            write!(out, "{user}\t")?;
            for (i, b) in brands.iter().enumerate() {
                if i > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{b}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file).map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let mut set = PredictionSet::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse(origin, i + 1, msg);
            let (user, brands) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected user_id<TAB>brands".into()))?;
            let user: u64 = user
                .parse()
                .map_err(|e| bad(format!("bad user_id {user:?}: {e}")))?;
            if set.users.contains_key(&user) {
                return Err(bad(format!("user {user} listed twice")));
            }
            let mut any = false;
            for b in brands.split(',') {
                let brand: u64 = b
                    .parse()
                    .map_err(|e| bad(format!("bad brand_id {b:?}: {e}")))?;
                if !set.insert(user, brand) {
                    return Err(bad(format!("duplicate brand {brand} for user {user}")));
                }
                any = true;
            }
            if !any {
                return Err(bad(format!("user {user} has no brands")));
            }
        }
        Ok(set)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }
}

impl FromIterator<(u64, u64)> for PredictionSet {
    fn from_iter<I: IntoIterator<Item = (u64, u64)>>(iter: I) -> Self {
        let mut set = PredictionSet::new();
        for (u, b) in iter {
            set.insert(u, b);
        }
        set
    }
}
