//! Time-dependent instances: candidate (user, brand) pairs at a feature-span
//! end, with targets read from the following target span.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::{ActionRecord, ActionType, Month};
use crate::shard;

/// Length of a target span whose start is not a month boundary.
pub const DEFAULT_TARGET_DAYS: u16 = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fixed,
    Sliding,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fixed => "fixed",
            Scheme::Sliding => "sliding",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Scheme::Fixed),
            "sliding" => Ok(Scheme::Sliding),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// The target span following `feature_end`: the month starting there when
/// `feature_end` is a month boundary, otherwise the next 28 days.
pub fn target_span(feature_end: u16) -> (u16, u16) {
    match Month::starting_at(feature_end) {
        Some(m) => (m.first_day(), m.end()),
        None => (feature_end, feature_end + DEFAULT_TARGET_DAYS),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpanConfig {
    pub scheme: Scheme,
    /// Exclusive feature-span ends; one for Fixed, several for Sliding.
    pub feature_ends: Vec<u16>,
    /// First day of every feature span.
    pub window_start: u16,
    /// Exclusive end of the visible log; no target span may pass it.
    pub window_end: u16,
}

impl TimeSpanConfig {
    pub fn fixed(feature_end: u16, window_start: u16, window_end: u16) -> Self {
        TimeSpanConfig {
            scheme: Scheme::Fixed,
            feature_ends: vec![feature_end],
            window_start,
            window_end,
        }
    }

    pub fn sliding(feature_ends: Vec<u16>, window_start: u16, window_end: u16) -> Self {
        TimeSpanConfig {
            scheme: Scheme::Sliding,
            feature_ends,
            window_start,
            window_end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("time spans: {msg}")));
        if self.feature_ends.is_empty() {
            return bad("no feature ends".into());
        }
        if self.scheme == Scheme::Fixed && self.feature_ends.len() != 1 {
            return bad("fixed scheme takes exactly one feature end".into());
        }
        if self.feature_ends.windows(2).any(|w| w[0] >= w[1]) {
            return bad("feature ends must be strictly increasing".into());
        }
        for &end in &self.feature_ends {
            if end <= self.window_start {
                return bad(format!("feature end {end} leaves an empty feature span"));
            }
            let (_, target_end) = target_span(end);
            if target_end > self.window_end {
                return bad(format!(
                    "target span of feature end {end} runs to day {target_end}, past the visible log end {}",
                    self.window_end
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub label: u8,
    pub buy_count: u32,
}

impl Target {
    pub fn from_buys(buy_count: u32) -> Self {
        Target {
            label: u8::from(buy_count > 0),
            buy_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub user: u64,
    pub brand: u64,
    pub feature_end: u16,
    pub features: Vec<f32>,
    pub target: Option<Target>,
}

impl Instance {
    pub fn key(&self) -> (u16, u64, u64) {
        (self.feature_end, self.user, self.brand)
    }

    pub fn label(&self) -> Option<u8> {
        self.target.map(|t| t.label)
    }
}

/// Pairs with at least one action in `[window_start, feature_end)`, sorted.
pub fn candidate_pairs(
    log: &[ActionRecord],
    window_start: u16,
    feature_end: u16,
) -> BTreeSet<(u64, u64)> {
    log.iter()
        .filter(|r| (window_start..feature_end).contains(&r.day()))
        .map(|r| (r.user, r.brand))
        .collect()
}

/// Instance skeletons for `pairs` with targets counted from Buy records in the
/// half-open `target_span`.
pub fn assign_targets(
    pairs: &BTreeSet<(u64, u64)>,
    log: &[ActionRecord],
    feature_end: u16,
    target_span: (u16, u16),
) -> Vec<Instance> {
    let mut buys: HashMap<(u64, u64), u32> = HashMap::new();
    for r in log {
        if r.action == ActionType::Buy && (target_span.0..target_span.1).contains(&r.day()) {
            *buys.entry((r.user, r.brand)).or_default() += 1;
        }
    }
    pairs
        .iter()
        .map(|&(user, brand)| Instance {
            user,
            brand,
            feature_end,
            features: Vec::new(),
            target: Some(Target::from_buys(
                buys.get(&(user, brand)).copied().unwrap_or(0),
            )),
        })
        .collect()
}

fn per_shard<F>(log: &[ActionRecord], shards: usize, f: F) -> Vec<Instance>
where
    F: Fn(&[ActionRecord]) -> Vec<Instance> + Sync + Send,
{
    let parts = shard::partition_by_user(log, shards, |r| r.user);
    let mut out: Vec<Instance> = shard::map_shards(parts, |_, recs| {
        let recs: Vec<ActionRecord> = recs.into_iter().copied().collect();
        f(&recs)
    })
    .into_iter()
    .flatten()
    .collect();
    out.sort_unstable_by_key(Instance::key);
    out
}

/// Training skeletons: one instance per candidate pair per feature end,
/// sorted by (feature_end, user, brand).
pub fn build_training_set(
    log: &[ActionRecord],
    config: &TimeSpanConfig,
    shards: usize,
) -> Result<Vec<Instance>> {
    config.validate()?;
    Ok(per_shard(log, shards, |recs| {
        config
            .feature_ends
            .iter()
            .flat_map(|&end| {
                let pairs = candidate_pairs(recs, config.window_start, end);
                assign_targets(&pairs, recs, end, target_span(end))
            })
            .collect()
    }))
}

/// Prediction skeletons at the end of the visible log; no targets.
pub fn build_prediction_set(
    log: &[ActionRecord],
    window_start: u16,
    window_end: u16,
    shards: usize,
) -> Vec<Instance> {
    per_shard(log, shards, |recs| {
        candidate_pairs(recs, window_start, window_end)
            .into_iter()
            .map(|(user, brand)| Instance {
                user,
                brand,
                feature_end: window_end,
                features: Vec::new(),
                target: None,
            })
            .collect()
    })
}

/// Writes instances as `user<TAB>brand<TAB>feature_end<TAB>label<TAB>buy_count<TAB>f1,f2,...`.
/// Absent targets are written as `-`.
pub fn write_instances_to<W: Write>(out: W, instances: &[Instance]) -> std::io::Result<()> {
    let mut out = BufWriter::with_capacity(1 << 20, out);
    let mut line = String::new();
    for inst in instances {
        line.clear();
        let _ = write!(line, "{}\t{}\t{}\t", inst.user, inst.brand, inst.feature_end);
        match inst.target {
            Some(t) => {
                let _ = write!(line, "{}\t{}\t", t.label, t.buy_count);
            }
            None => line.push_str("-\t-\t"),
        }
        for (i, v) in inst.features.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v}");
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_instances_to(file, instances).map_err(|e| Error::io(path, e))
}

fn parse_instance(line: &str) -> std::result::Result<Instance, String> {
    let mut f = line.splitn(6, '\t');
    let mut next = |name: &str| f.next().ok_or_else(|| format!("missing field {name}"));
    let user = next("user_id")?;
    let brand = next("brand_id")?;
    let end = next("feature_end")?;
    let label = next("label")?;
    let count = next("buy_count")?;
    let feats = next("features")?;
    let num = |s: &str, name: &str| s.parse::<u64>().map_err(|e| format!("bad {name} {s:?}: {e}"));
    let target = match (label, count) {
        ("-", "-") => None,
        (l, c) => {
            let label = num(l, "label")?;
            let buy_count = num(c, "buy_count")?;
            if label > 1 || (label == 1) != (buy_count > 0) {
                return Err(format!("inconsistent label {label} and buy_count {buy_count}"));
            }
            Some(Target::from_buys(buy_count as u32))
        }
    };
    let features = if feats.is_empty() {
        Vec::new()
    } else {
        feats
            .split(',')
            .map(|v| v.parse::<f32>().map_err(|e| format!("bad feature {v:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?
    };
    Ok(Instance {
        user: num(user, "user_id")?,
        brand: num(brand, "brand_id")?,
        feature_end: num(end, "feature_end")? as u16,
        features,
        target,
    })
}

pub fn read_instances_from<R: BufRead>(input: R, origin: &Path) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    let mut width = None;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.is_empty() {
            continue;
        }
        let inst = parse_instance(&line).map_err(|m| Error::parse(origin, i + 1, m))?;
        match width {
            None => width = Some(inst.features.len()),
            Some(w) if w != inst.features.len() => {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected {w} features, found {}", inst.features.len()),
                ))
            }
            _ => {}
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_instances_from(BufReader::with_capacity(1 << 20, file), path)
}

/// Magic bytes opening a binary instance file.
pub const BINARY_MAGIC: &[u8; 8] = b"TMPPINST";
pub const BINARY_VERSION: u32 = 1;
const NO_TARGET: u32 = u32::MAX;

/// Writes instances in the binary layout, all integers little-endian:
///
/// ```text
/// magic "TMPPINST" | version u32 | rows u64 | width u32
/// per row: user u64 | brand u64 | feature_end u16 | buy_count u32 | width x f32
/// ```
///
/// `buy_count` is `u32::MAX` for an absent target. Feature values keep their
/// exact bits.
pub fn write_instances_bin_to<W: Write>(out: W, instances: &[Instance]) -> Result<()> {
    let width = instances.first().map_or(0, |i| i.features.len());
    if instances.iter().any(|i| i.features.len() != width) {
        return Err(Error::Schema("instances differ in feature width".into()));
    }
    let io = |e| Error::io("<binary instances>", e);
    let mut out = BufWriter::with_capacity(1 << 20, out);
    out.write_all(BINARY_MAGIC).map_err(io)?;
    out.write_all(&BINARY_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(instances.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&(width as u32).to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(22 + 4 * width);
    for inst in instances {
        buf.clear();
        buf.extend_from_slice(&inst.user.to_le_bytes());
        buf.extend_from_slice(&inst.brand.to_le_bytes());
        buf.extend_from_slice(&inst.feature_end.to_le_bytes());
        let count = inst.target.map_or(NO_TARGET, |t| t.buy_count);
        buf.extend_from_slice(&count.to_le_bytes());
        for v in &inst.features {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_instances_bin(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_instances_bin_to(file, instances).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_instances_bin_from<R: Read>(input: R, origin: &Path) -> Result<Vec<Instance>> {
    let mut input = BufReader::with_capacity(1 << 20, input);
    let bad = |msg: &str| Error::parse(origin, 0, msg.to_string());
    let mut header = [0u8; 24];
    input
        .read_exact(&mut header)
        .map_err(|_| bad("truncated header"))?;
    if &header[..8] != BINARY_MAGIC {
        return Err(bad("not a binary instance file"));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(header[20..24].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; 22 + 4 * width];
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        input
            .read_exact(&mut buf)
            .map_err(|_| Error::parse(origin, i + 1, "truncated row"))?;
        let count = u32::from_le_bytes(buf[18..22].try_into().unwrap());
        out.push(Instance {
            user: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            brand: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
            feature_end: u16::from_le_bytes(buf[16..18].try_into().unwrap()),
            target: (count != NO_TARGET).then(|| Target::from_buys(count)),
            features: buf[22..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| Error::io(origin, e))? != 0 {
        return Err(bad("trailing bytes after the last row"));
    }
    Ok(out)
}

pub fn read_instances_bin(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_instances_bin_from(file, path)
}
