//! Feature extraction for (user, brand) instances.
//!
//! Every instance gets pair, user and brand features. Counting, ratio and flag
//! features are computed once per date bucket (the latest `k` days before the
//! feature end); global features use the whole feature span. The vector
//! layout is:
//!
//! ```text
//! for each bucket: count(pair, user, brand), ratio(pair, user, brand), flag(pair, user, brand)
//! then: global(pair, user, brand)
//! ```
//!
//! Zero denominators give ratio 0. A missing purchase gives the sentinel
//! distance `span_length + 1`.

pub mod aggregate;
mod schema;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::log::ActionRecord;
use crate::shard;

use aggregate::{first_day, last_day, Bucket, EntityAgg, PairAgg, ANY, BUY, CLICK, KINDS};
pub use schema::{FeatureDesc, FeatureSchema, Family, Granularity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DateBucketSet {
    pub lengths: Vec<u16>,
}

impl Default for DateBucketSet {
    fn default() -> Self {
        DateBucketSet {
            lengths: vec![1, 3, 7, 15, 30, 1000],
        }
    }
}

impl DateBucketSet {
    pub fn new(lengths: Vec<u16>) -> Result<Self> {
        let set = DateBucketSet { lengths };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths[0] == 0 {
            return Err(Error::Config("buckets: need at least one positive length".into()));
        }
        if self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("buckets: lengths must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn buckets(&self, window_start: u16, feature_end: u16) -> Vec<Bucket> {
        self.lengths
            .iter()
            .map(|&k| Bucket::new(k, window_start, feature_end))
            .collect()
    }
}

/// Aggregated history of one entity at one granularity.
#[derive(Debug, Clone, Copy)]
pub enum History<'a> {
    Pair(&'a PairAgg),
    User(&'a EntityAgg),
    Brand(&'a EntityAgg),
}

impl History<'_> {
    fn masks(&self) -> &[u128; KINDS] {
        match self {
            History::Pair(p) => &p.masks,
            History::User(e) | History::Brand(e) => &e.masks,
        }
    }

    fn counts(&self, b: usize) -> &[u32; KINDS] {
        match self {
            History::Pair(p) => &p.counts[b],
            History::User(e) | History::Brand(e) => &e.counts[b],
        }
    }
}

const COUNT_NAMES: [&str; 5] = [
    "click_count",
    "buy_count",
    "collect_count",
    "cart_count",
    "action_count",
];
const DAY_NAMES: [&str; 5] = [
    "click_days",
    "buy_days",
    "collect_days",
    "cart_days",
    "active_days",
];
const USER_DISTINCT: [&str; 5] = [
    "distinct_click_brands",
    "distinct_buy_brands",
    "distinct_collect_brands",
    "distinct_cart_brands",
    "first_time_brands",
];
const BRAND_DISTINCT: [&str; 5] = [
    "distinct_click_users",
    "distinct_buy_users",
    "distinct_collect_users",
    "distinct_cart_users",
    "first_time_users",
];
const FLAG_NAMES: [&str; 4] = ["has_click", "has_buy", "has_collect", "has_cart"];

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        f64::from(num) / f64::from(den)
    }
}

fn counting_into(h: History, b: usize, bucket: &Bucket, out: &mut dyn FnMut(&'static str, f64)) {
    let counts = h.counts(b);
    for k in 0..KINDS {
        out(COUNT_NAMES[k], f64::from(counts[k]));
    }
    for k in 0..KINDS {
        out(DAY_NAMES[k], f64::from(bucket.days(h.masks()[k])));
    }
    match h {
        History::Pair(p) => out("valid_click_count", f64::from(p.valid_clicks[b])),
        History::User(e) | History::Brand(e) => {
            let names = if matches!(h, History::User(_)) {
                &USER_DISTINCT
            } else {
                &BRAND_DISTINCT
            };
            for k in 0..4 {
                out(names[k], f64::from(e.distinct[b][k]));
            }
            out(names[4], f64::from(e.first_time[b]));
        }
    }
}

/// Counting features of one history within bucket `b`.
pub fn counting_features(h: History, b: usize, bucket: &Bucket) -> Vec<(&'static str, f64)> {
    let mut v = Vec::new();
    counting_into(h, b, bucket, &mut |n, x| v.push((n, x)));
    v
}

fn conversion_into(h: History, b: usize, bucket: &Bucket, out: &mut dyn FnMut(&'static str, f64)) {
    let c = h.counts(b);
    let m = h.masks();
    out("buy_conversion", ratio(c[BUY], c[ANY]));
    out(
        "buy_day_conversion",
        ratio(bucket.days(m[BUY]), bucket.days(m[ANY])),
    );
}

fn ratio_into(
    g: Granularity,
    pair: &PairAgg,
    user: &EntityAgg,
    brand: &EntityAgg,
    b: usize,
    bucket: &Bucket,
    out: &mut dyn FnMut(&'static str, f64),
) {
    match g {
        Granularity::Pair => {
            conversion_into(History::Pair(pair), b, bucket, out);
            let (p, u) = (&pair.counts[b], &user.counts[b]);
            out("click_share", ratio(p[CLICK], u[CLICK]));
            out("buy_share", ratio(p[BUY], u[BUY]));
            out("action_share", ratio(p[ANY], u[ANY]));
        }
        Granularity::User | Granularity::Brand => {
            let (e, h, names) = if g == Granularity::User {
                (
                    user,
                    History::User(user),
                    ["clicks_per_click_brand", "buys_per_buy_brand"],
                )
            } else {
                (
                    brand,
                    History::Brand(brand),
                    ["clicks_per_click_user", "buys_per_buy_user"],
                )
            };
            conversion_into(h, b, bucket, out);
            let c = &e.counts[b];
            out(
                "clicks_per_click_day",
                ratio(c[CLICK], bucket.days(e.masks[CLICK])),
            );
            out("buys_per_buy_day", ratio(c[BUY], bucket.days(e.masks[BUY])));
            out(names[0], ratio(c[CLICK], e.distinct[b][CLICK]));
            out(names[1], ratio(c[BUY], e.distinct[b][BUY]));
        }
    }
}

/// Ratio features at granularity `g` within bucket `b`. Pair ratios include
/// the pair-to-user shares.
pub fn ratio_features(
    g: Granularity,
    pair: &PairAgg,
    user: &EntityAgg,
    brand: &EntityAgg,
    b: usize,
    bucket: &Bucket,
) -> Vec<(&'static str, f64)> {
    let mut v = Vec::new();
    ratio_into(g, pair, user, brand, b, bucket, &mut |n, x| v.push((n, x)));
    v
}

fn flag_into(h: History, b: usize, bucket: &Bucket, out: &mut dyn FnMut(&'static str, f64)) {
    let c = h.counts(b);
    for k in 0..4 {
        out(FLAG_NAMES[k], f64::from(u8::from(c[k] > 0)));
    }
    let buys = h.masks()[BUY] & bucket.mask;
    out(
        "consecutive_buy_months",
        f64::from(u8::from(aggregate::consecutive_months(buys))),
    );
}

/// Flag features within bucket `b`; the consecutive-purchase flag looks for
/// buys in two adjacent named months inside the bucket.
pub fn flag_features(h: History, b: usize, bucket: &Bucket) -> Vec<(&'static str, f64)> {
    let mut v = Vec::new();
    flag_into(h, b, bucket, &mut |n, x| v.push((n, x)));
    v
}

fn global_into(
    h: History,
    window_start: u16,
    feature_end: u16,
    out: &mut dyn FnMut(&'static str, f64),
) {
    let sentinel = f64::from(feature_end - window_start + 1);
    let m = h.masks();
    let first = first_day(m[ANY]);
    let last = last_day(m[ANY]);
    let dist = |d: Option<u16>| d.map_or(sentinel, |d| f64::from(feature_end - d));
    let span = match (first, last) {
        (Some(f), Some(l)) => f64::from(l - f + 1),
        _ => 0.0,
    };
    match h {
        History::Pair(_) | History::User(_) => {
            out("first_active_distance", dist(first));
            out("last_active_distance", dist(last));
            out("last_buy_distance", dist(last_day(m[BUY])));
            out("active_span", span);
        }
        History::Brand(e) => {
            out("active_span", span);
            out("frequent_user_pct", ratio(e.repeat_buyers, e.buyers));
        }
    }
}

/// Bucket-independent features over `[window_start, feature_end)`.
pub fn global_features(
    h: History,
    window_start: u16,
    feature_end: u16,
) -> Vec<(&'static str, f64)> {
    let mut v = Vec::new();
    global_into(h, window_start, feature_end, &mut |n, x| v.push((n, x)));
    v
}

/// Emits every feature of one instance in schema order.
fn emit_all(
    pair: &PairAgg,
    user: &EntityAgg,
    brand: &EntityAgg,
    buckets: &[Bucket],
    window_start: u16,
    feature_end: u16,
    out: &mut dyn FnMut(Granularity, Family, Option<u16>, &'static str, f64),
) {
    let hist = |g| match g {
        Granularity::Pair => History::Pair(pair),
        Granularity::User => History::User(user),
        Granularity::Brand => History::Brand(brand),
    };
    for (b, bucket) in buckets.iter().enumerate() {
        let k = Some(bucket.length);
        for g in Granularity::ALL {
            counting_into(hist(g), b, bucket, &mut |n, x| out(g, Family::Count, k, n, x));
        }
        for g in Granularity::ALL {
            ratio_into(g, pair, user, brand, b, bucket, &mut |n, x| {
                out(g, Family::Ratio, k, n, x)
            });
        }
        for g in Granularity::ALL {
            flag_into(hist(g), b, bucket, &mut |n, x| out(g, Family::Flag, k, n, x));
        }
    }
    for g in Granularity::ALL {
        global_into(hist(g), window_start, feature_end, &mut |n, x| {
            out(g, Family::Global, None, n, x)
        });
    }
}

/// The feature schema produced by `extract` for these buckets.
pub fn schema(buckets: &DateBucketSet) -> FeatureSchema {
    let n = buckets.lengths.len();
    let span = buckets.buckets(0, 1);
    let mut features = Vec::new();
    emit_all(
        &PairAgg::empty(n),
        &EntityAgg::empty(n),
        &EntityAgg::empty(n),
        &span,
        0,
        1,
        &mut |granularity, family, bucket, base, _| {
            features.push(FeatureDesc {
                granularity,
                family,
                base: base.to_string(),
                bucket,
            })
        },
    );
    FeatureSchema { features }
}

/// Pair, user and brand aggregates of one feature span.
pub struct SpanAggregates {
    pub window_start: u16,
    pub feature_end: u16,
    pub buckets: Vec<Bucket>,
    shards: usize,
    pairs: Vec<HashMap<(u64, u64), PairAgg>>,
    users: Vec<HashMap<u64, EntityAgg>>,
    brands: HashMap<u64, EntityAgg>,
    empty_pair: PairAgg,
    empty_entity: EntityAgg,
}

impl SpanAggregates {
    /// Aggregates records in `[window_start, feature_end)`. Pairs and users are
    /// built per user-hash shard; brand partials are summed across shards.
    pub fn build(
        log: &[ActionRecord],
        buckets: &DateBucketSet,
        window_start: u16,
        feature_end: u16,
        shards: usize,
    ) -> Self {
        let shards = shards.max(1);
        let bucket_list = buckets.buckets(window_start, feature_end);
        let n = bucket_list.len();
        let in_span: Vec<&ActionRecord> = log
            .iter()
            .filter(|r| (window_start..feature_end).contains(&r.day()))
            .collect();
        let parts = shard::partition_by_user(&in_span, shards, |r| r.user);
        let per_shard = shard::map_shards(parts, |_, mut recs| {
            recs.sort_unstable_by_key(|r| (r.user, r.brand, r.day(), r.action));
            let mut pairs: HashMap<(u64, u64), PairAgg> = HashMap::new();
            let mut users: HashMap<u64, EntityAgg> = HashMap::new();
            let mut brands: HashMap<u64, EntityAgg> = HashMap::new();
            for run in recs.chunk_by(|a, b| (a.user, a.brand) == (b.user, b.brand)) {
                let (u, b) = (run[0].user, run[0].brand);
                let agg = PairAgg::from_records(run.iter().copied().copied(), &bucket_list);
                users
                    .entry(u)
                    .or_insert_with(|| EntityAgg::empty(n))
                    .add_pair(&agg, &bucket_list);
                brands
                    .entry(b)
                    .or_insert_with(|| EntityAgg::empty(n))
                    .add_pair(&agg, &bucket_list);
                pairs.insert((u, b), agg);
            }
            (pairs, users, brands)
        });
        let mut all_pairs = Vec::with_capacity(shards);
        let mut all_users = Vec::with_capacity(shards);
        let mut brands: HashMap<u64, EntityAgg> = HashMap::new();
        for (p, u, b) in per_shard {
            all_pairs.push(p);
            all_users.push(u);
            for (id, partial) in b {
                match brands.get_mut(&id) {
                    Some(acc) => acc.merge(&partial),
                    None => {
                        brands.insert(id, partial);
                    }
                }
            }
        }
        SpanAggregates {
            window_start,
            feature_end,
            buckets: bucket_list,
            shards,
            pairs: all_pairs,
            users: all_users,
            brands,
            empty_pair: PairAgg::empty(n),
            empty_entity: EntityAgg::empty(n),
        }
    }

    pub fn pair(&self, user: u64, brand: u64) -> &PairAgg {
        self.pairs[shard::shard_of(user, self.shards)]
            .get(&(user, brand))
            .unwrap_or(&self.empty_pair)
    }

    pub fn user(&self, user: u64) -> &EntityAgg {
        self.users[shard::shard_of(user, self.shards)]
            .get(&user)
            .unwrap_or(&self.empty_entity)
    }

    pub fn brand(&self, brand: u64) -> &EntityAgg {
        self.brands.get(&brand).unwrap_or(&self.empty_entity)
    }

    /// Full feature vector of (user, brand) at this span's end.
    pub fn vector(&self, user: u64, brand: u64, out: &mut Vec<f32>) {
        out.clear();
        emit_all(
            self.pair(user, brand),
            self.user(user),
            self.brand(brand),
            &self.buckets,
            self.window_start,
            self.feature_end,
            &mut |_, _, _, _, x| out.push(x as f32),
        );
    }
}

/// Fills the feature vector of every instance from the log records before its
/// feature end and returns the shared schema.
pub fn extract(
    instances: &mut [Instance],
    log: &[ActionRecord],
    buckets: &DateBucketSet,
    window_start: u16,
    shards: usize,
) -> Result<FeatureSchema> {
    buckets.validate()?;
    let schema = schema(buckets);
    let ends: BTreeSet<u16> = instances.iter().map(|i| i.feature_end).collect();
    for end in ends {
        if end <= window_start {
            return Err(Error::Config(format!(
                "feature end {end} is not after window start {window_start}"
            )));
        }
        let aggs = SpanAggregates::build(log, buckets, window_start, end, shards);
        instances
            .par_iter_mut()
            .filter(|i| i.feature_end == end)
            .for_each(|inst| {
                let mut v = Vec::with_capacity(schema.len());
                aggs.vector(inst.user, inst.brand, &mut v);
                inst.features = v;
            });
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
    Ok(schema)
}
