//! Per-pair, per-user and per-brand activity aggregates over one feature span.
//!
//! Day sets are `u128` bitmasks (the window has 123 days), so distinct-day
//! counts inside a bucket are popcounts and merging partial aggregates is an
//! OR plus integer sums, independent of merge order.

use crate::log::{ActionRecord, ActionType, Month};

/// Click, buy, collect, cart, then "any action".
pub const KINDS: usize = 5;
pub const ANY: usize = 4;
pub(crate) const CLICK: usize = 0;
pub(crate) const BUY: usize = 1;

pub type DayMask = u128;

/// Mask of days in `[start, end)`.
pub fn range_mask(start: u16, end: u16) -> DayMask {
    if start >= end {
        return 0;
    }
    let upper = if end >= 128 {
        DayMask::MAX
    } else {
        (1u128 << end) - 1
    };
    upper & !((1u128 << start) - 1)
}

pub fn first_day(mask: DayMask) -> Option<u16> {
    (mask != 0).then(|| mask.trailing_zeros() as u16)
}

pub fn last_day(mask: DayMask) -> Option<u16> {
    (mask != 0).then(|| 127 - mask.leading_zeros() as u16)
}

/// A `[start, end)` date bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bucket {
    pub length: u16,
    pub start: u16,
    pub end: u16,
    pub mask: DayMask,
}

impl Bucket {
    pub fn new(length: u16, window_start: u16, feature_end: u16) -> Self {
        let start = feature_end.saturating_sub(length).max(window_start);
        Bucket {
            length,
            start,
            end: feature_end,
            mask: range_mask(start, feature_end),
        }
    }

    pub fn contains(&self, day: u16) -> bool {
        (self.start..self.end).contains(&day)
    }

    pub fn days(&self, mask: DayMask) -> u32 {
        (mask & self.mask).count_ones()
    }
}

/// True if two adjacent months both contain a day of `buy_mask`.
pub fn consecutive_months(buy_mask: DayMask) -> bool {
    let hit: Vec<bool> = Month::ALL
        .iter()
        .map(|m| buy_mask & range_mask(m.first_day(), m.end()) != 0)
        .collect();
    hit.windows(2).any(|w| w[0] && w[1])
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairAgg {
    pub masks: [DayMask; KINDS],
    pub total_buys: u32,
    /// Per bucket, counts indexed by kind.
    pub counts: Vec<[u32; KINDS]>,
    pub valid_clicks: Vec<u32>,
}

impl PairAgg {
    pub fn empty(n_buckets: usize) -> Self {
        PairAgg {
            counts: vec![[0; KINDS]; n_buckets],
            valid_clicks: vec![0; n_buckets],
            ..PairAgg::default()
        }
    }

    /// Aggregates the records of one pair; every record must lie in the span.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a ActionRecord> + Clone,
        buckets: &[Bucket],
    ) -> Self {
        let mut agg = PairAgg::empty(buckets.len());
        for r in records.clone() {
            let day = r.day();
            let kind = r.action.index();
            agg.masks[kind] |= 1u128 << day;
            agg.masks[ANY] |= 1u128 << day;
            if r.action == ActionType::Buy {
                agg.total_buys += 1;
            }
            for (b, bucket) in buckets.iter().enumerate() {
                if bucket.contains(day) {
                    agg.counts[b][kind] += 1;
                    agg.counts[b][ANY] += 1;
                }
            }
        }
        for (b, bucket) in buckets.iter().enumerate() {
            let last_buy = last_day(agg.masks[BUY] & bucket.mask);
            agg.valid_clicks[b] = records
                .clone()
                .into_iter()
                .filter(|r| {
                    r.action == ActionType::Click
                        && bucket.contains(r.day())
                        && last_buy.is_none_or(|lb| r.day() > lb)
                })
                .count() as u32;
        }
        agg
    }
}

/// Aggregate of a user (over brands) or of a brand (over users).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityAgg {
    pub masks: [DayMask; KINDS],
    pub counts: Vec<[u32; KINDS]>,
    /// Per bucket, counterparties with at least one action of each type.
    pub distinct: Vec<[u32; 4]>,
    /// Per bucket, counterparties whose first action in the span is in the bucket.
    pub first_time: Vec<u32>,
    /// Counterparties with at least one / at least two buys over the span.
    pub buyers: u32,
    pub repeat_buyers: u32,
}

impl EntityAgg {
    pub fn empty(n_buckets: usize) -> Self {
        EntityAgg {
            counts: vec![[0; KINDS]; n_buckets],
            distinct: vec![[0; 4]; n_buckets],
            first_time: vec![0; n_buckets],
            ..EntityAgg::default()
        }
    }

    pub fn add_pair(&mut self, pair: &PairAgg, buckets: &[Bucket]) {
        for k in 0..KINDS {
            self.masks[k] |= pair.masks[k];
        }
        let first = first_day(pair.masks[ANY]);
        for (b, bucket) in buckets.iter().enumerate() {
            for k in 0..KINDS {
                self.counts[b][k] += pair.counts[b][k];
            }
            for k in 0..4 {
                self.distinct[b][k] += u32::from(pair.counts[b][k] > 0);
            }
            if first.is_some_and(|d| bucket.contains(d)) {
                self.first_time[b] += 1;
            }
        }
        self.buyers += u32::from(pair.total_buys > 0);
        self.repeat_buyers += u32::from(pair.total_buys > 1);
    }

    pub fn merge(&mut self, other: &EntityAgg) {
        for k in 0..KINDS {
            self.masks[k] |= other.masks[k];
        }
        for b in 0..self.counts.len() {
            for k in 0..KINDS {
                self.counts[b][k] += other.counts[b][k];
            }
            for k in 0..4 {
                self.distinct[b][k] += other.distinct[b][k];
            }
            self.first_time[b] += other.first_time[b];
        }
        self.buyers += other.buyers;
        self.repeat_buyers += other.repeat_buyers;
    }
}
