//! Independent reference implementations used by the integration tests.
//!
//! Everything here recomputes from raw records with plain loops and sets; none
//! of it goes through the aggregate structures of the library.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmpp::log::{ActionRecord, ActionType, Day};
use tmpp::submission::PredictionSet;

pub fn rec(user: u64, brand: u64, action: ActionType, day: u16) -> ActionRecord {
    ActionRecord::new(user, brand, action, Day::new(day).unwrap())
}

/// A random log of `n` records over a small id space so pairs repeat.
pub fn random_log(rng: &mut ChaCha8Rng, n: usize, users: u64, brands: u64) -> Vec<ActionRecord> {
    (0..n)
        .map(|_| {
            let action = match rng.gen_range(0..10) {
                0..=5 => ActionType::Click,
                6 => ActionType::Buy,
                7 => ActionType::Collect,
                8 => ActionType::Cart,
                _ => ActionType::ALL[rng.gen_range(0..4)],
            };
            rec(
                rng.gen_range(1..=users),
                rng.gen_range(1..=brands),
                action,
                rng.gen_range(0..=122),
            )
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const MONTH_STARTS: [u16; 4] = [0, 32, 67, 95];

fn month_index(day: u16) -> usize {
    MONTH_STARTS.iter().rposition(|&s| day >= s).unwrap()
}

fn div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

const TYPES: [(ActionType, &str); 4] = [
    (ActionType::Click, "click"),
    (ActionType::Buy, "buy"),
    (ActionType::Collect, "collect"),
    (ActionType::Cart, "cart"),
];

/// Brute-force feature values of one (user, brand) keyed by feature name.
pub fn brute_features(
    log: &[ActionRecord],
    user: u64,
    brand: u64,
    lengths: &[u16],
    window_start: u16,
    feature_end: u16,
) -> BTreeMap<String, f64> {
    let span: Vec<&ActionRecord> = log
        .iter()
        .filter(|r| r.day() >= window_start && r.day() < feature_end)
        .collect();
    let of_pair = |r: &&ActionRecord| r.user == user && r.brand == brand;
    let of_user = |r: &&ActionRecord| r.user == user;
    let of_brand = |r: &&ActionRecord| r.brand == brand;
    let mut out = BTreeMap::new();

    for &k in lengths {
        let lo = feature_end.saturating_sub(k).max(window_start);
        let inb: Vec<&ActionRecord> = span.iter().copied().filter(|r| r.day() >= lo).collect();
        let sel = |f: &dyn Fn(&&ActionRecord) -> bool| -> Vec<&ActionRecord> {
            inb.iter().copied().filter(|r| f(r)).collect()
        };
        let pair = sel(&of_pair);
        let usr = sel(&of_user);
        let brd = sel(&of_brand);
        let count = |rs: &[&ActionRecord], t: ActionType| rs.iter().filter(|r| r.action == t).count() as f64;
        let days = |rs: &[&ActionRecord], t: Option<ActionType>| {
            rs.iter()
                .filter(|r| t.is_none_or(|t| r.action == t))
                .map(|r| r.day())
                .collect::<BTreeSet<_>>()
                .len() as f64
        };
        let mut put = |g: &str, name: &str, v: f64| {
            out.insert(format!("{g}_{name}_{k}d"), v);
        };

        for (g, rs) in [("pair", &pair), ("user", &usr), ("brand", &brd)] {
            for (t, n) in TYPES {
                put(g, &format!("{n}_count"), count(rs, t));
                put(g, &format!("{n}_days"), days(rs, Some(t)));
            }
            put(g, "action_count", rs.len() as f64);
            put(g, "active_days", days(rs, None));
            put(g, "buy_conversion", div(count(rs, ActionType::Buy), rs.len() as f64));
            put(
                g,
                "buy_day_conversion",
                div(days(rs, Some(ActionType::Buy)), days(rs, None)),
            );
            for (t, n) in TYPES {
                put(g, &format!("has_{n}"), f64::from(u8::from(count(rs, t) > 0.0)));
            }
            let months: BTreeSet<usize> = rs
                .iter()
                .filter(|r| r.action == ActionType::Buy)
                .map(|r| month_index(r.day()))
                .collect();
            let adjacent = months.iter().any(|m| months.contains(&(m + 1)));
            put(g, "consecutive_buy_months", f64::from(u8::from(adjacent)));
        }

        let last_buy = pair
            .iter()
            .filter(|r| r.action == ActionType::Buy)
            .map(|r| r.day())
            .max();
        let valid = pair
            .iter()
            .filter(|r| r.action == ActionType::Click && last_buy.is_none_or(|b| r.day() > b))
            .count();
        put("pair", "valid_click_count", valid as f64);
        put("pair", "click_share", div(count(&pair, ActionType::Click), count(&usr, ActionType::Click)));
        put("pair", "buy_share", div(count(&pair, ActionType::Buy), count(&usr, ActionType::Buy)));
        put("pair", "action_share", div(pair.len() as f64, usr.len() as f64));

        // user side counts brands, brand side counts users
        for (g, rs, other, suffix) in [
            ("user", &usr, (|r: &ActionRecord| r.brand) as fn(&ActionRecord) -> u64, "brands"),
            ("brand", &brd, (|r: &ActionRecord| r.user) as fn(&ActionRecord) -> u64, "users"),
        ] {
            let distinct = |t: ActionType| {
                rs.iter()
                    .filter(|r| r.action == t)
                    .map(|r| other(r))
                    .collect::<BTreeSet<_>>()
                    .len() as f64
            };
            for (t, n) in TYPES {
                put(g, &format!("distinct_{n}_{suffix}"), distinct(t));
            }
            // first action of each counterparty over the whole span
            let whole: Vec<&ActionRecord> = span
                .iter()
                .copied()
                .filter(|r| if g == "user" { r.user == user } else { r.brand == brand })
                .collect();
            let mut first: BTreeMap<u64, u16> = BTreeMap::new();
            for r in &whole {
                let e = first.entry(other(r)).or_insert(r.day());
                *e = (*e).min(r.day());
            }
            let first_time = first.values().filter(|&&d| d >= lo).count();
            put(g, &format!("first_time_{suffix}"), first_time as f64);
            let single = &suffix[..suffix.len() - 1];
            put(
                g,
                "clicks_per_click_day",
                div(count(rs, ActionType::Click), days(rs, Some(ActionType::Click))),
            );
            put(
                g,
                "buys_per_buy_day",
                div(count(rs, ActionType::Buy), days(rs, Some(ActionType::Buy))),
            );
            put(
                g,
                &format!("clicks_per_click_{single}"),
                div(count(rs, ActionType::Click), distinct(ActionType::Click)),
            );
            put(
                g,
                &format!("buys_per_buy_{single}"),
                div(count(rs, ActionType::Buy), distinct(ActionType::Buy)),
            );
        }
    }

    let sentinel = f64::from(feature_end - window_start + 1);
    for (g, f) in [
        ("pair", &of_pair as &dyn Fn(&&ActionRecord) -> bool),
        ("user", &of_user),
        ("brand", &of_brand),
    ] {
        let rs: Vec<&ActionRecord> = span.iter().copied().filter(|r| f(r)).collect();
        let first = rs.iter().map(|r| r.day()).min();
        let last = rs.iter().map(|r| r.day()).max();
        let last_buy = rs
            .iter()
            .filter(|r| r.action == ActionType::Buy)
            .map(|r| r.day())
            .max();
        let dist = |d: Option<u16>| d.map_or(sentinel, |d| f64::from(feature_end - d));
        let active = match (first, last) {
            (Some(a), Some(b)) => f64::from(b - a + 1),
            _ => 0.0,
        };
        out.insert(format!("{g}_active_span"), active);
        if g == "brand" {
            let mut buys: BTreeMap<u64, u32> = BTreeMap::new();
            for r in rs.iter().filter(|r| r.action == ActionType::Buy) {
                *buys.entry(r.user).or_default() += 1;
            }
            let repeat = buys.values().filter(|&&c| c > 1).count() as f64;
            out.insert("brand_frequent_user_pct".into(), div(repeat, buys.len() as f64));
        } else {
            out.insert(format!("{g}_first_active_distance"), dist(first));
            out.insert(format!("{g}_last_active_distance"), dist(last));
            out.insert(format!("{g}_last_buy_distance"), dist(last_buy));
        }
    }
    out
}

/// Exact rational precision, recall and F1 as (numerator, denominator).
pub struct RationalScores {
    pub precision: (u64, u64),
    pub recall: (u64, u64),
    pub f1: (u64, u64),
    pub hits: u64,
}

/// Counts hits pair by pair over explicit pair lists.
pub fn brute_scores(pred: &[(u64, u64)], answer: &[(u64, u64)]) -> RationalScores {
    let p: BTreeSet<(u64, u64)> = pred.iter().copied().collect();
    let a: BTreeSet<(u64, u64)> = answer.iter().copied().collect();
    let mut hits = 0u64;
    for x in &p {
        for y in &a {
            if x == y {
                hits += 1;
            }
        }
    }
    let np = p.len() as u64;
    let na = a.len() as u64;
    RationalScores {
        precision: (hits, np),
        recall: (hits, na),
        // 2PR/(P+R) = 2h/(np+na)
        f1: (2 * hits, np + na),
        hits,
    }
}

pub fn rational_value((n, d): (u64, u64)) -> f64 {
    if d == 0 || n == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn set_of(pairs: &[(u64, u64)]) -> PredictionSet {
    let mut s = PredictionSet::new();
    for &(u, b) in pairs {
        s.insert(u, b);
    }
    s
}
