//! Synthetic behavior logs with a planted purchase process.
//!
//! Each non-crawler user has an activity level and a conversion offset; each
//! brand has a popularity weight and a conversion offset; each (user, brand)
//! pair gets a latent affinity the first time the user shows interest in it.
//! Interest arrives in short episodes of daily clicks with occasional collect
//! and cart events. On every episode day the user buys with a probability
//! that is logistic in the affinity, the decayed click count of the pair and
//! the presence of recent cart / collect events. A buy ends the episode and
//! may schedule a repeat episode on the same brand a few weeks later; an
//! episode that runs out without a buy may be picked up again a few days
//! later, so interest close to a cutoff predicts buys shortly after it.
//!
//! On top of that process, browsing clicks that never convert are spread over
//! the brands a user already knows; their rate is calibrated so the whole log
//! hits a configured click:buy ratio. Crawler users click many random brands
//! every day and never buy.
//!
//! Randomness comes from ChaCha streams keyed by user index, so output is
//! identical for any thread count.

mod stats;

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::{ActionRecord, ActionType, Day, WINDOW_DAYS};

pub use stats::{dataset_stats, MonthStats, StatsReport};

const BRAND_STREAM: u64 = 0;
const CRAWLER_MIN_DAILY_CLICKS: u32 = 5;
const CRAWLER_MAX_DAILY_CLICKS: u32 = 7;
const BUY_INTERCEPT: f64 = -3.6;
const CLICK_WEIGHT: f64 = 1.1;
const CLICK_DECAY: f64 = 0.6;
const CART_MEMORY_DAYS: u16 = 10;
const COLLECT_MEMORY_DAYS: u16 = 21;
const EPISODE_DAYS: std::ops::RangeInclusive<u16> = 2..=8;
const FOLLOW_GAP_DAYS: std::ops::RangeInclusive<u16> = 1..=4;
/// Chance that a spontaneous episode returns to an already-bought brand.
const REVISIT_PROB: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_users: u64,
    pub n_brands: u64,
    pub seed: u64,
    /// Probability that a user is a crawler (many clicks, never buys).
    pub crawler_fraction: f64,
    /// Expected clicks per episode day for a pair with zero affinity.
    pub base_click_rate: f64,
    /// Standard deviation of the latent pair affinity on the logit scale.
    pub conversion_affinity: f64,
    /// Odds multiplier for a buy when the pair was carted recently.
    pub cart_boost: f64,
    /// Odds multiplier for a buy when the pair was collected recently.
    pub collect_boost: f64,
    /// Length of the simulated window in days, starting at 04-15.
    pub days: u16,
    /// Expected new interest episodes per user-day at unit activity.
    pub episode_rate: f64,
    /// Probability that a buy schedules a repeat episode on the same brand.
    pub repeat_prob: f64,
    /// Probability that an episode ending without a buy is picked up again a
    /// few days later.
    pub follow_prob: f64,
    /// Target click:buy ratio of the whole log; `None` disables browsing clicks.
    pub click_buy_ratio: Option<f64>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_users: 10_000,
            n_brands: 200,
            seed: 0,
            crawler_fraction: 0.005,
            base_click_rate: 2.0,
            conversion_affinity: 1.0,
            cart_boost: 4.0,
            collect_boost: 2.0,
            days: WINDOW_DAYS,
            episode_rate: 0.03,
            repeat_prob: 0.1,
            follow_prob: 0.7,
            click_buy_ratio: Some(39.0),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("generate: {msg}")));
        if self.n_users == 0 || self.n_brands == 0 {
            return bad("n_users and n_brands must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crawler_fraction) {
            return bad("crawler_fraction must be in [0, 1]");
        }
        if !(self.base_click_rate >= 1.0 && self.base_click_rate.is_finite()) {
            return bad("base_click_rate must be finite and >= 1");
        }
        if !(self.conversion_affinity >= 0.0 && self.conversion_affinity.is_finite()) {
            return bad("conversion_affinity must be finite and >= 0");
        }
        if !(self.cart_boost > 0.0 && self.cart_boost.is_finite())
            || !(self.collect_boost > 0.0 && self.collect_boost.is_finite())
        {
            return bad("cart_boost and collect_boost must be finite and > 0");
        }
        if self.days == 0 || self.days > WINDOW_DAYS {
            return bad("days must be in 1..=123");
        }
        if !(0.0..=1.0).contains(&self.episode_rate) {
            return bad("episode_rate must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.repeat_prob) || !(0.0..=1.0).contains(&self.follow_prob) {
            return bad("repeat_prob and follow_prob must be in [0, 1]");
        }
        if let Some(r) = self.click_buy_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return bad("click_buy_ratio must be finite and > 0");
            }
        }
        Ok(())
    }
}

fn user_rng(seed: u64, user_index: u64, phase: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + 2 * user_index + phase);
    rng
}

fn user_id(index: u64) -> u64 {
    index + 1
}

fn brand_id(index: usize) -> u64 {
    index as u64 + 1
}

fn is_crawler(config: &GenConfig, rng: &mut ChaCha8Rng) -> bool {
    rng.gen_bool(config.crawler_fraction)
}

/// Ids of the users planted as crawlers, ascending.
pub fn planted_crawlers(config: &GenConfig) -> Result<Vec<u64>> {
    config.validate()?;
    Ok((0..config.n_users)
        .into_par_iter()
        .filter(|&i| is_crawler(config, &mut user_rng(config.seed, i, 0)))
        .map(user_id)
        .collect())
}

struct BrandTable {
    cumulative: Vec<f64>,
    conversion: Vec<f64>,
}

impl BrandTable {
    fn new(config: &GenConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(BRAND_STREAM);
        let n = config.n_brands as usize;
        let mut weights: Vec<f64> = (0..n).map(|r| 1.0 / (r as f64 + 1.0).powf(0.9)).collect();
        weights.shuffle(&mut rng);
        let normal = Normal::new(0.0, 0.5).expect("valid normal");
        let conversion = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        BrandTable {
            cumulative,
            conversion,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("n_brands >= 1");
        let x = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

struct Episode {
    brand: usize,
    days_left: u16,
}

#[derive(Default)]
struct PairState {
    affinity: f64,
    decayed_clicks: f64,
    last_cart: Option<u16>,
    last_collect: Option<u16>,
}

/// Signal-phase output of one user.
struct UserSignal {
    records: Vec<ActionRecord>,
    activity: f64,
    known_brands: Vec<usize>,
    crawler: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn push(records: &mut Vec<ActionRecord>, user: u64, brand: usize, action: ActionType, day: u16) {
    records.push(ActionRecord::new(
        user,
        brand_id(brand),
        action,
        Day::new(day).expect("generator stays in window"),
    ));
}

fn simulate_user(config: &GenConfig, brands: &BrandTable, index: u64) -> UserSignal {
    let mut rng = user_rng(config.seed, index, 0);
    let user = user_id(index);
    let mut records = Vec::new();
    if is_crawler(config, &mut rng) {
        for day in 0..config.days {
            let n = rng.gen_range(CRAWLER_MIN_DAILY_CLICKS..=CRAWLER_MAX_DAILY_CLICKS);
            for _ in 0..n {
                let b = rng.gen_range(0..config.n_brands as usize);
                push(&mut records, user, b, ActionType::Click, day);
            }
        }
        return UserSignal {
            records,
            activity: 0.0,
            known_brands: Vec::new(),
            crawler: true,
        };
    }

    let activity = Normal::<f64>::new(0.0, 0.5)
        .expect("valid normal")
        .sample(&mut rng)
        .exp()
        .clamp(0.25, 4.0);
    let user_offset = Normal::new(0.0, 0.5).expect("valid normal").sample(&mut rng);
    let affinity = Normal::new(0.0, config.conversion_affinity.max(1e-12)).expect("valid normal");
    let start_p = (config.episode_rate * activity).min(1.0);

    let mut pairs: HashMap<usize, PairState> = HashMap::new();
    let mut known: Vec<usize> = Vec::new();
    let mut bought: Vec<usize> = Vec::new();
    let mut episodes: Vec<Episode> = Vec::new();
    let mut repeats: Vec<(u16, usize)> = Vec::new();

    for day in 0..config.days {
        for state in pairs.values_mut() {
            state.decayed_clicks *= CLICK_DECAY;
        }
        let mut starts: Vec<usize> = Vec::new();
        if rng.gen_bool(start_p) {
            let brand = if !bought.is_empty() && rng.gen_bool(REVISIT_PROB) {
                bought[rng.gen_range(0..bought.len())]
            } else {
                brands.sample(&mut rng)
            };
            starts.push(brand);
        }
        repeats.retain(|&(when, brand)| {
            if when == day {
                starts.push(brand);
                false
            } else {
                true
            }
        });
        for brand in starts {
            if episodes.iter().any(|e| e.brand == brand) {
                continue;
            }
            if let Entry::Vacant(slot) = pairs.entry(brand) {
                slot.insert(PairState {
                    affinity: affinity.sample(&mut rng),
                    ..PairState::default()
                });
                known.push(brand);
            }
            let length = rng.gen_range(EPISODE_DAYS);
            episodes.push(Episode {
                brand,
                days_left: length,
            });
        }

        let mut ended = Vec::new();
        for (slot, episode) in episodes.iter_mut().enumerate() {
            let brand = episode.brand;
            let state = pairs.get_mut(&brand).expect("episode pair exists");
            let rate = (config.base_click_rate - 1.0) * (0.5 * state.affinity).exp();
            let clicks = 1 + Poisson::new(rate.max(1e-9))
                .map(|p| p.sample(&mut rng) as u32)
                .unwrap_or(0);
            for _ in 0..clicks {
                push(&mut records, user, brand, ActionType::Click, day);
            }
            state.decayed_clicks += clicks as f64;
            if rng.gen_bool(0.10) {
                push(&mut records, user, brand, ActionType::Collect, day);
                state.last_collect = Some(day);
            }
            if rng.gen_bool(0.08) {
                push(&mut records, user, brand, ActionType::Cart, day);
                state.last_cart = Some(day);
            }
            let mut logit = BUY_INTERCEPT
                + state.affinity
                + user_offset
                + brands.conversion[brand]
                + CLICK_WEIGHT * state.decayed_clicks.ln_1p();
            if state
                .last_cart
                .is_some_and(|d| day - d < CART_MEMORY_DAYS)
            {
                logit += config.cart_boost.ln();
            }
            if state
                .last_collect
                .is_some_and(|d| day - d < COLLECT_MEMORY_DAYS)
            {
                logit += config.collect_boost.ln();
            }
            if rng.gen_bool(sigmoid(logit)) {
                push(&mut records, user, brand, ActionType::Buy, day);
                if rng.gen_bool(0.15) {
                    push(&mut records, user, brand, ActionType::Buy, day);
                }
                if !bought.contains(&brand) {
                    bought.push(brand);
                }
                if rng.gen_bool(config.repeat_prob) {
                    repeats.push((day + 20 + rng.gen_range(0..21u16), brand));
                }
                ended.push(slot);
                continue;
            }
            episode.days_left -= 1;
            if episode.days_left == 0 {
                if rng.gen_bool(config.follow_prob) {
                    repeats.push((day + rng.gen_range(FOLLOW_GAP_DAYS), brand));
                }
                ended.push(slot);
            }
        }
        for slot in ended.into_iter().rev() {
            episodes.swap_remove(slot);
        }
    }

    UserSignal {
        records,
        activity,
        known_brands: known,
        crawler: false,
    }
}

fn add_browsing(config: &GenConfig, index: u64, signal: &mut UserSignal, rate: f64) {
    if signal.crawler || signal.known_brands.is_empty() || rate <= 0.0 {
        return;
    }
    let mut rng = user_rng(config.seed, index, 1);
    let per_day = Poisson::new(rate * signal.activity).expect("positive rate");
    let user = user_id(index);
    let mut first_seen: HashMap<usize, u16> = HashMap::new();
    for r in &signal.records {
        let b = (r.brand - 1) as usize;
        first_seen.entry(b).or_insert(r.day());
    }
    for day in 0..config.days {
        let n = per_day.sample(&mut rng) as u32;
        if n == 0 {
            continue;
        }
        let eligible: Vec<usize> = signal
            .known_brands
            .iter()
            .copied()
            .filter(|b| first_seen[b] <= day)
            .collect();
        if eligible.is_empty() {
            continue;
        }
        for _ in 0..n {
            let b = eligible[rng.gen_range(0..eligible.len())];
            push(&mut signal.records, user, b, ActionType::Click, day);
        }
    }
}

/// Generates a synthetic log in canonical order (user, day, brand, action).
pub fn generate(config: &GenConfig) -> Result<Vec<ActionRecord>> {
    config.validate()?;
    let brands = BrandTable::new(config);
    let mut users: Vec<UserSignal> = (0..config.n_users)
        .into_par_iter()
        .map(|i| simulate_user(config, &brands, i))
        .collect();

    if let Some(target) = config.click_buy_ratio {
        let (mut clicks, mut buys) = (0u64, 0u64);
        let mut exposure = 0.0;
        for u in &users {
            for r in &u.records {
                match r.action {
                    ActionType::Click => clicks += 1,
                    ActionType::Buy => buys += 1,
                    _ => {}
                }
            }
            if !u.crawler && !u.known_brands.is_empty() {
                let first = u.records.first().map_or(config.days, |r| r.day());
                exposure += u.activity * f64::from(config.days - first);
            }
        }
        let deficit = target * buys as f64 - clicks as f64;
        if deficit > 0.0 && exposure > 0.0 {
            let rate = deficit / exposure;
            users
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, u)| add_browsing(config, i as u64, u, rate));
        }
    }

    let mut records: Vec<ActionRecord> = users.into_iter().flat_map(|u| u.records).collect();
    records.par_sort_unstable_by_key(ActionRecord::canonical_key);
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small(n_users: u64) -> GenConfig {
        GenConfig {
            n_users,
            n_brands: 50,
            seed: 11,
            ..GenConfig::default()
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let mut c = small(0);
        assert!(generate(&c).is_err());
        c.n_users = 10;
        c.crawler_fraction = 1.5;
        assert!(matches!(generate(&c), Err(Error::Config(_))));
        c.crawler_fraction = 0.1;
        c.days = 200;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn deterministic_for_seed_and_threads() {
        let c = small(300);
        let a = generate(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| generate(&c).unwrap());
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        crate::log::write_records(&mut buf_a, &a).unwrap();
        crate::log::write_records(&mut buf_b, &b).unwrap();
        assert_eq!(buf_a, buf_b);
        let other = generate(&GenConfig { seed: 12, ..c }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn output_is_canonically_sorted_and_in_window() {
        let log = generate(&small(200)).unwrap();
        assert!(log
            .windows(2)
            .all(|w| w[0].canonical_key() <= w[1].canonical_key()));
        assert!(log.iter().all(|r| r.day() < WINDOW_DAYS));
    }

    #[test]
    fn planted_crawlers_click_a_lot_and_never_buy() {
        let c = GenConfig {
            crawler_fraction: 0.05,
            ..small(1000)
        };
        let log = generate(&c).unwrap();
        let mut per_user: HashMap<u64, (u64, u64)> = HashMap::new();
        for r in &log {
            let e = per_user.entry(r.user).or_default();
            match r.action {
                ActionType::Click => e.0 += 1,
                ActionType::Buy => e.1 += 1,
                _ => {}
            }
        }
        let mut heavy: Vec<u64> = per_user
            .iter()
            .filter(|(_, &(c, b))| c > 500 && b == 0)
            .map(|(u, _)| *u)
            .collect();
        heavy.sort_unstable();
        let planted = planted_crawlers(&c).unwrap();
        assert_eq!(heavy, planted);
        // ~50 expected at 5% of 1000 users.
        assert!((30..=70).contains(&planted.len()), "{}", planted.len());
    }
}
