//! User-hash sharding and seed derivation.
//!
//! Work inside a stage is split into `n` shards keyed by a hash of the user
//! id. Shards run in parallel and their outputs are merged in shard order or
//! through order-independent reductions, so a stage's output does not depend
//! on the shard count or on the number of worker threads.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn user_hash(user: u64) -> u64 {
    splitmix64(user ^ 0x5bd1_e995_0000_0000)
}

pub fn shard_of(user: u64, shards: usize) -> usize {
    (user_hash(user) % shards.max(1) as u64) as usize
}

/// Derives an independent seed for a labeled substream of `global`.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Splits `items` into `shards` buckets by `key` (a user id), keeping the
/// input order within each bucket.
pub fn partition_by_user<T, F>(items: &[T], shards: usize, key: F) -> Vec<Vec<&T>>
where
    F: Fn(&T) -> u64,
{
    let shards = shards.max(1);
    let mut out: Vec<Vec<&T>> = (0..shards).map(|_| Vec::new()).collect();
    for item in items {
        out[shard_of(key(item), shards)].push(item);
    }
    out
}

/// Runs `f` on every shard in parallel and returns the results in shard order.
pub fn map_shards<T, R, F>(shards: Vec<Vec<T>>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, Vec<T>) -> R + Sync + Send,
{
    shards
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| f(i, s))
        .collect()
}
