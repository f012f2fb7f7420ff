//! Seeded randomness and the three stochastic mechanisms: target
//! bootstrapping, class-stratified source sampling and predicate selection.
//!
//! Every logical task owns one [`RngStream`] identified by `(seed, stream_id)`.
//! Draws are taken through `u64` ranges only, so sequences do not depend on
//! the platform's pointer width.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DomainDataset;
use crate::error::{Error, Result};

/// Purpose tags folded into the high byte of a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamTag {
    Candidate = 1,
    Pool = 2,
    Split = 3,
    Cluster = 4,
    Synthetic = 5,
    Baseline = 6,
    Grid = 7,
}

/// Independent, reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    /// Stream for a tagged purpose with two coordinates (e.g. round and source).
    pub fn tagged(seed: u64, tag: StreamTag, major: u64, minor: u64) -> Self {
        assert!(major < 1 << 32 && minor < 1 << 24, "stream coordinates out of range");
        Self::new(seed, ((tag as u64) << 56) | (major << 24) | minor)
    }

    /// Stream for candidate `source` in round `h` of one training run.
    pub fn candidate(seed: u64, h: usize, source: usize) -> Self {
        Self::tagged(seed, StreamTag::Candidate, h as u64, source as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        self.rng.gen_range(0..n as u64) as usize
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// `amount` distinct indices from `0..n` in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, amount: usize) -> Vec<usize> {
        assert!(amount <= n, "cannot draw {amount} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..amount {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(amount);
        pool
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// SplitMix64 finalizer; derives per-trial seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const BOOTSTRAP_REDRAWS: usize = 10;

/// Bootstrap of the labeled target set: `q` draws with replacement.
///
/// A draw containing only one class is redrawn up to ten times. Returns the
/// resampled set and the drawn row indices.
pub fn bootstrap_target(target: &DomainDataset, rng: &mut RngStream) -> Result<(DomainDataset, Vec<usize>)> {
    let q = target.n();
    if q < 2 {
        return Err(Error::InvalidParameter(format!("bootstrap needs q >= 2, got {q}")));
    }
    let labels = target.labels()?;
    for _ in 0..=BOOTSTRAP_REDRAWS {
        let idx: Vec<usize> = (0..q).map(|_| rng.index(q)).collect();
        let first = labels[idx[0]];
        if idx.iter().any(|&i| labels[i] != first) {
            return Ok((target.select(&idx), idx));
        }
    }
    Err(Error::Degenerate(format!(
        "bootstrap of {} stayed single-class after {BOOTSTRAP_REDRAWS} redraws",
        target.name
    )))
}

/// Number of rows kept from a class of size `count` at ratio `gamma`.
pub fn stratum_size(count: usize, gamma: f64) -> usize {
    if count == 0 {
        return 0;
    }
    // the slack keeps e.g. 0.1 * 30 from rounding up to 4
    let raw = (gamma * count as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(count)
}

/// Class-stratified sample without replacement: `ceil(gamma * n_c)` rows per
/// class, returned in original row order.
pub fn proportional_sample_source(source: &DomainDataset, gamma: f64, rng: &mut RngStream) -> Result<DomainDataset> {
    Ok(proportional_sample_indices(source, gamma, rng)?.0)
}

pub(crate) fn proportional_sample_indices(
    source: &DomainDataset,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<(DomainDataset, Vec<usize>)> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let mut keep = Vec::new();
    for class_rows in source.class_indices()? {
        let take = stratum_size(class_rows.len(), gamma);
        keep.extend(
            rng.sample_without_replacement(class_rows.len(), take)
                .into_iter()
                .map(|k| class_rows[k]),
        );
    }
    keep.sort_unstable();
    Ok((source.select(&keep), keep))
}

/// Uniform draw from a non-empty pool.
pub fn draw_predicate<'a, T>(pool: &'a [T], rng: &mut RngStream) -> Result<&'a T> {
    if pool.is_empty() {
        return Err(Error::Empty("predicate pool"));
    }
    Ok(&pool[rng.index(pool.len())])
}
