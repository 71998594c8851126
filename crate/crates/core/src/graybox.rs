//! Tophat kernel density estimate of a key set and substitute indexes built
//! from its samples.
//!
//! Bandwidths are in key units. For integer keys the nominal bandwidth is
//! multiplied by `(max - min) / 360`, so the values that suit degree-valued
//! real keys keep the same relative smoothing over 64-bit integer ranges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::IndexConfig;
use crate::error::IndexError;
use crate::key::{Key, KeyKind};
use crate::tree::IndexTree;

/// Reference width for integer bandwidth scaling.
pub const INTEGER_BANDWIDTH_SPAN: f64 = 360.0;

pub const BANDWIDTHS: [f64; 3] = [0.5, 1.0, 1.5];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrayBoxError {
    #[error("a density estimate needs at least one key")]
    Empty,
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    support: Vec<f64>,
    bandwidth: f64,
    kind: KeyKind,
}

/// Fits the estimate. `bandwidth` is nominal; see the module docs for the
/// integer scaling.
pub fn fit_kde<K: Key>(keys: &[K], bandwidth: f64) -> Result<KdeModel, GrayBoxError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(GrayBoxError::Bandwidth(bandwidth));
    }
    if keys.is_empty() {
        return Err(GrayBoxError::Empty);
    }
    let mut support: Vec<f64> = keys.iter().map(|k| k.to_f64()).collect();
    support.sort_by(f64::total_cmp);
    let bandwidth = match K::KIND {
        KeyKind::Real => bandwidth,
        KeyKind::Integer => {
            let span = support[support.len() - 1] - support[0];
            bandwidth * (span / INTEGER_BANDWIDTH_SPAN).max(1.0)
        }
    };
    Ok(KdeModel { support, bandwidth, kind: K::KIND })
}

impl KdeModel {
    /// Effective half-width of the kernel in key units.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// `[min - bw, max + bw]`.
    pub fn bounds(&self) -> (f64, f64) {
        (self.support[0] - self.bandwidth, self.support[self.support.len() - 1] + self.bandwidth)
    }

    pub fn density(&self, x: f64) -> f64 {
        let lo = self.support.partition_point(|&s| s < x - self.bandwidth);
        let hi = self.support.partition_point(|&s| s <= x + self.bandwidth);
        (hi - lo) as f64 / (self.support.len() as f64 * 2.0 * self.bandwidth)
    }

    /// Real-valued samples, sorted ascending.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<f64> = (0..n)
            .map(|_| {
                let s = self.support[rng.random_range(0..self.support.len())];
                s + rng.random_range(-self.bandwidth..=self.bandwidth)
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// Samples as keys, sorted. Integer samples are rounded and exact
    /// repeats are pushed up one unit at a time.
    pub fn sample_keys<K: Key>(&self, n: usize, seed: u64) -> Vec<K> {
        debug_assert_eq!(self.kind, K::KIND);
        let raw = self.sample(n, seed);
        let mut out: Vec<K> = Vec::with_capacity(n);
        for x in raw {
            let mut k = K::from_f64(x);
            if self.kind == KeyKind::Integer {
                if let Some(&prev) = out.last() {
                    if !(k > prev) {
                        k = prev.succ();
                    }
                }
            }
            out.push(k);
        }
        out
    }
}

/// Bulk-loads a substitute index from `l` samples.
pub fn build_substitute<K: Key>(
    model: &KdeModel,
    l: usize,
    config: IndexConfig,
    seed: u64,
) -> Result<IndexTree<K>, IndexError> {
    IndexTree::from_keys(&model.sample_keys::<K>(l, seed), config)
}
