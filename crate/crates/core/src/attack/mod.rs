//! The three complexity attacks and the probing they share.
//!
//! * [`mck`] plans expansions of data nodes under a key budget.
//! * [`duplicate`] drives the split cascade with copies of one key, and the
//!   consecutive-key clustering baseline.
//! * [`time`] forces repeated retrains with batches of consecutive keys.

pub mod duplicate;
pub mod mck;
pub mod time;

use crate::key::Key;
use crate::tree::IndexTree;

/// Probe budget for locating any accepted key before bisection.
const SEARCH_PROBES: u64 = 1 << 24;

/// Black-box estimate of the accepted key range `[lo, hi]` (inclusive),
/// using only the tree's domain answers. Returns `None` if no accepted key
/// is found within the probe budget.
pub fn probe_domain<K: Key>(tree: &IndexTree<K>) -> Option<(K, K)> {
    let accepts = |bits: u64| tree.check_domain(K::from_ordered(bits)).is_ok();
    let inside = find_accepted(&accepts)?;
    // Largest rejected below `inside` and smallest rejected above it.
    let (mut lo, mut hi) = (0u64, inside);
    if accepts(0) {
        hi = 0;
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if accepts(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let first = hi;
    let (mut lo, mut hi) = (inside, u64::MAX);
    if accepts(u64::MAX) {
        lo = u64::MAX;
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if accepts(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Some((K::from_ordered(first), K::from_ordered(lo)))
}

/// A logarithmic sweep (catches ranges spanning a sixteenth of their own
/// magnitude), then a coarse-to-fine grid over the ordered key space.
fn find_accepted(accepts: &impl Fn(u64) -> bool) -> Option<u64> {
    for e in 0..64 {
        let base = 1u64 << e;
        for j in 0..16 {
            let bits = base + (base >> 4) * j;
            if accepts(bits) {
                return Some(bits);
            }
        }
    }
    let mut probes = 0u64;
    for shift in (0..64).rev() {
        let points = 1u64 << (63 - shift);
        for i in 0..points {
            // Odd multiples only: even ones were probed at a coarser level.
            let bits = (2 * i + 1) << shift;
            if accepts(bits) {
                return Some(bits);
            }
            probes += 1;
            if probes >= SEARCH_PROBES {
                return None;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::IndexConfig;

    #[test]
    fn probing_recovers_float_domain() {
        let keys: Vec<f64> = (0..1000).map(|i| -120.0 + i as f64 * 0.2).collect();
        let tree = IndexTree::from_keys(&keys, IndexConfig::default()).unwrap();
        let (lo, hi) = probe_domain(&tree).unwrap();
        let (dlo, dhi) = tree.domain();
        assert_eq!(lo, dlo);
        assert_eq!(hi, dhi.next_down());
    }

    #[test]
    fn probing_recovers_narrow_integer_domain() {
        let keys: Vec<u64> = (0..1000).map(|i| 3_000 + i * 977).collect();
        let tree = IndexTree::from_keys(&keys, IndexConfig::default()).unwrap();
        let (lo, hi) = probe_domain(&tree).unwrap();
        assert_eq!((lo, hi), (keys[0] - 1, keys[999]));
    }
}
