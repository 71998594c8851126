//! Internal-node space attack. Copies of one key pile up contiguously in one
//! data node; once it turns catastrophic, every split moves all copies into
//! one half of the key range and the new child is catastrophic again, so the
//! parent's child table doubles on every step until memory runs out.
//!
//! The clustering baseline inserts runs of consecutive keys at random
//! positions of a probed key range instead.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::IndexError;
use crate::key::Key;
use crate::memory::MemoryReport;
use crate::metrics::TrajectoryRow;
use crate::tree::{Counters, IndexTree, NodeId, TreeEvent};
use crate::workload::Op;

use super::probe_domain;

#[derive(Debug, Clone, PartialEq)]
pub struct DupAttackConfig<K> {
    /// Defaults to the midpoint of the root domain.
    pub target: Option<K>,
    pub max_insertions: u64,
    /// Legitimate operations issued after each adversarial insertion.
    pub interleave: usize,
}

impl<K> Default for DupAttackConfig<K> {
    fn default() -> Self {
        DupAttackConfig { target: None, max_insertions: 1_000_000, interleave: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SzegpConfig {
    /// Keys sampled to estimate the key range.
    pub samples: usize,
    /// Consecutive keys per cluster.
    pub cluster: u64,
    pub increment: f64,
    /// Total adversarial keys.
    pub budget: u64,
    pub seed: u64,
}

impl SzegpConfig {
    pub fn new(increment: f64, budget: u64, seed: u64) -> Self {
        SzegpConfig { samples: 1000, cluster: 10_000, increment, budget, seed }
    }
}

/// One child-table doubling observed during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoublingStep {
    pub insertion: u64,
    pub parent: NodeId,
    pub old_len: usize,
    pub new_len: usize,
    pub current_bytes: u64,
}

/// Result of a space attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceRun {
    pub insertions: u64,
    pub cap_exceeded: bool,
    /// A split hit the key resolution floor.
    pub floor_reached: bool,
    pub before_bytes: u64,
    pub report: MemoryReport,
    /// Structural counts accumulated during the run.
    pub counters: Counters,
    pub trajectory: Vec<TrajectoryRow>,
    pub doublings: Vec<DoublingStep>,
    pub seconds: f64,
}

impl SpaceRun {
    /// Longest run of back-to-back doublings of one table, each exactly
    /// twice the previous length.
    pub fn longest_doubling_chain(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        for (i, s) in self.doublings.iter().enumerate() {
            let chained = i > 0 && {
                let p = self.doublings[i - 1];
                p.parent == s.parent && p.new_len == s.old_len
            };
            run = if s.new_len == 2 * s.old_len { if chained { run + 1 } else { 1 } } else { 0 };
            best = best.max(run);
        }
        best
    }
}

struct Recorder {
    rows: Vec<TrajectoryRow>,
    doublings: Vec<DoublingStep>,
    splits: u64,
    doubled: u64,
    peak: u64,
    floor: bool,
    last: Option<TrajectoryRow>,
}

impl Recorder {
    fn new<K: Key>(tree: &mut IndexTree<K>) -> Self {
        tree.set_event_log(true);
        tree.take_events();
        let r = tree.memory_report();
        let first = TrajectoryRow {
            insertions: 0,
            current_bytes: r.current_bytes,
            peak_bytes: r.peak_bytes,
            splits: 0,
            doublings: 0,
        };
        Recorder {
            rows: vec![first],
            doublings: Vec::new(),
            splits: 0,
            doubled: 0,
            peak: r.peak_bytes,
            floor: false,
            last: Some(first),
        }
    }

    fn push(&mut self, row: TrajectoryRow) {
        self.rows.push(row);
        self.last = Some(row);
    }

    /// Folds events of the latest insertion in; rows are added only when
    /// something changed.
    fn observe<K: Key>(&mut self, tree: &mut IndexTree<K>, insertions: u64) {
        for ev in tree.take_events() {
            match ev {
                TreeEvent::Sideways { .. } | TreeEvent::Downwards { .. } => self.splits += 1,
                TreeEvent::Doubling { parent, old_len, new_len, current_bytes } => {
                    self.doubled += 1;
                    self.peak = self.peak.max(current_bytes);
                    self.doublings.push(DoublingStep { insertion: insertions, parent, old_len, new_len, current_bytes });
                    self.push(TrajectoryRow {
                        insertions,
                        current_bytes,
                        peak_bytes: self.peak,
                        splits: self.splits,
                        doublings: self.doubled,
                    });
                }
                TreeEvent::Floor { .. } => self.floor = true,
                _ => {}
            }
        }
        let r = tree.memory_report();
        self.peak = self.peak.max(r.peak_bytes);
        let row = TrajectoryRow {
            insertions,
            current_bytes: r.current_bytes,
            peak_bytes: self.peak,
            splits: self.splits,
            doublings: self.doubled,
        };
        let changed = self.last.is_none_or(|l| {
            (l.current_bytes, l.splits, l.doublings) != (row.current_bytes, row.splits, row.doublings)
        });
        if changed {
            self.push(row);
        }
    }

    fn finish<K: Key>(
        mut self,
        tree: &mut IndexTree<K>,
        insertions: u64,
        cap_exceeded: bool,
        before: (u64, Counters),
        started: Instant,
    ) -> SpaceRun {
        self.observe(tree, insertions);
        if self.last.is_some_and(|l| l.insertions != insertions) {
            let l = self.last.expect("checked");
            self.push(TrajectoryRow { insertions, ..l });
        }
        tree.set_event_log(false);
        SpaceRun {
            insertions,
            cap_exceeded,
            floor_reached: self.floor,
            before_bytes: before.0,
            report: tree.memory_report(),
            counters: tree.counters().since(&before.1),
            trajectory: self.rows,
            doublings: self.doublings,
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

/// Midpoint of the root domain.
pub fn default_target<K: Key>(tree: &IndexTree<K>) -> K {
    let (lo, hi) = tree.domain();
    K::halve(lo, hi).unwrap_or(lo)
}

/// Inserts copies of the target until the cap is hit or the insertion limit
/// is reached. Hitting the cap is the success condition and is reported in
/// the result, not as an error.
pub fn run_duplicate_attack<K: Key>(
    tree: &mut IndexTree<K>,
    config: &DupAttackConfig<K>,
    legit: &[Op<K>],
) -> Result<SpaceRun, IndexError> {
    let started = Instant::now();
    let before = (tree.memory_report().current_bytes, tree.counters());
    let target = config.target.unwrap_or_else(|| default_target(tree));
    tree.check_domain(target)?;
    let mut rec = Recorder::new(tree);
    let mut legit = legit.iter();
    let mut payload = 1u64 << 62;
    let mut done = 0;
    let mut cap_exceeded = false;
    'outer: while done < config.max_insertions {
        payload += 1;
        let r = tree.insert(target, payload);
        done += 1;
        rec.observe(tree, done);
        match r {
            Err(e) if e.is_cap_exceeded() => {
                cap_exceeded = true;
                break;
            }
            Err(e) => return Err(e),
            Ok(()) => {}
        }
        for op in legit.by_ref().take(config.interleave) {
            if let Err(e) = apply_op(tree, op) {
                if e.is_cap_exceeded() {
                    cap_exceeded = true;
                    break 'outer;
                }
            }
        }
    }
    Ok(rec.finish(tree, done, cap_exceeded, before, started))
}

/// Runs one workload operation. Lookups never fail.
pub fn apply_op<K: Key>(tree: &mut IndexTree<K>, op: &Op<K>) -> Result<(), IndexError> {
    match *op {
        Op::Insert(k, v) => tree.insert(k, v),
        Op::Lookup(k) => {
            tree.lookup(k);
            Ok(())
        }
    }
}

/// Clustering baseline: estimate the key range from probes, then insert
/// clusters of consecutive keys at uniform random positions until the budget
/// or the cap is exhausted.
pub fn run_szegp<K: Key>(tree: &mut IndexTree<K>, config: &SzegpConfig) -> SpaceRun {
    let started = Instant::now();
    let before = (tree.memory_report().current_bytes, tree.counters());
    let mut rec = Recorder::new(tree);
    let mut done = 0u64;
    let mut cap_exceeded = false;
    let range = if config.budget == 0 { None } else { probe_domain(tree) };
    if let Some((lo, hi)) = range {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let samples: Vec<K> = (0..config.samples.max(1)).map(|_| K::uniform_in(lo, hi, &mut rng)).collect();
        let est_lo = samples.iter().copied().fold(hi, |a, b| if b < a { b } else { a });
        let est_hi = samples.iter().copied().fold(lo, |a, b| if b > a { b } else { a });
        let mut payload = 1u64 << 61;
        'outer: while done < config.budget {
            let start = K::uniform_in(est_lo, est_hi, &mut rng);
            for key in consecutive_keys(start, config.cluster.min(config.budget - done), config.increment) {
                if tree.check_domain(key).is_err() {
                    continue 'outer;
                }
                payload += 1;
                let r = tree.insert(key, payload);
                done += 1;
                rec.observe(tree, done);
                if let Err(e) = r {
                    if e.is_cap_exceeded() {
                        cap_exceeded = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    rec.finish(tree, done, cap_exceeded, before, started)
}

/// `count` strictly increasing keys from `start` with step `increment`;
/// a step below the representation's resolution advances to the next key.
pub fn consecutive_keys<K: Key>(start: K, count: u64, increment: f64) -> impl Iterator<Item = K> {
    let mut prev: Option<K> = None;
    (0..count).map(move |i| {
        let mut k = start.offset_by(i, increment);
        if let Some(p) = prev {
            if !(k > p) {
                k = p.succ();
            }
        }
        prev = Some(k);
        k
    })
}

/// Copies of the default target a clone of `tree` absorbs before the first
/// catastrophic event (or cap failure) occurs, counting that insertion.
/// `None` when duplicates are rejected or nothing happens within `limit`.
pub fn trigger_distance<K: Key>(tree: &IndexTree<K>, limit: u64) -> Option<u64> {
    if !tree.config().allow_duplicates {
        return None;
    }
    let mut t = tree.clone();
    let target = default_target(&t);
    for i in 1..=limit {
        let seen = t.counters().catastrophic_events;
        match t.insert(target, i) {
            Err(e) if e.is_cap_exceeded() => return Some(i),
            Err(_) => return None,
            Ok(()) if t.counters().catastrophic_events > seen => return Some(i),
            Ok(()) => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{IndexConfig, MIB};

    fn small_tree() -> IndexTree<f64> {
        let keys: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).collect();
        let mut c = IndexConfig::default().with_cap(64 * MIB);
        c.max_routing_bytes = c.memory_cap_bytes;
        IndexTree::from_keys(&keys, c).unwrap()
    }

    #[test]
    fn cascade_reaches_cap_and_doubles() {
        let mut t = small_tree();
        let run = run_duplicate_attack(&mut t, &DupAttackConfig::default(), &[]).unwrap();
        assert!(run.cap_exceeded);
        assert!(run.insertions < 1500, "{}", run.insertions);
        assert!(run.longest_doubling_chain() >= 10, "{}", run.longest_doubling_chain());
        assert!(run.report.current_bytes <= run.report.cap_bytes);
        t.check_invariants().unwrap();
    }

    #[test]
    fn consecutive_keys_are_strict() {
        let ks: Vec<f64> = consecutive_keys(32400.5, 50, 1e-13).collect();
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        let ints: Vec<u64> = consecutive_keys(10u64, 3, 1.0).collect();
        assert_eq!(ints, vec![10, 11, 12]);
    }

    #[test]
    fn zero_budget_clustering_leaves_tree_alone() {
        let mut t = small_tree();
        let before = t.records();
        let run = run_szegp(&mut t, &SzegpConfig::new(1e-13, 0, 1));
        assert_eq!(run.insertions, 0);
        assert_eq!(t.records(), before);
    }

    #[test]
    fn trigger_distance_sentinel_without_duplicates() {
        let mut t = small_tree();
        let mut c = t.config().clone();
        c.allow_duplicates = false;
        t = IndexTree::from_keys(&t.records().iter().map(|r| r.0).collect::<Vec<_>>(), c).unwrap();
        assert_eq!(trigger_distance(&t, 10_000), None);
        assert!(trigger_distance(&small_tree(), 10_000).unwrap() > 1);
    }
}
