//! Time attack: batches of consecutive keys aimed at one spot keep a data
//! node's empirical cost far above its model's expectation, so the node is
//! retrained over and over. Under the expansion-only policy every catastrophic
//! event is an expansion plus retrain of the whole node.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::IndexError;
use crate::key::Key;
use crate::tree::{Counters, IndexTree};
use crate::workload::Op;

use super::duplicate::{apply_op, consecutive_keys};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeSetting {
    White,
    Gray,
    Black,
}

impl TimeSetting {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeSetting::White => "white",
            TimeSetting::Gray => "gray",
            TimeSetting::Black => "black",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TimeAttackError {
    #[error("the substitute index holds no keys")]
    EmptySubstitute,
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeAttackConfig {
    /// Adversarial keys; only whole batches are used.
    pub budget: u64,
    pub batch: u64,
    pub increment: f64,
}

impl TimeAttackConfig {
    pub fn batches(&self) -> u64 {
        self.budget.checked_div(self.batch).unwrap_or(0)
    }
}

/// Middle key of the longest occupied run of the data node holding the most
/// records. Ties go to the leftmost node and run.
pub fn plan_white_batch<K: Key>(tree: &IndexTree<K>) -> Option<K> {
    let mut best: Option<(usize, crate::tree::NodeId)> = None;
    for id in tree.data_nodes() {
        let occ = tree.data_node(id).expect("data node").occupied();
        if best.is_none_or(|(o, _)| occ > o) {
            best = Some((occ, id));
        }
    }
    let (_, id) = best?;
    let array = tree.data_node(id).expect("data node").array();
    let (start, len) = array.longest_run()?;
    array.key_at(start + len / 2)
}

pub fn plan_gray_batch<K: Key>(substitute: &IndexTree<K>) -> Result<K, TimeAttackError> {
    plan_white_batch(substitute).ok_or(TimeAttackError::EmptySubstitute)
}

/// Uniform start in the probed range `[lo, hi]`.
pub fn plan_black_batch<K: Key>(lo: K, hi: K, rng: &mut ChaCha8Rng) -> K {
    K::uniform_in(lo, hi, rng)
}

/// Where batch starts come from.
#[derive(Debug, Clone)]
pub enum Planner<K> {
    White,
    /// The substitute also receives every batch, so later plans see it.
    Gray(Box<IndexTree<K>>),
    Black { lo: K, hi: K, rng: ChaCha8Rng },
}

impl<K: Key> Planner<K> {
    pub fn black(lo: K, hi: K, seed: u64) -> Self {
        Planner::Black { lo, hi, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn setting(&self) -> TimeSetting {
        match self {
            Planner::White => TimeSetting::White,
            Planner::Gray(_) => TimeSetting::Gray,
            Planner::Black { .. } => TimeSetting::Black,
        }
    }

    fn plan(&mut self, target: &IndexTree<K>) -> Result<K, TimeAttackError> {
        match self {
            Planner::White => plan_white_batch(target).ok_or(TimeAttackError::EmptySubstitute),
            Planner::Gray(sub) => plan_gray_batch(sub),
            Planner::Black { lo, hi, rng } => Ok(plan_black_batch(*lo, *hi, rng)),
        }
    }

    fn mirror(&mut self, keys: &[K]) {
        if let Planner::Gray(sub) = self {
            for (i, &k) in keys.iter().enumerate() {
                if sub.insert(k, i as u64).is_err() {
                    break;
                }
            }
        }
    }
}

/// Stream positions before which each batch is issued: the centers of
/// `batches` equal segments.
pub fn batch_offsets(ops: usize, batches: u64) -> Vec<usize> {
    let b = batches as usize;
    (0..b).map(|i| (2 * i + 1) * ops / (2 * b)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeRun {
    /// Legitimate plus adversarial operations executed.
    pub ops: u64,
    pub adversarial: u64,
    pub batches: u64,
    /// Time spent executing operations; planning is excluded.
    pub elapsed: Duration,
    pub cap_exceeded: bool,
    pub counters: Counters,
}

impl TimeRun {
    pub fn throughput(&self) -> f64 {
        self.ops as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

/// Runs the workload with the adversarial batches spliced in. A cap failure
/// ends the run early and is recorded. Adversarial keys the target rejects
/// as out of domain still count as issued operations.
pub fn run_time_attack<K: Key>(
    tree: &mut IndexTree<K>,
    ops: &[Op<K>],
    config: &TimeAttackConfig,
    planner: &mut Planner<K>,
) -> Result<TimeRun, TimeAttackError> {
    if config.batch == 0 && config.budget > 0 {
        return Err(TimeAttackError::EmptyBatch);
    }
    let before = tree.counters();
    let batches = config.batches();
    let offsets = batch_offsets(ops.len(), batches);
    let mut next_batch = 0usize;
    let mut elapsed = Duration::ZERO;
    let mut done = 0u64;
    let mut adversarial = 0u64;
    let mut cap_exceeded = false;
    let mut payload = 1u64 << 60;
    let mut pos = 0usize;
    'run: while pos < ops.len() || next_batch < offsets.len() {
        if next_batch < offsets.len() && offsets[next_batch] <= pos {
            next_batch += 1;
            let start = planner.plan(tree)?;
            let keys: Vec<K> = consecutive_keys(start, config.batch, config.increment).collect();
            let t = Instant::now();
            for &k in &keys {
                payload += 1;
                let r = tree.insert(k, payload);
                done += 1;
                adversarial += 1;
                if let Err(e) = r {
                    if matches!(e, IndexError::OutOfDomain { .. }) {
                        continue;
                    }
                    elapsed += t.elapsed();
                    if e.is_cap_exceeded() {
                        cap_exceeded = true;
                        break 'run;
                    }
                    return Err(e.into());
                }
            }
            elapsed += t.elapsed();
            planner.mirror(&keys);
            continue;
        }
        let end = offsets.get(next_batch).copied().unwrap_or(ops.len()).min(ops.len());
        let t = Instant::now();
        for op in &ops[pos..end] {
            done += 1;
            if let Err(e) = apply_op(tree, op) {
                elapsed += t.elapsed();
                if e.is_cap_exceeded() {
                    cap_exceeded = true;
                    break 'run;
                }
                return Err(e.into());
            }
        }
        elapsed += t.elapsed();
        pos = end;
    }
    Ok(TimeRun { ops: done, adversarial, batches, elapsed, cap_exceeded, counters: tree.counters().since(&before) })
}
