use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::IndexConfig;
use crate::error::IndexError;
use crate::gapped::{search_iters, GappedArray, InsertStep};
use crate::key::Key;
use crate::model::LinearModel;

/// Empirical work counters of one data node since its creation or last retrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostStats {
    pub ops: u64,
    pub search_iters: u64,
    pub shifts: u64,
}

impl CostStats {
    pub fn record(&mut self, iters: u64, shifts: u64) {
        self.ops += 1;
        self.search_iters += iters;
        self.shifts += shifts;
    }
}

/// `w_s * iters/ops + w_m * shifts/ops`.
pub fn node_cost(stats: &CostStats, config: &IndexConfig) -> Result<f64, IndexError> {
    if stats.ops == 0 {
        return Err(IndexError::UndefinedCost);
    }
    let ops = stats.ops as f64;
    Ok(config.search_weight * stats.search_iters as f64 / ops + config.shift_weight * stats.shifts as f64 / ops)
}

/// The catastrophic predicate shared by runtime stats and creation stats.
pub fn exceeds_threshold(stats: &CostStats, expected_cost: f64, config: &IndexConfig) -> bool {
    if stats.ops < config.catastrophic_min_ops {
        return false;
    }
    match node_cost(stats, config) {
        Ok(cost) => cost > config.catastrophic_factor * expected_cost.max(config.cost_epsilon),
        Err(_) => false,
    }
}

/// Positions of the layout that keeps every key at or right of its
/// prediction without reordering and without running off the array end.
fn ideal_layout(predictions: &[usize], capacity: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = predictions.len();
    let mut prev: Option<usize> = None;
    predictions.iter().enumerate().map(move |(i, &p)| {
        let floor = prev.map_or(0, |q| q + 1);
        let q = p.max(floor).min(capacity - (n - i));
        prev = Some(q);
        (p, q)
    })
}

/// Mean search iterations of the ideal layout.
pub fn expected_search_cost(predictions: &[usize], capacity: usize) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let total: u64 = ideal_layout(predictions, capacity).map(|(p, q)| search_iters(q.abs_diff(p))).sum();
    total as f64 / predictions.len() as f64
}

/// Mean records moved by an insert that lands uniformly among the keys of
/// the ideal layout: a run of `L` packed records costs about `L / 4` per
/// insert landing in it.
pub fn expected_shift_cost(predictions: &[usize], capacity: usize) -> f64 {
    let n = predictions.len();
    if n == 0 {
        return 0.0;
    }
    let mut sum_sq = 0u64;
    let mut run = 0u64;
    let mut last: Option<usize> = None;
    for (_, q) in ideal_layout(predictions, capacity) {
        if last.is_some_and(|l| l + 1 == q) {
            run += 1;
        } else {
            sum_sq += run * run;
            run = 1;
        }
        last = Some(q);
    }
    sum_sq += run * run;
    sum_sq as f64 / (4.0 * n as f64)
}

/// Mean weighted cost of inserting keys drawn from the node's own
/// distribution (midpoints of adjacent distinct keys, in seeded random order)
/// into a copy of the fresh layout, until it is halfway to the upper density
/// limit. `None` when there is no room or no distinct pair to draw from.
pub fn simulated_insert_cost<K: Key>(
    array: &GappedArray<K>,
    model: LinearModel,
    lo: K,
    records: &[(K, u64)],
    config: &IndexConfig,
) -> Option<f64> {
    let cap = array.capacity();
    let rounds = config.max_occupancy(cap).saturating_sub(array.occupied()) / 2;
    let candidates: Vec<K> = records.windows(2).filter_map(|w| K::halve(w[0].0, w[1].0)).collect();
    if rounds == 0 || candidates.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64((records.len() as u64) << 32 | cap as u64);
    let mut sim = array.clone();
    let mut total = 0.0;
    for _ in 0..rounds {
        let k = candidates[rng.random_range(0..candidates.len())];
        let step = sim.insert(k, 0, model.predict_slot(k.offset_from(lo), cap));
        total += config.search_weight * step.iters as f64 + config.shift_weight * step.shifts as f64;
    }
    Some(total / rounds as f64)
}

#[derive(Debug, Clone)]
pub struct DataNode<K> {
    pub(crate) lo: K,
    pub(crate) hi: K,
    pub(crate) model: LinearModel,
    pub(crate) array: GappedArray<K>,
    pub(crate) stats: CostStats,
    pub(crate) creation: CostStats,
    pub(crate) expected_cost: f64,
    pub(crate) at_floor: bool,
}

impl<K: Key> DataNode<K> {
    /// Trains a model over `records` (sorted) and places them by model-based
    /// insertion in key order. The placement work is kept as the creation
    /// stats; runtime stats start at zero.
    pub fn build(records: &[(K, u64)], lo: K, hi: K, capacity: usize, config: &IndexConfig) -> Self {
        assert!(records.len() <= capacity);
        let offsets: Vec<f64> = records.iter().map(|&(k, _)| k.offset_from(lo)).collect();
        let model = if records.is_empty() {
            LinearModel::equal_width(hi.offset_from(lo), capacity)
        } else {
            LinearModel::fit_ranks(&offsets, capacity)
        };
        let predictions: Vec<usize> = offsets.iter().map(|&x| model.predict_slot(x, capacity)).collect();
        let mut array = GappedArray::new(capacity);
        let mut creation = CostStats::default();
        for (&(k, v), &p) in records.iter().zip(&predictions) {
            let step = array.insert(k, v, p);
            creation.record(step.iters, step.shifts);
        }
        let expected_cost = simulated_insert_cost(&array, model, lo, records, config)
            .unwrap_or_else(|| config.search_weight * expected_search_cost(&predictions, capacity));
        DataNode {
            lo,
            hi,
            model,
            array,
            stats: CostStats::default(),
            creation,
            expected_cost,
            at_floor: false,
        }
    }

    pub fn lo(&self) -> K {
        self.lo
    }

    pub fn hi(&self) -> K {
        self.hi
    }

    pub fn model(&self) -> LinearModel {
        self.model
    }

    pub fn array(&self) -> &GappedArray<K> {
        &self.array
    }

    pub fn stats(&self) -> CostStats {
        self.stats
    }

    pub fn creation_stats(&self) -> CostStats {
        self.creation
    }

    pub fn expected_cost(&self) -> f64 {
        self.expected_cost
    }

    pub fn capacity(&self) -> usize {
        self.array.capacity()
    }

    pub fn occupied(&self) -> usize {
        self.array.occupied()
    }

    /// Whether the key range has reached the representation's resolution.
    pub fn at_floor(&self) -> bool {
        self.at_floor
    }

    pub fn contains_range(&self, key: K) -> bool {
        self.lo <= key && key < self.hi
    }

    pub fn predict(&self, key: K) -> usize {
        self.model.predict_slot(key.offset_from(self.lo), self.capacity())
    }

    pub fn lookup(&mut self, key: K) -> (Option<u64>, u64) {
        let (slot, iters) = self.array.find(key, self.predict(key));
        self.stats.record(iters, 0);
        (slot.map(|s| self.array.payload(s)), iters)
    }

    /// Lookup without touching the cost counters.
    pub fn peek(&self, key: K) -> Option<u64> {
        let (slot, _) = self.array.find(key, self.predict(key));
        slot.map(|s| self.array.payload(s))
    }

    pub fn insert(&mut self, key: K, payload: u64) -> InsertStep {
        let p = self.predict(key);
        let step = self.array.insert(key, payload, p);
        self.stats.record(step.iters, step.shifts);
        step
    }

    pub fn cost(&self, config: &IndexConfig) -> Result<f64, IndexError> {
        node_cost(&self.stats, config)
    }

    pub fn is_catastrophic(&self, config: &IndexConfig) -> bool {
        exceeds_threshold(&self.stats, self.expected_cost, config)
    }

    /// The catastrophic predicate applied to the work of building this node.
    pub fn born_catastrophic(&self, config: &IndexConfig) -> bool {
        exceeds_threshold(&self.creation, self.expected_cost, config)
    }

    pub fn records(&self) -> Vec<(K, u64)> {
        self.array.records()
    }
}

#[derive(Debug, Clone)]
pub struct InternalNode<K> {
    pub(crate) lo: K,
    pub(crate) hi: K,
    pub(crate) model: LinearModel,
    pub(crate) children: Vec<u32>,
}

impl<K: Key> InternalNode<K> {
    pub fn new(lo: K, hi: K, children: Vec<u32>) -> Self {
        debug_assert!(children.len().is_power_of_two());
        let model = LinearModel::equal_width(hi.offset_from(lo), children.len());
        InternalNode { lo, hi, model, children }
    }

    pub fn lo(&self) -> K {
        self.lo
    }

    pub fn hi(&self) -> K {
        self.hi
    }

    pub fn model(&self) -> LinearModel {
        self.model
    }

    pub fn children(&self) -> &[u32] {
        &self.children
    }

    pub fn predict(&self, key: K) -> usize {
        self.model.predict_slot(key.offset_from(self.lo), self.children.len())
    }

    /// Duplicates every entry in place.
    pub(crate) fn double(&mut self) {
        let old = std::mem::take(&mut self.children);
        self.children = old.iter().flat_map(|&c| [c, c]).collect();
        self.model = self.model.doubled();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_formula() {
        let c = IndexConfig::default();
        let s = CostStats { ops: 10, search_iters: 20, shifts: 30 };
        assert_eq!(node_cost(&s, &c).unwrap(), 5.0);
        assert_eq!(node_cost(&CostStats { ops: 3, ..Default::default() }, &c).unwrap(), 0.0);
        assert_eq!(node_cost(&CostStats::default(), &c), Err(IndexError::UndefinedCost));
    }

    #[test]
    fn threshold_is_strict() {
        let c = IndexConfig::default();
        // expected 1.0 -> threshold 4.0; cost exactly 4.0 is not catastrophic
        let s = CostStats { ops: 64, search_iters: 0, shifts: 256 };
        assert!(!exceeds_threshold(&s, 1.0, &c));
        let s = CostStats { ops: 64, search_iters: 1, shifts: 256 };
        assert!(exceeds_threshold(&s, 1.0, &c));
        let s = CostStats { ops: 63, search_iters: 0, shifts: 10_000 };
        assert!(!exceeds_threshold(&s, 1.0, &c));
    }

    #[test]
    fn build_places_sorted_and_resets_stats() {
        let recs: Vec<(u64, u64)> = (0..100u64).map(|k| (k * 7, k)).collect();
        let node = DataNode::build(&recs, 0, 700, 167, &IndexConfig::default());
        assert_eq!(node.occupied(), 100);
        assert!(node.array().is_sorted());
        assert_eq!(node.stats(), CostStats::default());
        assert_eq!(node.creation_stats().ops, 100);
        assert!(node.expected_cost() < 2.0);
        assert!(!node.born_catastrophic(&IndexConfig::default()));
    }

    #[test]
    fn duplicate_heavy_node_is_born_catastrophic() {
        let recs: Vec<(f64, u64)> = (0..201).map(|i| (13.0, i)).collect();
        let node = DataNode::build(&recs, 10.0, 15.0, 335, &IndexConfig::default());
        assert!(node.born_catastrophic(&IndexConfig::default()));
    }

    #[test]
    fn expected_cost_of_perfect_predictions_is_zero() {
        assert_eq!(expected_search_cost(&[0, 2, 4, 6], 8), 0.0);
        // all four predicted at slot 5 of 8: layout 4,5,6,7
        let c = expected_search_cost(&[5, 5, 5, 5], 8);
        assert_eq!(c, (1 + 0 + 1 + 2) as f64 / 4.0);
        assert_eq!(expected_shift_cost(&[5, 5, 5, 5], 8), 1.0);
        assert_eq!(expected_shift_cost(&[0, 2, 4, 6], 8), 0.25);
    }

    #[test]
    fn doubling_duplicates_entries() {
        let mut n = InternalNode::<u64>::new(0, 100, vec![1, 2]);
        n.double();
        assert_eq!(n.children(), &[1, 1, 2, 2]);
        assert_eq!(n.predict(60), 2);
    }
}
