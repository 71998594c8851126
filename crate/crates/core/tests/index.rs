use std::collections::BTreeMap;

use alexaca::gapped::GappedArray;
use alexaca::{node_cost, CostStats, IndexConfig, IndexTree, Key, Node, NodeId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multiset oracle keyed by the order-preserving bit image of the key.
#[derive(Default)]
struct Oracle(BTreeMap<u64, Vec<u64>>);

impl Oracle {
    fn insert<K: Key>(&mut self, k: K, v: u64) {
        self.0.entry(k.to_ordered()).or_default().push(v);
    }

    fn payloads<K: Key>(&self, k: K) -> Option<&Vec<u64>> {
        self.0.get(&k.to_ordered())
    }
}

fn small_config() -> IndexConfig {
    let mut c = IndexConfig::default();
    c.bulk_leaf_min_keys = 16;
    c.bulk_leaf_max_keys = 64;
    c
}

/// Walks the tree and prices every node from the byte formulas directly.
fn walk_oracle<K: Key>(tree: &IndexTree<K>) -> u64 {
    let c = tree.config();
    let mut total = 0;
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        match tree.node(id).unwrap() {
            Node::Data(d) => {
                let cap = d.capacity() as u64;
                total += c.node_header_bytes + cap * c.slot_bytes + cap.div_ceil(64) * 8;
            }
            Node::Internal(n) => {
                total += c.node_header_bytes + n.children().len() as u64 * c.ref_bytes;
                let mut seen: Vec<NodeId> = n.children().to_vec();
                seen.dedup();
                stack.extend(seen);
            }
        }
    }
    total
}

fn check_against_oracle<K: Key>(tree: &mut IndexTree<K>, oracle: &Oracle, probes: &[K]) {
    for &k in probes {
        match (tree.lookup(k), oracle.payloads(k)) {
            (Some(v), Some(vs)) => assert!(vs.contains(&v), "payload {v} not stored under {k}"),
            (None, None) => {}
            (got, want) => panic!("key {k}: index {got:?}, oracle {want:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integer_ops_match_oracle_and_keep_invariants(
        load in prop::collection::vec(0u64..2000, 0..300),
        ops in prop::collection::vec((any::<bool>(), 1u64..1999), 1..400),
    ) {
        let mut keys = load;
        keys.extend([0, 1999]);
        keys.sort_unstable();
        let mut tree = IndexTree::from_keys(&keys, small_config()).unwrap();
        let mut oracle = Oracle::default();
        for (i, &k) in keys.iter().enumerate() {
            oracle.insert(k, i as u64);
        }
        prop_assert_eq!(tree.check_invariants(), Ok(()));
        for (i, &(is_insert, k)) in ops.iter().enumerate() {
            let payload = 1_000_000 + i as u64;
            if is_insert {
                tree.insert(k, payload).unwrap();
                oracle.insert(k, payload);
            } else {
                let got = tree.lookup(k);
                match oracle.payloads(k) {
                    Some(vs) => prop_assert!(got.is_some_and(|v| vs.contains(&v))),
                    None => prop_assert_eq!(got, None),
                }
            }
            prop_assert_eq!(tree.check_invariants(), Ok(()));
            prop_assert_eq!(walk_oracle(&tree), tree.memory_report().current_bytes);
        }
        let stored: usize = oracle.0.values().map(Vec::len).sum();
        prop_assert_eq!(tree.len(), stored);
    }

    #[test]
    fn real_ops_match_oracle(
        load in prop::collection::vec(-100.0f64..100.0, 2..300),
        ops in prop::collection::vec((any::<bool>(), -99.0f64..99.0), 1..300),
    ) {
        let mut keys = load;
        keys.extend([-100.0, 100.0]);
        keys.sort_by(f64::total_cmp);
        let mut tree = IndexTree::from_keys(&keys, small_config()).unwrap();
        let mut oracle = Oracle::default();
        for (i, &k) in keys.iter().enumerate() {
            oracle.insert(k, i as u64);
        }
        let mut probes = Vec::new();
        for (i, &(is_insert, k)) in ops.iter().enumerate() {
            if is_insert {
                tree.insert(k, i as u64 + 10_000).unwrap();
                oracle.insert(k, i as u64 + 10_000);
            }
            probes.push(k);
            prop_assert_eq!(tree.check_invariants(), Ok(()));
        }
        probes.extend(keys.iter().copied());
        check_against_oracle(&mut tree, &oracle, &probes);
    }

    #[test]
    fn copies_stay_contiguous(
        base in prop::collection::btree_set(0u64..10_000, 1..40),
        pick in any::<prop::sample::Index>(),
        copies in 1usize..30,
        slack in 0usize..40,
    ) {
        let base: Vec<u64> = base.into_iter().collect();
        let cap = base.len() + copies + slack;
        let mut a = GappedArray::new(cap);
        for (i, &k) in base.iter().enumerate() {
            a.insert(k, i as u64, i * cap / base.len());
        }
        let k = base[pick.index(base.len())];
        for c in 0..copies {
            let pred = a.iter().find(|&(_, x, _)| x == k).unwrap().0;
            a.insert(k, 100 + c as u64, pred);
        }
        let slots: Vec<usize> = a.iter().filter(|&(_, x, _)| x == k).map(|(s, _, _)| s).collect();
        prop_assert_eq!(slots.len(), copies + 1);
        prop_assert!(slots.windows(2).all(|w| w[1] == w[0] + 1), "{:?}", slots);
        prop_assert!(a.is_sorted());
    }

    #[test]
    fn cost_is_monotone_in_each_counter(ops in 1u64..1000, iters in 0u64..10_000, shifts in 0u64..10_000, d in 0u64..1000) {
        let c = IndexConfig::default();
        let base = node_cost(&CostStats { ops, search_iters: iters, shifts }, &c).unwrap();
        let more_iters = node_cost(&CostStats { ops, search_iters: iters + d, shifts }, &c).unwrap();
        let more_shifts = node_cost(&CostStats { ops, search_iters: iters, shifts: shifts + d }, &c).unwrap();
        prop_assert!(more_iters >= base && more_shifts >= base);
    }
}

#[test]
fn lognormal_sample_matches_oracle_after_bulk_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = rand_distr::LogNormal::new(0.0, 2.0).unwrap();
    let mut keys: Vec<u64> = (0..10_000).map(|_| (rng.sample(normal) * 1e9) as u64).collect();
    keys.sort_unstable();
    let mut tree = IndexTree::from_keys(&keys, IndexConfig::default()).unwrap();
    let mut oracle = Oracle::default();
    for (i, &k) in keys.iter().enumerate() {
        oracle.insert(k, i as u64);
    }
    let mut probes = keys.clone();
    probes.extend(keys.iter().map(|k| k + 1));
    check_against_oracle(&mut tree, &oracle, &probes);
}

#[test]
fn lookups_agree_with_binary_search_in_the_leaf() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut keys: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1e6)).collect();
    keys.sort_by(f64::total_cmp);
    let mut tree = IndexTree::from_keys(&keys, IndexConfig::default()).unwrap();
    for _ in 0..1000 {
        let k = if rng.random_bool(0.5) { keys[rng.random_range(0..keys.len())] } else { rng.random_range(0.0..1e6) };
        let leaf = tree.leaf_for(k);
        let recs = tree.data_node(leaf).unwrap().records();
        let expect = recs.binary_search_by(|r| r.0.total_cmp(&k)).ok().map(|i| recs[i].1);
        assert_eq!(tree.lookup(k), expect);
    }
}

#[test]
fn routing_agrees_with_a_scan_over_leaf_ranges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut keys: Vec<u64> = (0..50_000).map(|_| rng.random_range(0..1u64 << 40)).collect();
    keys.sort_unstable();
    let mut tree = IndexTree::from_keys(&keys, small_config()).unwrap();
    for i in 0..3000u64 {
        tree.insert(keys[0] + 1 + (i % 17), i).unwrap();
    }
    let (lo, hi) = tree.domain();
    let leaves: Vec<(NodeId, u64, u64)> = tree
        .data_nodes()
        .into_iter()
        .map(|id| {
            let d = tree.data_node(id).unwrap();
            (id, d.lo(), d.hi())
        })
        .collect();
    for _ in 0..10_000 {
        let k = rng.random_range(lo..hi);
        let scan = leaves.iter().find(|&&(_, a, b)| a <= k && k < b).unwrap().0;
        assert_eq!(tree.leaf_for(k), scan);
    }
}

#[test]
fn empty_tree_is_one_minimal_node_over_the_domain() {
    let mut tree = IndexTree::<u64>::from_keys(&[], IndexConfig::default()).unwrap();
    let c = tree.config().clone();
    assert_eq!(tree.data_nodes().len(), 1);
    assert_eq!(tree.domain(), (0, u64::MAX));
    assert_eq!(tree.memory_report().current_bytes, c.data_node_bytes(c.min_data_node_slots));
    assert_eq!(tree.lookup(42), None);
    tree.insert(42, 7).unwrap();
    assert_eq!(tree.lookup(42), Some(7));
}

#[test]
fn expansion_capacity_example() {
    let c = IndexConfig::default();
    assert_eq!(c.capacity_for(80), 134);
    assert!(80.0 / 134.0 <= c.upper_density);
}

#[test]
fn split_sends_every_copy_left() {
    let mut keys: Vec<u64> = vec![11, 12, 14, 16, 17, 18, 19];
    keys.extend(std::iter::repeat_n(13, 201));
    keys.sort_unstable();
    let mut tree = IndexTree::from_keys(&keys, IndexConfig::default()).unwrap();
    assert_eq!(tree.domain(), (10, 20));
    let leaf = tree.data_nodes()[0];
    let (l, r) = tree.split(leaf).unwrap().unwrap();
    let (dl, dr) = (tree.data_node(l).unwrap(), tree.data_node(r).unwrap());
    assert_eq!((dl.lo(), dl.hi(), dr.lo(), dr.hi()), (10, 15, 15, 20));
    assert_eq!(dl.records().iter().filter(|r| r.0 == 13).count(), 201);
    assert!(dr.records().iter().all(|r| r.0 >= 15));
    assert_eq!(tree.check_invariants(), Ok(()));
}

#[test]
fn route_example_with_four_equal_children() {
    let keys: Vec<u64> = (1..100).collect();
    let mut tree = IndexTree::from_keys(&keys, IndexConfig::default()).unwrap();
    assert_eq!(tree.domain(), (0, 100));
    let (a, b) = tree.split(tree.data_nodes()[0]).unwrap().unwrap();
    let root = tree.root();
    tree.split(b).unwrap();
    assert_eq!(tree.node(root).map(|n| matches!(n, Node::Internal(i) if i.children().len() == 4)), Some(true));
    let left = tree.node(root).map(|n| if let Node::Internal(i) = n { i.children()[0] } else { 0 }).unwrap();
    assert_eq!(left, a);
    assert_eq!(tree.position(a).map(|p| p.2), Some(2));
    tree.split(a).unwrap();
    let ranges: Vec<(u64, u64)> = tree
        .data_nodes()
        .into_iter()
        .map(|id| (tree.data_node(id).unwrap().lo(), tree.data_node(id).unwrap().hi()))
        .collect();
    assert_eq!(ranges, vec![(0, 25), (25, 50), (50, 75), (75, 100)]);
    let (c55, _) = tree.route(root, 55);
    assert_eq!((tree.data_node(c55).unwrap().lo(), tree.data_node(c55).unwrap().hi()), (50, 75));
    let (c50, _) = tree.route(root, 50);
    assert_eq!(c50, c55);
    assert_eq!(tree.check_invariants(), Ok(()));
}

#[test]
fn two_hundred_duplicates_are_catastrophic() {
    let keys: Vec<u64> = (0..200).map(|i| i * 1000).collect();
    let mut c = IndexConfig::default();
    c.bulk_leaf_min_keys = 256;
    let mut tree = IndexTree::from_keys(&keys, c).unwrap();
    for i in 0..201u64 {
        tree.insert(13, i).unwrap();
    }
    assert!(tree.counters().catastrophic_events >= 1);
    assert!(tree.check_invariants().is_ok());
}
