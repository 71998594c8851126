use alexaca::attack::duplicate::{consecutive_keys, run_duplicate_attack, trigger_distance, DupAttackConfig};
use alexaca::attack::probe_domain;
use alexaca::attack::time::{batch_offsets, plan_black_batch, plan_white_batch, run_time_attack, Planner, TimeAttackConfig};
use alexaca::datasets::{DatasetSpec, Family};
use alexaca::harness::{run_cliff, run_dup, run_time, DupSpec, TimeSpec};
use alexaca::workload::{gen_workload, split_load_fresh, Mix, WorkloadSpec};
use alexaca::{IndexConfig, IndexTree, Key, SplitPolicy, MIB};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pred<K: Key>(k: K) -> K {
    K::from_ordered(k.to_ordered() - 1)
}

fn int_tree(n: usize, seed: u64, config: IndexConfig) -> IndexTree<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<u64> = (0..n).map(|_| rng.random_range(1 << 20..1 << 40)).collect();
    keys.sort_unstable();
    IndexTree::from_keys(&keys, config).unwrap()
}

#[test]
fn probing_recovers_the_domain() {
    let t = int_tree(5000, 1, IndexConfig::default());
    assert_eq!(probe_domain(&t), Some(t.domain()).map(|(lo, hi)| (lo, pred(hi))));
    let keys: Vec<f64> = (0..5000).map(|i| -40.0 + i as f64 * 0.013).collect();
    let t = IndexTree::from_keys(&keys, IndexConfig::default()).unwrap();
    let (lo, hi) = probe_domain(&t).unwrap();
    assert!(t.check_domain(lo).is_ok() && t.check_domain(hi).is_ok());
    assert!(t.check_domain(pred(lo)).is_err() && t.check_domain(hi.succ()).is_err());
}

#[test]
fn black_batch_starts_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (lo, hi) = (1000u64, 1_001_000u64);
    let mut bins = [0u32; 10];
    let n = 100_000;
    for _ in 0..n {
        let k = plan_black_batch(lo, hi, &mut rng);
        assert!((lo..=hi).contains(&k));
        bins[((k - lo) * 10 / (hi - lo + 1)) as usize] += 1;
    }
    let expect = n as f64 / 10.0;
    let chi2: f64 = bins.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
    // 99.9th percentile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.88, "{chi2} {bins:?}");
}

#[test]
fn consecutive_keys_are_strictly_increasing() {
    for start in [0.0f64, 1.5, 12345.678, 1e12] {
        let ks: Vec<f64> = consecutive_keys(start, 500, 1e-13).collect();
        assert_eq!(ks.len(), 500);
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
    }
    let ks: Vec<u64> = consecutive_keys(7u64, 4, 1.0).collect();
    assert_eq!(ks, vec![7, 8, 9, 10]);
}

#[test]
fn batch_offsets_are_segment_centers() {
    assert_eq!(batch_offsets(100, 4), vec![12, 37, 62, 87]);
    assert!(batch_offsets(100, 0).is_empty());
}

#[test]
fn white_batch_targets_the_fullest_node() {
    let mut t = int_tree(40_000, 3, IndexConfig::default());
    let start = plan_white_batch(&t).unwrap();
    let fullest = t.data_nodes().into_iter().map(|id| t.data_node(id).unwrap().occupied()).max().unwrap();
    assert_eq!(t.data_node(t.leaf_for(start)).unwrap().occupied(), fullest);
    assert!(t.lookup(start).is_some());
}

#[test]
fn expansion_only_policy_never_splits_under_attack() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut keys: Vec<u64> = (0..30_000).map(|_| rng.random_range(0..1u64 << 40)).collect();
    keys.sort_unstable();
    let (load, fresh) = split_load_fresh(&keys, 10_000, 5);
    let ops = gen_workload(&WorkloadSpec::new(20_000, Mix::WriteHeavy, 6), &load, &fresh).unwrap();
    let config = IndexConfig::default().with_policy(SplitPolicy::ExpansionOnly).with_coarse_leaves();
    let base = IndexTree::from_keys(&load, config).unwrap();
    let run = |budget| {
        let mut t = base.clone();
        let cfg = TimeAttackConfig { budget, batch: 200, increment: 1.0 };
        let r = run_time_attack(&mut t, &ops, &cfg, &mut Planner::White).unwrap();
        t.check_invariants().unwrap();
        r
    };
    let (control, attack) = (run(0), run(2000));
    assert_eq!(attack.adversarial, 2000);
    assert_eq!(attack.ops, control.ops + 2000);
    assert_eq!(control.counters.splits(), attack.counters.splits());
    assert!(attack.counters.retrains > control.counters.retrains);
}

#[test]
fn duplicate_cascade_doubles_the_parent_table() {
    let mut config = IndexConfig::default().with_cap(16 * MIB);
    config.max_routing_bytes = 16 * MIB;
    let mut t = int_tree(50_000, 7, config);
    let run = run_duplicate_attack(&mut t, &DupAttackConfig::default(), &[]).unwrap();
    assert!(run.cap_exceeded);
    assert!(run.report.peak_bytes <= 16 * MIB);
    assert!(run.doublings.iter().all(|d| d.new_len == 2 * d.old_len));
    assert!(run.longest_doubling_chain() >= 10, "{}", run.longest_doubling_chain());
    t.check_invariants().unwrap();
}

#[test]
fn duplicates_rejected_when_disallowed() {
    let config = IndexConfig { allow_duplicates: false, ..IndexConfig::default() };
    let t = int_tree(2000, 8, config);
    assert_eq!(trigger_distance(&t, 1000), None);
}

#[test]
fn one_insertion_crosses_the_cap() {
    let spec = DupSpec::new(DatasetSpec::new(Family::Ycsb, 100_000, 9), 64 * MIB);
    let cliff = run_cliff(&spec).unwrap();
    let n = cliff.insertions_to_cap.unwrap();
    assert!(cliff.fresh_distance.unwrap() < n);
    assert!(cliff.bytes_before_last <= cliff.cap_bytes);
    assert!(cliff.last_insert_exceeded_cap);
    assert_eq!(cliff.stopped_distance, Some(1));
}

#[test]
fn interleaved_legitimate_traffic_still_hits_the_cap() {
    let mut spec = DupSpec::new(DatasetSpec::new(Family::Lognormal, 50_000, 10), 32 * MIB);
    spec.interleave = 5;
    let (rec, run) = run_dup(&spec).unwrap();
    assert!(rec.cap_exceeded && run.cap_exceeded);
    assert_eq!(rec.insertions_to_cap, Some(run.insertions));
}

#[test]
fn time_runs_are_reproducible_apart_from_timing() {
    let mut spec = TimeSpec::new(DatasetSpec::new(Family::Ycsb, 20_000, 11), SplitPolicy::ExpansionOnly, 10.0, 200);
    spec.ops = 10_000;
    let a = run_time(&spec, Some(alexaca::attack::time::TimeSetting::Black)).unwrap();
    let b = run_time(&spec, Some(alexaca::attack::time::TimeSetting::Black)).unwrap();
    assert_eq!(a.record.to_csv_untimed(), b.record.to_csv_untimed());
    assert_eq!(a.record.budget_keys, 1000);
}
