//! Independent oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use alexaca::attack::mck::{Scenario, ScenarioTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best objective over all one-per-class assignments within `budget`,
/// enumerated exhaustively.
pub fn brute_force_mck(table: &ScenarioTable, budget: u64) -> u64 {
    fn go(classes: &[Vec<Scenario>], budget: u64) -> u64 {
        let Some((first, rest)) = classes.split_first() else {
            return 0;
        };
        first.iter().filter(|s| s.k <= budget).map(|s| s.f + go(rest, budget - s.k)).max().unwrap_or(0)
    }
    go(&table.classes, budget)
}

/// Every assignment of `classes` as `(k, f)` sums.
fn enumerate(classes: &[Vec<Scenario>]) -> Vec<(u64, u64)> {
    let mut out = vec![(0u64, 0u64)];
    for class in classes {
        out = out.iter().flat_map(|&(k, f)| class.iter().map(move |s| (k + s.k, f + s.f))).collect();
    }
    out
}

/// Exhaustive optimum by meeting in the middle: all assignments of each half
/// are enumerated, and each left assignment is paired with the best right
/// assignment that fits the remaining budget.
pub fn exhaustive_mck(table: &ScenarioTable, budget: u64) -> u64 {
    let (a, b) = table.classes.split_at(table.classes.len() / 2);
    let left = enumerate(a);
    let mut right = enumerate(b);
    right.sort_unstable();
    let mut best_prefix = Vec::with_capacity(right.len());
    let mut best = 0;
    for &(_, f) in &right {
        best = best.max(f);
        best_prefix.push(best);
    }
    left.iter()
        .filter(|&&(k, _)| k <= budget)
        .filter_map(|&(k, f)| {
            let fit = right.partition_point(|&(rk, _)| rk <= budget - k);
            (fit > 0).then(|| f + best_prefix[fit - 1])
        })
        .max()
        .unwrap_or(0)
}

/// Random table: `n` classes holding E=0 plus `m` items with k increasing.
pub fn random_table(rng: &mut ChaCha8Rng, n: usize, m: usize, kmax: u64, fmax: u64) -> ScenarioTable {
    let classes = (0..n)
        .map(|i| {
            let mut class = vec![Scenario { node_id: i as u32, e: 0, k: 0, f: 0 }];
            let mut k = 0;
            for j in 0..m {
                k += rng.random_range(1..=kmax);
                class.push(Scenario { node_id: i as u32, e: 1 << j, k, f: rng.random_range(1..=fmax) });
            }
            class
        })
        .collect();
    ScenarioTable::new(classes)
}

/// The budget is below the largest node's k: greedy stops at that node and
/// spends nothing, while the two smaller nodes fit together.
pub fn greedy_failure_table() -> ScenarioTable {
    let class = |id: u32, k: u64, f: u64| {
        vec![Scenario { node_id: id, e: 0, k: 0, f: 0 }, Scenario { node_id: id, e: 1, k, f }]
    };
    ScenarioTable::new(vec![class(0, 20, 100), class(1, 6, 60), class(2, 6, 60)])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
