//! Data-node space attack: choose how many expansions to force in each data
//! node so that the bytes left empty after the forced expansions are maximal
//! under a key budget. Each node is a class of the multiple-choice knapsack;
//! its items are the scenarios `E` in `{0, 1, 2, 4}`.

use std::fmt;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::IndexConfig;
use crate::error::IndexError;
use crate::key::Key;
use crate::tree::{IndexTree, NodeId};

pub const DEFAULT_EXPANSIONS: [u32; 3] = [1, 2, 4];

/// Largest dynamic-programming table (classes × budget units) attempted.
const DP_MAX_CELLS: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub node_id: NodeId,
    pub e: u32,
    /// Keys needed to force `e` consecutive expansions.
    pub k: u64,
    /// Empty bytes left in the node after the last forced expansion.
    pub f: u64,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.node_id, self.e, self.k, self.f)
    }
}

/// Data node as seen by the planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSnapshot<K> {
    pub node_id: NodeId,
    pub occupied: usize,
    pub capacity: usize,
    pub lo: K,
    pub hi: K,
}

pub fn snapshot<K: Key>(tree: &IndexTree<K>) -> Vec<NodeSnapshot<K>> {
    tree.data_nodes()
        .into_iter()
        .map(|id| {
            let d = tree.data_node(id).expect("data node");
            NodeSnapshot { node_id: id, occupied: d.occupied(), capacity: d.capacity(), lo: d.lo(), hi: d.hi() }
        })
        .collect()
}

/// Forward simulation of `e` forced expansions from `(occupied, capacity)`.
/// Each trigger needs `max_occupancy(cap) - occ + 1` keys and provisions
/// `capacity_for(occ)` slots for the new occupancy. `None` when a step would
/// pass the data node size limit (the index would split instead).
pub fn scenario_cost(occupied: usize, capacity: usize, e: u32, config: &IndexConfig) -> Option<(u64, u64)> {
    let (mut occ, mut cap, mut k) = (occupied, capacity, 0u64);
    for _ in 0..e {
        let need = (config.max_occupancy(cap) + 1).saturating_sub(occ);
        k += need as u64;
        occ += need;
        cap = config.capacity_for(occ);
        if cap > config.max_data_node_slots {
            return None;
        }
    }
    if e == 0 {
        return Some((0, 0));
    }
    Some((k, (cap - occ) as u64 * config.slot_bytes))
}

/// One class per data node; every class holds the `E = 0` scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    pub classes: Vec<Vec<Scenario>>,
}

impl ScenarioTable {
    pub fn new(classes: Vec<Vec<Scenario>>) -> Self {
        ScenarioTable { classes }
    }

    /// Scenarios for every snapshot with expansion counts `expansions`
    /// (those above `emax` are dropped).
    pub fn build<K>(nodes: &[NodeSnapshot<K>], expansions: &[u32], emax: u32, config: &IndexConfig) -> Self {
        let classes = nodes
            .iter()
            .map(|n| {
                let mut class = vec![Scenario { node_id: n.node_id, e: 0, k: 0, f: 0 }];
                for &e in expansions.iter().filter(|&&e| e >= 1 && e <= emax) {
                    if let Some((k, f)) = scenario_cost(n.occupied, n.capacity, e, config) {
                        class.push(Scenario { node_id: n.node_id, e, k, f });
                    }
                }
                class
            })
            .collect();
        ScenarioTable { classes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    /// One scenario per class, in class order.
    pub choices: Vec<Scenario>,
    pub total_keys: u64,
    pub predicted_freed_bytes: u64,
    /// False when the time limit cut the exact search short.
    pub proven_optimal: bool,
}

impl AttackPlan {
    fn from_choices(choices: Vec<Scenario>, proven_optimal: bool) -> Self {
        let total_keys = choices.iter().map(|s| s.k).sum();
        let predicted_freed_bytes = choices.iter().map(|s| s.f).sum();
        AttackPlan { choices, total_keys, predicted_freed_bytes, proven_optimal }
    }

    /// Scenarios with at least one expansion.
    pub fn chosen(&self) -> impl Iterator<Item = &Scenario> {
        self.choices.iter().filter(|s| s.e > 0)
    }

    /// Plan file: one `node_id,E,k,f` line per chosen node.
    pub fn to_lines(&self) -> String {
        self.chosen().map(|s| format!("{s}\n")).collect()
    }

    fn objective(&self) -> (u64, std::cmp::Reverse<u64>) {
        (self.predicted_freed_bytes, std::cmp::Reverse(self.total_keys))
    }
}

/// Exact solver. Ties on freed bytes go to fewer keys, then to the plan that
/// spends on earlier classes. Uses a dynamic program over the budget when the
/// table fits, otherwise branch and bound; either returns the best incumbent
/// flagged as unproven if `time_limit` runs out.
pub fn solve_mck(table: &ScenarioTable, budget: u64, time_limit: Duration) -> AttackPlan {
    let deadline = Instant::now() + time_limit;
    let cells = (table.classes.len() as u64).saturating_mul(budget.saturating_add(1));
    let exact = if cells <= DP_MAX_CELLS { solve_dp(table, budget, deadline) } else { None };
    if let Some(plan) = exact {
        return plan;
    }
    solve_branch_and_bound(table, budget, deadline)
}

fn zero_choice(class: &[Scenario]) -> Scenario {
    class.iter().copied().find(|s| s.e == 0).unwrap_or(class[0])
}

type Value = (u64, std::cmp::Reverse<u64>);

fn solve_dp(table: &ScenarioTable, budget: u64, deadline: Instant) -> Option<AttackPlan> {
    let width = budget as usize + 1;
    // best[b]: best objective over classes seen so far using at most b keys.
    let mut best: Vec<Value> = vec![(0, std::cmp::Reverse(0)); width];
    let mut choice: Vec<ChoiceRow> = Vec::with_capacity(table.classes.len());
    for class in &table.classes {
        if Instant::now() > deadline {
            return None;
        }
        assert!(class.len() <= u8::MAX as usize, "too many scenarios in one class");
        let zero = class.iter().position(|s| s.e == 0).expect("every class holds the E = 0 scenario");
        // Starting from the E = 0 option means it wins every tie.
        let mut next = best.clone();
        let mut pick = ChoiceRow::new(width, class.len(), zero);
        for (j, s) in class.iter().enumerate() {
            if s.e == 0 || s.k > budget {
                continue;
            }
            let k = s.k as usize;
            for b in k..width {
                let (f, std::cmp::Reverse(used)) = best[b - k];
                let cand = (f + s.f, std::cmp::Reverse(used + s.k));
                if cand > next[b] {
                    next[b] = cand;
                    pick.set(b, j);
                }
            }
        }
        choice.push(pick);
        best = next;
    }
    let mut b = budget as usize;
    let mut chosen = Vec::with_capacity(table.classes.len());
    for (class, pick) in table.classes.iter().zip(&choice).rev() {
        let s = class[pick.get(b)];
        b -= s.k as usize;
        chosen.push(s);
    }
    chosen.reverse();
    Some(AttackPlan::from_choices(chosen, true))
}

/// Per-class argmax over the budget axis; two bits per entry when the class
/// has at most four scenarios.
enum ChoiceRow {
    Packed(Vec<u64>),
    Wide(Vec<u8>),
}

impl ChoiceRow {
    fn new(width: usize, options: usize, fill: usize) -> Self {
        if options <= 4 {
            let word = (0..32).fold(0u64, |w, i| w | (fill as u64) << (2 * i));
            ChoiceRow::Packed(vec![word; width.div_ceil(32)])
        } else {
            ChoiceRow::Wide(vec![fill as u8; width])
        }
    }

    fn get(&self, b: usize) -> usize {
        match self {
            ChoiceRow::Packed(w) => (w[b / 32] >> (2 * (b % 32)) & 3) as usize,
            ChoiceRow::Wide(v) => v[b] as usize,
        }
    }

    fn set(&mut self, b: usize, j: usize) {
        match self {
            ChoiceRow::Packed(w) => {
                let shift = 2 * (b % 32);
                w[b / 32] = (w[b / 32] & !(3 << shift)) | (j as u64) << shift;
            }
            ChoiceRow::Wide(v) => v[b] = j as u8,
        }
    }
}

fn solve_branch_and_bound(table: &ScenarioTable, budget: u64, deadline: Instant) -> AttackPlan {
    let n = table.classes.len();
    // Classes sorted by their best scenario so the bound tightens early.
    let mut order: Vec<usize> = (0..n).collect();
    let best_f = |c: usize| table.classes[c].iter().map(|s| s.f).max().unwrap_or(0);
    order.sort_by_key(|&c| (std::cmp::Reverse(best_f(c)), c));
    let mut suffix = vec![0u64; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + best_f(order[i]);
    }
    let incumbent = density_greedy(table, budget);
    let mut state = Bnb {
        table,
        order: &order,
        suffix: &suffix,
        deadline,
        timed_out: false,
        current: table.classes.iter().map(|c| zero_choice(c)).collect(),
        best_value: incumbent.objective(),
        best: incumbent.choices.clone(),
        steps: 0,
    };
    state.search(0, budget, 0, 0);
    AttackPlan::from_choices(state.best, !state.timed_out)
}

struct Bnb<'a> {
    table: &'a ScenarioTable,
    order: &'a [usize],
    suffix: &'a [u64],
    deadline: Instant,
    timed_out: bool,
    current: Vec<Scenario>,
    best_value: Value,
    best: Vec<Scenario>,
    steps: u64,
}

impl Bnb<'_> {
    fn search(&mut self, depth: usize, left: u64, f: u64, k: u64) {
        self.steps += 1;
        if self.steps.is_multiple_of(4096) && Instant::now() > self.deadline {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        if depth == self.order.len() {
            let value = (f, std::cmp::Reverse(k));
            if value > self.best_value {
                self.best_value = value;
                self.best = self.current.clone();
            }
            return;
        }
        if f + self.suffix[depth] < self.best_value.0 {
            return;
        }
        let c = self.order[depth];
        let mut items: Vec<Scenario> = self.table.classes[c].iter().copied().filter(|s| s.k <= left).collect();
        items.sort_by_key(|s| (std::cmp::Reverse(s.f), s.k));
        for s in items {
            self.current[c] = s;
            self.search(depth + 1, left - s.k, f + s.f, k + s.k);
        }
        self.current[c] = zero_choice(&self.table.classes[c]);
    }
}

/// Feasible starting point: scenarios by freed bytes per key, best first.
fn density_greedy(table: &ScenarioTable, budget: u64) -> AttackPlan {
    let mut items: Vec<(usize, Scenario)> = table
        .classes
        .iter()
        .enumerate()
        .flat_map(|(c, class)| class.iter().filter(|s| s.e > 0).map(move |&s| (c, s)))
        .collect();
    items.sort_by(|a, b| {
        let ra = a.1.f as f64 / a.1.k.max(1) as f64;
        let rb = b.1.f as f64 / b.1.k.max(1) as f64;
        rb.total_cmp(&ra).then(a.0.cmp(&b.0))
    });
    let mut choices: Vec<Scenario> = table.classes.iter().map(|c| zero_choice(c)).collect();
    let mut left = budget;
    for (c, s) in items {
        let held = choices[c];
        if s.f > held.f && s.k <= left + held.k {
            left = left + held.k - s.k;
            choices[c] = s;
        }
    }
    AttackPlan::from_choices(choices, false)
}

/// The strawman: visit nodes by descending single-expansion payoff and force
/// one expansion in each until the next one no longer fits the budget. The
/// remaining budget is spent on that node without completing an expansion.
pub fn greedy_plan(table: &ScenarioTable, budget: u64) -> AttackPlan {
    let mut order: Vec<(usize, Scenario)> = table
        .classes
        .iter()
        .enumerate()
        .filter_map(|(c, class)| class.iter().find(|s| s.e == 1).map(|&s| (c, s)))
        .collect();
    order.sort_by_key(|(c, s)| (std::cmp::Reverse(s.f), *c));
    let mut choices: Vec<Scenario> = table.classes.iter().map(|c| zero_choice(c)).collect();
    let mut left = budget;
    for (c, s) in order {
        if s.k > left {
            break;
        }
        left -= s.k;
        choices[c] = s;
    }
    AttackPlan::from_choices(choices, false)
}

/// Keys for a plan: for each chosen node in plan order, `k` keys drawn
/// uniformly from its range.
pub fn generate_keys<K: Key>(plan: &AttackPlan, nodes: &[NodeSnapshot<K>], seed: u64) -> Vec<K> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(plan.total_keys as usize);
    for s in plan.chosen() {
        let n = nodes.iter().find(|n| n.node_id == s.node_id).expect("plan node in snapshot");
        out.extend((0..s.k).map(|_| K::uniform_in(n.lo, n.hi, &mut rng)));
    }
    out
}

/// Inserts the planned keys and returns how many were accepted. Keys the
/// target rejects as outside its domain (possible when the plan came from a
/// substitute) are skipped.
pub fn execute_plan<K: Key>(tree: &mut IndexTree<K>, keys: &[K], first_payload: u64) -> Result<u64, IndexError> {
    let mut accepted = 0;
    for (i, &k) in keys.iter().enumerate() {
        match tree.insert(k, first_payload + i as u64) {
            Ok(_) => accepted += 1,
            Err(IndexError::OutOfDomain { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(accepted)
}

/// Snapshot, plan and key generation on `planner_tree` (the target itself in
/// the white-box setting, a substitute in the gray-box one).
pub fn plan_attack<K: Key>(
    planner_tree: &IndexTree<K>,
    budget: u64,
    emax: u32,
    time_limit: Duration,
    seed: u64,
) -> (AttackPlan, Vec<K>) {
    let nodes = snapshot(planner_tree);
    let table = ScenarioTable::build(&nodes, &DEFAULT_EXPANSIONS, emax, planner_tree.config());
    let plan = solve_mck(&table, budget, time_limit);
    let keys = generate_keys(&plan, &nodes, seed);
    (plan, keys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(node_id: NodeId, e: u32, k: u64, f: u64) -> Scenario {
        Scenario { node_id, e, k, f }
    }

    #[test]
    fn forward_simulation_matches_worked_example() {
        let c = IndexConfig::default();
        assert_eq!(scenario_cost(75, 100, 0, &c), Some((0, 0)));
        assert_eq!(scenario_cost(75, 100, 1, &c), Some((6, (135 - 81) * 16)));
        assert_eq!(scenario_cost(75, 100, 2, &c).unwrap().0, 34);
    }

    #[test]
    fn single_class_picks_only_feasible_item() {
        let t = ScenarioTable::new(vec![vec![sc(0, 0, 0, 0), sc(0, 1, 5, 100), sc(0, 2, 12, 260)]]);
        let p = solve_mck(&t, 10, Duration::from_secs(5));
        assert_eq!(p.choices, vec![sc(0, 1, 5, 100)]);
        assert!(p.proven_optimal);
        let p = solve_mck(&t, 0, Duration::from_secs(5));
        assert_eq!((p.total_keys, p.predicted_freed_bytes), (0, 0));
    }

    #[test]
    fn ties_prefer_fewer_keys_then_earlier_nodes() {
        let t = ScenarioTable::new(vec![
            vec![sc(0, 0, 0, 0), sc(0, 1, 4, 50)],
            vec![sc(1, 0, 0, 0), sc(1, 1, 3, 50)],
            vec![sc(2, 0, 0, 0), sc(2, 1, 3, 50)],
        ]);
        let p = solve_mck(&t, 4, Duration::from_secs(5));
        let picked: Vec<_> = p.chosen().map(|s| s.node_id).collect();
        assert_eq!(picked, vec![1]);
        assert_eq!(p.total_keys, 3);
    }

    #[test]
    fn greedy_wastes_budget_below_largest_node() {
        let t = ScenarioTable::new(vec![
            vec![sc(0, 0, 0, 0), sc(0, 1, 50, 1000)],
            vec![sc(1, 0, 0, 0), sc(1, 1, 5, 200)],
        ]);
        assert_eq!(greedy_plan(&t, 20).predicted_freed_bytes, 0);
        assert_eq!(solve_mck(&t, 20, Duration::from_secs(5)).predicted_freed_bytes, 200);
        assert_eq!(greedy_plan(&t, 55).predicted_freed_bytes, 1200);
    }

    #[test]
    fn branch_and_bound_agrees_with_dp() {
        let t = ScenarioTable::new(
            (0..8)
                .map(|i| {
                    vec![sc(i, 0, 0, 0), sc(i, 1, 3 + i as u64, 40 + 7 * i as u64), sc(i, 2, 9 + 2 * i as u64, 90)]
                })
                .collect(),
        );
        for budget in [0, 5, 17, 40, 200] {
            let dp = solve_dp(&t, budget, Instant::now() + Duration::from_secs(5)).unwrap();
            let bb = solve_branch_and_bound(&t, budget, Instant::now() + Duration::from_secs(5));
            assert!(bb.proven_optimal);
            assert_eq!(dp.objective(), bb.objective(), "budget {budget}");
        }
    }

    #[test]
    fn plan_lines_and_keys() {
        let nodes = [NodeSnapshot { node_id: 3, occupied: 0, capacity: 16, lo: 10.0, hi: 20.0 }];
        let plan = AttackPlan::from_choices(vec![sc(3, 1, 5, 64)], true);
        assert_eq!(plan.to_lines(), "3,1,5,64\n");
        let keys = generate_keys(&plan, &nodes, 7);
        assert_eq!(keys.len(), 5);
        assert!(keys.iter().all(|k| (10.0..20.0).contains(k)));
        assert_eq!(keys, generate_keys(&plan, &nodes, 7));
    }
}
