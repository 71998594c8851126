//! Experiment pipelines shared by the command line and the acceptance suite.
//! Every pipeline derives its randomness from one seed through named streams,
//! so paired attack and control runs share the dataset and the bulk load.

use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::duplicate::{self, DupAttackConfig, SpaceRun, SzegpConfig};
use crate::attack::mck::{self, AttackPlan};
use crate::attack::probe_domain;
use crate::attack::time::{run_time_attack, Planner, TimeAttackConfig, TimeAttackError, TimeSetting};
use crate::config::{IndexConfig, SplitPolicy};
use crate::datasets::{gen_dataset, Dataset, DatasetError, DatasetSpec};
use crate::error::IndexError;
use crate::graybox::{build_substitute, fit_kde, GrayBoxError};
use crate::key::Key;
use crate::metrics::{summarize, MetricsRecord};
use crate::tree::IndexTree;
use crate::workload::{gen_workload, split_load_fresh, Mix, WorkloadError, WorkloadSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    GrayBox(#[from] GrayBoxError),
    #[error(transparent)]
    Time(#[from] TimeAttackError),
    #[error("{0}")]
    Invalid(String),
}

/// Named random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dataset = 1,
    Split = 2,
    Workload = 3,
    Attack = 4,
    Substitute = 5,
}

pub fn sub_seed(seed: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

/// Dataset for a run: the spec's seed is the run seed.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    gen_dataset(&DatasetSpec { seed: sub_seed(spec.seed, Stream::Dataset), ..spec.clone() })
}

macro_rules! with_keys {
    ($data:expr, $keys:ident => $body:expr) => {
        match $data {
            Dataset::Real($keys) => $body,
            Dataset::Int($keys) => $body,
        }
    };
}

fn base_record(spec: &DatasetSpec, policy: SplitPolicy, attack: &str, setting: &str) -> MetricsRecord {
    MetricsRecord {
        dataset: spec.family.to_string(),
        policy: policy.as_str().to_string(),
        attack: attack.to_string(),
        setting: setting.to_string(),
        count: spec.count as u64,
        seed: spec.seed,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildSummary {
    pub dataset: String,
    pub keys: usize,
    pub data_nodes: usize,
    pub internal_nodes: usize,
    pub depth: usize,
    pub bytes: u64,
}

impl std::fmt::Display for BuildSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "dataset={} keys={} data_nodes={} internal_nodes={} depth={} bytes={}",
            self.dataset, self.keys, self.data_nodes, self.internal_nodes, self.depth, self.bytes
        )
    }
}

pub fn build(spec: &DatasetSpec, config: &IndexConfig) -> Result<BuildSummary, HarnessError> {
    let data = load_dataset(spec)?;
    with_keys!(&data, keys => {
        let tree = IndexTree::from_keys(keys, config.clone())?;
        Ok(BuildSummary {
            dataset: spec.family.to_string(),
            keys: tree.len(),
            data_nodes: tree.data_nodes().len(),
            internal_nodes: tree.internal_nodes().len(),
            depth: tree.depth(),
            bytes: tree.memory_report().current_bytes,
        })
    })
}

// ---------------------------------------------------------------- space (MCK)

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpaceSetting {
    Control,
    White,
    Gray { bandwidth: f64 },
}

impl SpaceSetting {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpaceSetting::Control => "control",
            SpaceSetting::White => "white",
            SpaceSetting::Gray { .. } => "gray",
        }
    }
}

/// Data-node space attack run. `count` keys in total: a `bulk_fraction` of
/// them is bulk-loaded, the rest arrive as inserts. The attack replaces the
/// last `budget_pct` percent of the keys with planned ones, so attack and
/// control end with the same number of keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSpec {
    pub dataset: DatasetSpec,
    pub config: IndexConfig,
    pub budget_pct: f64,
    pub emax: u32,
    pub bulk_fraction: f64,
    pub time_limit: Duration,
}

impl SpaceSpec {
    pub fn new(dataset: DatasetSpec, budget_pct: f64) -> Self {
        SpaceSpec {
            dataset,
            config: IndexConfig::default(),
            budget_pct,
            emax: 4,
            bulk_fraction: 0.5,
            time_limit: Duration::from_secs(100),
        }
    }

    pub fn budget_keys(&self, total: usize) -> usize {
        ((self.budget_pct / 100.0) * total as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceOutcome {
    pub record: MetricsRecord,
    pub plan: Option<AttackPlan>,
}

pub fn run_space(spec: &SpaceSpec, setting: SpaceSetting) -> Result<SpaceOutcome, HarnessError> {
    if !(0.0..100.0).contains(&spec.budget_pct) || !(0.0..=1.0).contains(&spec.bulk_fraction) {
        return Err(HarnessError::Invalid("budget must be in [0, 100) and bulk fraction in [0, 1]".into()));
    }
    let data = load_dataset(&spec.dataset)?;
    with_keys!(&data, keys => space_inner(spec, setting, keys))
}

/// Tree after the legitimate phase, the legitimate keys and the budget.
fn space_setup<K: Key>(spec: &SpaceSpec, keys: &[K], control: bool) -> Result<(IndexTree<K>, Vec<K>, usize), HarnessError> {
    let total = keys.len();
    let a = if control { 0 } else { spec.budget_keys(total) };
    let bulk = ((spec.bulk_fraction * total as f64).round() as usize).min(total - a);
    let (load, fresh) = split_load_fresh(keys, total - bulk, sub_seed(spec.dataset.seed, Stream::Split));
    let mut tree = IndexTree::from_keys(&load, spec.config.clone())?;
    let legit = &fresh[..fresh.len() - a];
    for (i, &k) in legit.iter().enumerate() {
        tree.insert(k, (load.len() + i) as u64)?;
    }
    let mut known = load;
    known.extend_from_slice(legit);
    Ok((tree, known, a))
}

fn space_inner<K: Key>(spec: &SpaceSpec, setting: SpaceSetting, keys: &[K]) -> Result<SpaceOutcome, HarnessError> {
    let control = setting == SpaceSetting::Control;
    let (mut tree, known, a) = space_setup(spec, keys, control)?;
    let mut rec = base_record(&spec.dataset, spec.config.split_policy, "mck", setting.as_str());
    rec.budget_pct = spec.budget_pct;
    rec.budget_pct_inserts = spec.budget_pct;
    rec.emax = spec.emax as u64;
    let before = tree.memory_report().current_bytes;
    let counters_before = tree.counters();
    let attack_seed = sub_seed(spec.dataset.seed, Stream::Attack);
    let plan = match setting {
        SpaceSetting::Control => None,
        SpaceSetting::White => Some(mck::plan_attack(&tree, a as u64, spec.emax, spec.time_limit, attack_seed)),
        SpaceSetting::Gray { bandwidth } => {
            rec.bandwidth = bandwidth;
            let model = fit_kde(&known, bandwidth)?;
            let sub: IndexTree<K> = build_substitute(
                &model,
                known.len(),
                spec.config.clone(),
                sub_seed(spec.dataset.seed, Stream::Substitute),
            )?;
            Some(mck::plan_attack(&sub, a as u64, spec.emax, spec.time_limit, attack_seed))
        }
    };
    let started = Instant::now();
    let mut inserted = 0u64;
    if let Some((plan, planned)) = &plan {
        rec.proven_optimal = Some(plan.proven_optimal);
        match mck::execute_plan(&mut tree, planned, keys.len() as u64) {
            Ok(n) => inserted = n,
            Err(e) if e.is_cap_exceeded() => rec.cap_exceeded = true,
            Err(e) => return Err(e.into()),
        }
        rec.budget_keys = plan.total_keys;
    }
    rec.set_timing(inserted, started.elapsed().as_secs_f64());
    rec.set_counters(&tree.counters().since(&counters_before));
    rec.set_memory(before, &tree.memory_report());
    Ok(SpaceOutcome { record: rec, plan: plan.map(|p| p.0) })
}

/// The white-box plan for a run, without executing it.
pub fn space_plan(spec: &SpaceSpec) -> Result<AttackPlan, HarnessError> {
    let data = load_dataset(&spec.dataset)?;
    with_keys!(&data, keys => {
        let (tree, _, a) = space_setup(spec, keys, false)?;
        let seed = sub_seed(spec.dataset.seed, Stream::Attack);
        Ok(mck::plan_attack(&tree, a as u64, spec.emax, spec.time_limit, seed).0)
    })
}

// ------------------------------------------------------- duplicate / cluster

/// Internal-node space attack run over a tree bulk-loaded with all `count`
/// keys. The child-table limit is raised to the memory cap so doublings are
/// bounded by memory alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DupSpec {
    pub dataset: DatasetSpec,
    pub config: IndexConfig,
    pub interleave: usize,
    pub max_insertions: u64,
}

impl DupSpec {
    pub fn new(dataset: DatasetSpec, cap_bytes: u64) -> Self {
        let mut config = IndexConfig::default().with_cap(cap_bytes);
        config.max_routing_bytes = cap_bytes;
        DupSpec { dataset, config, interleave: 0, max_insertions: 1_000_000 }
    }
}

fn space_record(spec: &DatasetSpec, config: &IndexConfig, attack: &str, run: &SpaceRun) -> MetricsRecord {
    let mut rec = base_record(spec, config.split_policy, attack, "black");
    rec.budget_keys = run.insertions;
    rec.set_timing(run.insertions, run.seconds);
    rec.set_counters(&run.counters);
    rec.cap_exceeded = run.cap_exceeded;
    rec.set_memory(run.before_bytes, &run.report);
    rec.peak_bytes = run.report.peak_bytes;
    rec.insertions_to_cap = run.cap_exceeded.then_some(run.insertions);
    rec
}

pub fn run_dup(spec: &DupSpec) -> Result<(MetricsRecord, SpaceRun), HarnessError> {
    let data = load_dataset(&spec.dataset)?;
    with_keys!(&data, keys => {
        let (load, ops) = if spec.interleave > 0 {
            let (load, fresh) = split_load_fresh(keys, keys.len() / 10, sub_seed(spec.dataset.seed, Stream::Split));
            let w = WorkloadSpec::new(2 * fresh.len(), Mix::WriteHeavy, sub_seed(spec.dataset.seed, Stream::Workload));
            let ops = gen_workload(&w, &load, &fresh)?;
            (load, ops)
        } else {
            (keys.clone(), Vec::new())
        };
        let mut tree = IndexTree::from_keys(&load, spec.config.clone())?;
        let cfg = DupAttackConfig { target: None, max_insertions: spec.max_insertions, interleave: spec.interleave };
        let run = duplicate::run_duplicate_attack(&mut tree, &cfg, &ops)?;
        let mut rec = space_record(&spec.dataset, &spec.config, "dup", &run);
        rec.batch = spec.interleave as u64;
        Ok((rec, run))
    })
}

pub fn run_szegp(spec: &DupSpec, budget: u64, samples: usize, cluster: u64) -> Result<(MetricsRecord, SpaceRun), HarnessError> {
    let data = load_dataset(&spec.dataset)?;
    with_keys!(&data, keys => {
        let mut tree = IndexTree::from_keys(keys, spec.config.clone())?;
        let mut cfg = SzegpConfig::new(kind_increment::<_>(keys), budget, sub_seed(spec.dataset.seed, Stream::Attack));
        cfg.samples = samples;
        cfg.cluster = cluster;
        let run = duplicate::run_szegp(&mut tree, &cfg);
        let mut rec = space_record(&spec.dataset, &spec.config, "szegp", &run);
        rec.batch = cluster;
        Ok((rec, run))
    })
}

fn kind_increment<K: Key>(_: &[K]) -> f64 {
    K::KIND.default_increment()
}

/// The single-insertion cliff: how far a fresh tree is from its first
/// catastrophic event, and what one more insertion does to a tree stopped
/// just before the cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffOutcome {
    pub insertions_to_cap: Option<u64>,
    pub fresh_distance: Option<u64>,
    pub stopped_distance: Option<u64>,
    pub bytes_before_last: u64,
    pub cap_bytes: u64,
    pub last_insert_exceeded_cap: bool,
}

pub fn run_cliff(spec: &DupSpec) -> Result<CliffOutcome, HarnessError> {
    let data = load_dataset(&spec.dataset)?;
    with_keys!(&data, keys => {
        let tree = IndexTree::from_keys(keys, spec.config.clone())?;
        let limit = spec.max_insertions;
        let fresh_distance = duplicate::trigger_distance(&tree, limit);
        let mut full = tree.clone();
        let cfg = DupAttackConfig { target: None, max_insertions: limit, interleave: 0 };
        let run = duplicate::run_duplicate_attack(&mut full, &cfg, &[])?;
        let mut out = CliffOutcome {
            insertions_to_cap: run.cap_exceeded.then_some(run.insertions),
            fresh_distance,
            stopped_distance: None,
            bytes_before_last: 0,
            cap_bytes: spec.config.memory_cap_bytes,
            last_insert_exceeded_cap: false,
        };
        if let Some(n) = out.insertions_to_cap {
            let mut stopped = tree.clone();
            let cfg = DupAttackConfig { max_insertions: n - 1, ..cfg };
            duplicate::run_duplicate_attack(&mut stopped, &cfg, &[])?;
            out.stopped_distance = duplicate::trigger_distance(&stopped, limit);
            out.bytes_before_last = stopped.memory_report().current_bytes;
            let target = duplicate::default_target(&stopped);
            out.last_insert_exceeded_cap = stopped.insert(target, 0).is_err_and(|e| e.is_cap_exceeded());
        }
        Ok(out)
    })
}

// ----------------------------------------------------------------------- time

/// Time attack run: `count` keys are bulk-loaded into coarse leaves, then a
/// workload of `ops` operations runs with the adversarial batches spliced in.
/// The budget is the adversarial share of all requests.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSpec {
    pub dataset: DatasetSpec,
    pub config: IndexConfig,
    pub ops: usize,
    pub mix: Mix,
    pub budget_pct: f64,
    pub batch: u64,
    pub bandwidth: f64,
    pub repeats: usize,
}

impl TimeSpec {
    pub fn new(dataset: DatasetSpec, policy: SplitPolicy, budget_pct: f64, batch: u64) -> Self {
        TimeSpec {
            dataset,
            config: IndexConfig::default().with_policy(policy).with_coarse_leaves(),
            ops: 100_000,
            mix: Mix::WriteHeavy,
            budget_pct,
            batch,
            bandwidth: 1.0,
            repeats: 1,
        }
    }

    /// Whole batches of adversarial keys for the requested share.
    pub fn budget_keys(&self) -> u64 {
        if self.batch == 0 || self.budget_pct <= 0.0 {
            return 0;
        }
        let a = (self.budget_pct / (100.0 - self.budget_pct) * self.ops as f64).round() as u64;
        a - a % self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeOutcome {
    /// Timing columns hold the mean over repeats.
    pub record: MetricsRecord,
    pub throughputs: Vec<f64>,
}

/// `setting = None` runs the paired control.
pub fn run_time(spec: &TimeSpec, setting: Option<TimeSetting>) -> Result<TimeOutcome, HarnessError> {
    if !(0.0..100.0).contains(&spec.budget_pct) || spec.repeats == 0 {
        return Err(HarnessError::Invalid("budget must be in [0, 100) and repeats at least 1".into()));
    }
    let inserts = WorkloadSpec::new(spec.ops, spec.mix, 0).inserts();
    let dataset = DatasetSpec { count: spec.dataset.count + inserts, ..spec.dataset.clone() };
    let data = load_dataset(&dataset)?;
    with_keys!(&data, keys => time_inner(spec, setting, keys, inserts))
}

fn time_inner<K: Key>(
    spec: &TimeSpec,
    setting: Option<TimeSetting>,
    keys: &[K],
    inserts: usize,
) -> Result<TimeOutcome, HarnessError> {
    let seed = spec.dataset.seed;
    let (load, fresh) = split_load_fresh(keys, inserts, sub_seed(seed, Stream::Split));
    let wspec = WorkloadSpec { ops: spec.ops, ..WorkloadSpec::new(spec.ops, spec.mix, sub_seed(seed, Stream::Workload)) };
    let ops = gen_workload(&wspec, &load, &fresh)?;
    let base = IndexTree::from_keys(&load, spec.config.clone())?;
    let budget = if setting.is_some() { spec.budget_keys() } else { 0 };
    let cfg = TimeAttackConfig { budget, batch: spec.batch.max(1), increment: K::KIND.default_increment() };
    let planner = match setting {
        None | Some(TimeSetting::White) => Planner::White,
        Some(TimeSetting::Gray) => {
            let model = fit_kde(&load, spec.bandwidth)?;
            let sub = build_substitute(&model, load.len(), spec.config.clone(), sub_seed(seed, Stream::Substitute))?;
            Planner::Gray(Box::new(sub))
        }
        Some(TimeSetting::Black) => {
            let (lo, hi) = probe_domain(&base).ok_or_else(|| HarnessError::Invalid("key range probe failed".into()))?;
            Planner::black(lo, hi, sub_seed(seed, Stream::Attack))
        }
    };
    let setting_name = setting.map_or("control", |s| s.as_str());
    let mut rec = base_record(&spec.dataset, spec.config.split_policy, "time", setting_name);
    rec.batch = spec.batch;
    rec.budget_pct = if setting.is_some() { spec.budget_pct } else { 0.0 };
    rec.budget_keys = budget;
    rec.budget_pct_inserts = 100.0 * budget as f64 / (budget + inserts as u64).max(1) as f64;
    if setting == Some(TimeSetting::Gray) {
        rec.bandwidth = spec.bandwidth;
    }
    rec.before_bytes = base.memory_report().current_bytes;
    let mut throughputs = Vec::with_capacity(spec.repeats);
    let mut seconds = Vec::with_capacity(spec.repeats);
    for _ in 0..spec.repeats {
        let mut tree = base.clone();
        let mut p = planner.clone();
        let run = run_time_attack(&mut tree, &ops, &cfg, &mut p)?;
        throughputs.push(run.throughput());
        seconds.push(run.elapsed.as_secs_f64());
        rec.ops = run.ops;
        rec.set_counters(&run.counters);
        rec.cap_exceeded = run.cap_exceeded;
        let r = tree.memory_report();
        rec.after_bytes = r.current_bytes;
        rec.peak_bytes = r.peak_bytes;
    }
    let mean = summarize(&seconds).expect("at least one repeat").mean;
    rec.set_timing(rec.ops, mean);
    Ok(TimeOutcome { record: rec, throughputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Family;

    #[test]
    fn sub_seeds_differ_by_stream() {
        assert_ne!(sub_seed(7, Stream::Dataset), sub_seed(7, Stream::Workload));
        assert_eq!(sub_seed(7, Stream::Attack), sub_seed(7, Stream::Attack));
    }

    #[test]
    fn time_budget_is_whole_batches() {
        let s = TimeSpec::new(DatasetSpec::new(Family::Ycsb, 10, 1), SplitPolicy::ExpansionOnly, 10.0, 200);
        assert_eq!(s.budget_keys(), 11_000);
    }

    #[test]
    fn zero_budget_space_attack_equals_control() {
        let spec = SpaceSpec::new(DatasetSpec::new(Family::Lognormal, 20_000, 3), 0.0);
        let c = run_space(&spec, SpaceSetting::Control).unwrap().record;
        let w = run_space(&spec, SpaceSetting::White).unwrap().record;
        assert_eq!(c.after_bytes, w.after_bytes);
    }
}
