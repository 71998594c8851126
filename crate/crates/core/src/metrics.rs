//! Per-run measurement rows and trajectory rows, written as plain CSV.

use crate::tree::Counters;
use crate::MemoryReport;

/// One measured run. The first twelve columns are the common schema; the rest
/// echo parameters and structural counters so a row can be re-run on its own.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub dataset: String,
    pub policy: String,
    pub setting: String,
    pub batch: u64,
    pub budget_pct: f64,
    pub ops: u64,
    pub seconds: f64,
    pub throughput: f64,
    pub retrains: u64,
    pub expansions: u64,
    pub splits: u64,
    pub cap_exceeded: bool,
    pub run_id: u64,
    pub attack: String,
    pub count: u64,
    pub seed: u64,
    pub budget_keys: u64,
    /// Adversarial keys over adversarial plus legitimate inserts.
    pub budget_pct_inserts: f64,
    pub emax: u64,
    pub bandwidth: f64,
    pub before_bytes: u64,
    pub after_bytes: u64,
    pub peak_bytes: u64,
    pub sideways: u64,
    pub downwards: u64,
    pub doublings: u64,
    pub catastrophic: u64,
    pub insertions_to_cap: Option<u64>,
    pub proven_optimal: Option<bool>,
}

pub const HEADER: &str = "dataset,policy,setting,batch,budget_pct,ops,seconds,throughput,retrains,expansions,splits,cap_exceeded,\
run_id,attack,count,seed,budget_keys,budget_pct_inserts,emax,bandwidth,before_bytes,after_bytes,peak_bytes,\
sideways,downwards,doublings,catastrophic,insertions_to_cap,proven_optimal";

/// Columns that depend on wall-clock time.
pub const TIMING_COLUMNS: [&str; 2] = ["seconds", "throughput"];

impl MetricsRecord {
    pub fn set_counters(&mut self, c: &Counters) {
        self.retrains = c.retrains;
        self.expansions = c.expansions;
        self.splits = c.splits();
        self.sideways = c.sideways_splits;
        self.downwards = c.downwards_splits;
        self.doublings = c.doublings;
        self.catastrophic = c.catastrophic_events;
        self.cap_exceeded = self.cap_exceeded || c.cap_exceeded > 0;
    }

    pub fn set_memory(&mut self, before: u64, after: &MemoryReport) {
        self.before_bytes = before;
        self.after_bytes = after.current_bytes;
        self.peak_bytes = after.peak_bytes;
    }

    pub fn set_timing(&mut self, ops: u64, seconds: f64) {
        self.ops = ops;
        self.seconds = seconds;
        self.throughput = if seconds > 0.0 { ops as f64 / seconds } else { 0.0 };
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
        vec![
            self.dataset.clone(),
            self.policy.clone(),
            self.setting.clone(),
            self.batch.to_string(),
            format!("{:.4}", self.budget_pct),
            self.ops.to_string(),
            format!("{:.6}", self.seconds),
            format!("{:.1}", self.throughput),
            self.retrains.to_string(),
            self.expansions.to_string(),
            self.splits.to_string(),
            self.cap_exceeded.to_string(),
            self.run_id.to_string(),
            self.attack.clone(),
            self.count.to_string(),
            self.seed.to_string(),
            self.budget_keys.to_string(),
            format!("{:.4}", self.budget_pct_inserts),
            self.emax.to_string(),
            format!("{}", self.bandwidth),
            self.before_bytes.to_string(),
            self.after_bytes.to_string(),
            self.peak_bytes.to_string(),
            self.sideways.to_string(),
            self.downwards.to_string(),
            self.doublings.to_string(),
            self.catastrophic.to_string(),
            opt(self.insertions_to_cap),
            self.proven_optimal.map_or(String::new(), |b| b.to_string()),
        ]
    }

    pub fn to_csv(&self) -> String {
        self.fields().join(",")
    }

    /// The row with timing columns blanked, for reproducibility checks.
    pub fn to_csv_untimed(&self) -> String {
        let names: Vec<&str> = HEADER.split(',').collect();
        self.fields()
            .into_iter()
            .zip(names)
            .map(|(v, n)| if TIMING_COLUMNS.contains(&n) { String::new() } else { v })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Relative change of `after_bytes` against a control row.
    pub fn memory_increase_over(&self, control: &MetricsRecord) -> f64 {
        self.after_bytes as f64 / control.after_bytes as f64 - 1.0
    }
}

/// One point of a byte-versus-insertions trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryRow {
    pub insertions: u64,
    pub current_bytes: u64,
    pub peak_bytes: u64,
    pub splits: u64,
    pub doublings: u64,
}

pub const TRAJECTORY_HEADER: &str = "insertions,current_bytes,peak_bytes,splits,doublings";

impl TrajectoryRow {
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{},{}", self.insertions, self.current_bytes, self.peak_bytes, self.splits, self.doublings)
    }
}

/// Mean and range of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(xs: &[f64]) -> Option<Summary> {
    if xs.is_empty() {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Summary { mean, min, max })
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}
