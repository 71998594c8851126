//! Operation streams: exact-count insert/lookup mixes with Zipfian lookups.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::key::Key;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op<K> {
    Insert(K, u64),
    Lookup(K),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mix {
    WriteHeavy,
    ReadHeavy,
}

impl Mix {
    pub fn insert_fraction(self) -> f64 {
        match self {
            Mix::WriteHeavy => 0.5,
            Mix::ReadHeavy => 0.1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mix::WriteHeavy => "write-heavy",
            Mix::ReadHeavy => "read-heavy",
        }
    }
}

impl std::str::FromStr for Mix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "write-heavy" => Ok(Mix::WriteHeavy),
            "read-heavy" => Ok(Mix::ReadHeavy),
            other => Err(format!("unknown mix `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub ops: usize,
    pub insert_fraction: f64,
    pub theta: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(ops: usize, mix: Mix, seed: u64) -> Self {
        WorkloadSpec { ops, insert_fraction: mix.insert_fraction(), theta: 0.99, seed }
    }

    pub fn inserts(&self) -> usize {
        (self.ops as f64 * self.insert_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkloadError {
    #[error("workload needs {needed} fresh keys but only {available} are available")]
    InsufficientFresh { needed: usize, available: usize },
    #[error("lookups requested over an empty key set")]
    NoExistingKeys,
    #[error("invalid workload parameter: {0}")]
    Invalid(String),
}

/// Zipfian choice over `n` items: rank 1 is the most frequent. Ranks are
/// mapped to items through a seeded permutation so popularity is not tied to
/// key order.
#[derive(Debug, Clone)]
pub struct ZipfPicker {
    zipf: Zipf<f64>,
    perm: Vec<u32>,
}

impl ZipfPicker {
    pub fn new(n: usize, theta: f64, rng: &mut ChaCha8Rng) -> Result<Self, WorkloadError> {
        if n == 0 {
            return Err(WorkloadError::NoExistingKeys);
        }
        let zipf = Zipf::new(n as f64, theta).map_err(|e| WorkloadError::Invalid(e.to_string()))?;
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(rng);
        Ok(ZipfPicker { zipf, perm })
    }

    /// 1-based popularity rank.
    pub fn rank(&self, rng: &mut ChaCha8Rng) -> usize {
        (self.zipf.sample(rng) as usize).clamp(1, self.perm.len())
    }

    pub fn pick(&self, rng: &mut ChaCha8Rng) -> usize {
        self.perm[self.rank(rng) - 1] as usize
    }
}

/// Splits a sorted key set into a sorted bulk-load part and a shuffled tail
/// of `fresh` keys reserved for inserts. The smallest and largest keys stay
/// in the load part whenever it has room, so every fresh key falls inside the
/// bulk-loaded domain.
pub fn split_load_fresh<K: Key>(keys: &[K], fresh: usize, seed: u64) -> (Vec<K>, Vec<K>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = keys.to_vec();
    all.shuffle(&mut rng);
    let fresh = fresh.min(all.len());
    let keep = (all.len() - fresh).min(2);
    for slot in 0..keep {
        let pick = |v: &[K]| {
            let it = v.iter().enumerate().skip(slot);
            let pos = if slot == 0 {
                it.min_by(|a, b| a.1.partial_cmp(b.1).expect("ordered keys"))
            } else {
                it.max_by(|a, b| a.1.partial_cmp(b.1).expect("ordered keys"))
            };
            pos.map(|(i, _)| i)
        };
        if let Some(i) = pick(&all) {
            all.swap(slot, i);
        }
    }
    let tail = all.split_off(all.len() - fresh);
    all.sort_unstable_by(|a, b| a.partial_cmp(b).expect("ordered keys"));
    (all, tail)
}

/// Builds the operation stream. Inserts consume `fresh` in order; lookups
/// target `existing` by Zipfian rank.
pub fn gen_workload<K: Key>(spec: &WorkloadSpec, existing: &[K], fresh: &[K]) -> Result<Vec<Op<K>>, WorkloadError> {
    if !(0.0..=1.0).contains(&spec.insert_fraction) {
        return Err(WorkloadError::Invalid(format!("insert fraction {}", spec.insert_fraction)));
    }
    let inserts = spec.inserts();
    let lookups = spec.ops - inserts;
    if inserts > fresh.len() {
        return Err(WorkloadError::InsufficientFresh { needed: inserts, available: fresh.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tags: Vec<bool> = std::iter::repeat_n(true, inserts).chain(std::iter::repeat_n(false, lookups)).collect();
    tags.shuffle(&mut rng);
    let picker = if lookups > 0 { Some(ZipfPicker::new(existing.len(), spec.theta, &mut rng)?) } else { None };
    let mut next_fresh = fresh.iter();
    let mut id = 0u64;
    Ok(tags
        .into_iter()
        .map(|is_insert| {
            if is_insert {
                id += 1;
                Op::Insert(*next_fresh.next().expect("counted"), id)
            } else {
                let picker = picker.as_ref().expect("lookups present");
                Op::Lookup(existing[picker.pick(&mut rng)])
            }
        })
        .collect())
}
