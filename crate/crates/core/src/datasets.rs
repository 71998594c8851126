//! Dataset generators and the raw key-file loader.
//!
//! `longitude` and `longlat` are synthetic stand-ins for map-derived
//! coordinates: a two-mode normal mixture over [-180, 180), and the
//! `180 * floor(longitude) + latitude` packing of paired samples. `ycsb` is
//! uniform over the non-negative signed 64-bit range and `lognormal` is
//! `floor(exp(N(0, sigma)) * 1e9)` with sigma 2 by default. Files are
//! headerless little-endian 8-byte records.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::key::KeyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Longitude,
    Longlat,
    Ycsb,
    Lognormal,
    File,
}

impl Family {
    pub const GENERATED: [Family; 4] = [Family::Longitude, Family::Longlat, Family::Ycsb, Family::Lognormal];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Longitude => "longitude",
            Family::Longlat => "longlat",
            Family::Ycsb => "ycsb",
            Family::Lognormal => "lognormal",
            Family::File => "file",
        }
    }

    /// Key representation of a generated family; files declare their own.
    pub fn key_kind(self) -> Option<KeyKind> {
        match self {
            Family::Longitude | Family::Longlat => Some(KeyKind::Real),
            Family::Ycsb | Family::Lognormal => Some(KeyKind::Integer),
            Family::File => None,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "longitude" => Ok(Family::Longitude),
            "longlat" => Ok(Family::Longlat),
            "ycsb" => Ok(Family::Ycsb),
            "lognormal" => Ok(Family::Lognormal),
            "file" => Ok(Family::File),
            other => Err(format!("unknown dataset family `{other}`")),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset count must be at least 1")]
    EmptyCount,
    #[error("the file family needs a path and a key type")]
    MissingFile,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: length is not a multiple of 8 bytes")]
    Truncated(PathBuf),
    #[error("{family} keys are {actual}, not {requested}")]
    WrongKind { family: Family, actual: &'static str, requested: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub family: Family,
    pub count: usize,
    pub seed: u64,
    pub lognormal_sigma: f64,
    pub path: Option<PathBuf>,
    pub file_kind: Option<KeyKind>,
}

impl DatasetSpec {
    pub fn new(family: Family, count: usize, seed: u64) -> Self {
        DatasetSpec { family, count, seed, lognormal_sigma: 2.0, path: None, file_kind: None }
    }

    pub fn key_kind(&self) -> Option<KeyKind> {
        self.family.key_kind().or(self.file_kind)
    }
}

/// A generated or loaded key set, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Real(Vec<f64>),
    Int(Vec<u64>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Real(v) => v.len(),
            Dataset::Int(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn gen_dataset(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    if spec.family != Family::File && spec.count == 0 {
        return Err(DatasetError::EmptyCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let out = match spec.family {
        Family::Longitude => Dataset::Real(sorted_f64((0..spec.count).map(|_| longitude(&mut rng)).collect())),
        Family::Longlat => Dataset::Real(sorted_f64(
            (0..spec.count).map(|_| longlat_key(longitude(&mut rng), latitude(&mut rng))).collect(),
        )),
        Family::Ycsb => {
            let mut v: Vec<u64> = (0..spec.count).map(|_| rng.random_range(0..1u64 << 63)).collect();
            v.sort_unstable();
            Dataset::Int(v)
        }
        Family::Lognormal => {
            let normal = Normal::new(0.0, spec.lognormal_sigma).expect("finite sigma");
            let mut v: Vec<u64> =
                (0..spec.count).map(|_| (normal.sample(&mut rng).exp() * 1e9).floor() as u64).collect();
            v.sort_unstable();
            Dataset::Int(v)
        }
        Family::File => {
            let path = spec.path.as_deref().ok_or(DatasetError::MissingFile)?;
            let kind = spec.file_kind.ok_or(DatasetError::MissingFile)?;
            load_file(path, kind)?
        }
    };
    Ok(out)
}

/// Typed access for generic pipelines.
pub fn gen_real(spec: &DatasetSpec) -> Result<Vec<f64>, DatasetError> {
    match gen_dataset(spec)? {
        Dataset::Real(v) => Ok(v),
        Dataset::Int(_) => Err(DatasetError::WrongKind { family: spec.family, actual: "int", requested: "real" }),
    }
}

pub fn gen_int(spec: &DatasetSpec) -> Result<Vec<u64>, DatasetError> {
    match gen_dataset(spec)? {
        Dataset::Int(v) => Ok(v),
        Dataset::Real(_) => Err(DatasetError::WrongKind { family: spec.family, actual: "real", requested: "int" }),
    }
}

pub fn longlat_key(longitude: f64, latitude: f64) -> f64 {
    180.0 * longitude.floor() + latitude
}

fn longitude<R: Rng>(rng: &mut R) -> f64 {
    let west = Normal::new(-80.0, 20.0).expect("valid");
    let east = Normal::new(15.0, 25.0).expect("valid");
    loop {
        let x = if rng.random_bool(0.4) { west.sample(rng) } else { east.sample(rng) };
        if (-180.0..180.0).contains(&x) {
            return x;
        }
    }
}

fn latitude<R: Rng>(rng: &mut R) -> f64 {
    let n = Normal::new(35.0, 20.0).expect("valid");
    loop {
        let y = n.sample(rng);
        if (-90.0..90.0).contains(&y) {
            return y;
        }
    }
}

fn sorted_f64(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn load_file(path: &Path, kind: KeyKind) -> Result<Dataset, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    if bytes.len() % 8 != 0 {
        return Err(DatasetError::Truncated(path.to_path_buf()));
    }
    let words = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")));
    Ok(match kind {
        KeyKind::Integer => {
            let mut v: Vec<u64> = words.collect();
            v.sort_unstable();
            Dataset::Int(v)
        }
        KeyKind::Real => Dataset::Real(sorted_f64(words.map(f64::from_bits).filter(|x| x.is_finite()).collect())),
    })
}

pub fn write_file(path: &Path, data: &Dataset) -> std::io::Result<()> {
    let bytes: Vec<u8> = match data {
        Dataset::Real(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        Dataset::Int(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
    };
    std::fs::write(path, bytes)
}
