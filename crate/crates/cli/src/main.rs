use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use alexaca::attack::duplicate::SpaceRun;
use alexaca::attack::time::TimeSetting;
use alexaca::datasets::{DatasetSpec, Family};
use alexaca::harness::{self, DupSpec, HarnessError, SpaceSetting, SpaceSpec, TimeSpec};
use alexaca::metrics::{HEADER, TRAJECTORY_HEADER};
use alexaca::workload::Mix;
use alexaca::{IndexConfig, IndexError, KeyKind, MetricsRecord, SplitPolicy, GIB};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Learned index builder and algorithmic-complexity attack harness.
///
/// Metrics go to standard output as CSV; diagnostics go to standard error.
#[derive(Debug, Parser)]
#[command(name = "alexaca", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bulk-load a dataset and print a summary line.
    Build {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        index: IndexArgs,
    },
    /// Run an experiment pipeline with no adversarial budget.
    Control {
        #[arg(long, value_enum, default_value_t = Experiment::Space)]
        experiment: Experiment,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run an attack and print one metrics row per trial.
    Attack {
        #[arg(value_enum)]
        kind: AttackKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the white-box space-attack plan as `node_id,E,k,f` lines.
    DumpPlan {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[command(flatten)]
        space: SpaceArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Space,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackKind {
    MckWhite,
    MckGray,
    Dup,
    Szegp,
    TimeWhite,
    TimeGray,
    TimeBlack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Real,
    Int,
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    #[arg(long, default_value = "lognormal")]
    family: Family,
    #[arg(long, default_value_t = 1_000_000)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Headerless little-endian file of 8-byte keys (with `--family file`).
    #[arg(long)]
    path: Option<PathBuf>,
    /// How keys in `--path` are read.
    #[arg(long, value_enum)]
    key_kind: Option<KindArg>,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
}

impl DataArgs {
    fn spec(&self, seed: u64) -> Result<DatasetSpec> {
        if (self.family == Family::File) != self.path.is_some() {
            bail!("--path is required with --family file and only allowed with it");
        }
        let mut spec = DatasetSpec::new(self.family, self.count, seed);
        spec.lognormal_sigma = self.sigma;
        spec.path = self.path.clone();
        spec.file_kind = self.key_kind.map(|k| match k {
            KindArg::Real => KeyKind::Real,
            KindArg::Int => KeyKind::Integer,
        });
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
struct IndexArgs {
    /// Accounted index memory cap in GiB.
    #[arg(long, env = "ALEXACA_CAP_GB", default_value_t = 2.0)]
    cap_gb: f64,
    #[arg(long, default_value = "vanilla")]
    policy: SplitPolicy,
}

impl IndexArgs {
    fn cap_bytes(&self) -> Result<u64> {
        if !(self.cap_gb > 0.0 && self.cap_gb.is_finite()) {
            bail!("--cap-gb must be positive, got {}", self.cap_gb);
        }
        Ok((self.cap_gb * GIB as f64) as u64)
    }

    fn config(&self) -> Result<IndexConfig> {
        Ok(IndexConfig::default().with_policy(self.policy).with_cap(self.cap_bytes()?))
    }
}

#[derive(Debug, Clone, Args)]
struct SpaceArgs {
    /// Adversarial share of the keys (space attacks) or of the requests
    /// (time attacks), in percent.
    #[arg(long, default_value_t = 5.0)]
    budget_pct: f64,
    #[arg(long, default_value_t = 4)]
    emax: u32,
    #[arg(long, default_value_t = 0.5)]
    bulk_fraction: f64,
    #[arg(long, default_value_t = 100)]
    time_limit_secs: u64,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    index: IndexArgs,
    #[command(flatten)]
    space: SpaceArgs,
    /// KDE bandwidth for gray-box attacks.
    #[arg(long, default_value_t = 1.0)]
    bandwidth: f64,
    #[arg(long, default_value = "write-heavy")]
    mix: Mix,
    #[arg(long, default_value_t = 100_000)]
    ops: usize,
    #[arg(long, default_value_t = 200)]
    batch: u64,
    /// Trials. Time runs repeat on one seed and report mean timing; other
    /// runs use seeds `seed, seed + 1, ...`, one row each.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Legitimate operations between duplicate insertions.
    #[arg(long, default_value_t = 0)]
    interleave: usize,
    #[arg(long, default_value_t = 1_000_000)]
    max_insertions: u64,
    /// SZEGP key budget.
    #[arg(long, default_value_t = 1_000_000)]
    szegp_budget: u64,
    #[arg(long, default_value_t = 1000)]
    szegp_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    szegp_cluster: u64,
    /// Write the memory trajectory of duplicate and SZEGP runs here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    no_header: bool,
}

impl RunArgs {
    fn space_spec(&self, seed: u64) -> Result<SpaceSpec> {
        let mut spec = SpaceSpec::new(self.data.spec(seed)?, self.space.budget_pct);
        spec.config = self.index.config()?;
        spec.emax = self.space.emax;
        spec.bulk_fraction = self.space.bulk_fraction;
        spec.time_limit = Duration::from_secs(self.space.time_limit_secs);
        Ok(spec)
    }

    fn dup_spec(&self, seed: u64) -> Result<DupSpec> {
        let mut spec = DupSpec::new(self.data.spec(seed)?, self.index.cap_bytes()?);
        spec.config.split_policy = self.index.policy;
        spec.interleave = self.interleave;
        spec.max_insertions = self.max_insertions;
        Ok(spec)
    }

    fn time_spec(&self) -> Result<TimeSpec> {
        let mut spec = TimeSpec::new(self.data.spec(self.data.seed)?, self.index.policy, self.space.budget_pct, self.batch);
        spec.config = spec.config.with_cap(self.index.cap_bytes()?);
        spec.ops = self.ops;
        spec.mix = self.mix;
        spec.bandwidth = self.bandwidth;
        spec.repeats = self.repeat.max(1);
        Ok(spec)
    }

    fn seeds(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.repeat.max(1) as u64).map(|i| (i, self.data.seed.wrapping_add(i)))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Build { data, index } => {
            match harness::build(&data.spec(data.seed)?, &index.config()?) {
                Ok(summary) => writeln!(out, "{summary}")?,
                Err(HarnessError::Index(e @ IndexError::CapExceeded { .. })) => {
                    eprintln!("error: bulk load stopped: {e}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Control { experiment, run } => {
            header(&mut out, &run)?;
            match experiment {
                Experiment::Space => {
                    for (i, seed) in run.seeds() {
                        let mut rec = harness::run_space(&run.space_spec(seed)?, SpaceSetting::Control)?.record;
                        rec.run_id = i;
                        writeln!(out, "{}", rec.to_csv())?;
                    }
                }
                Experiment::Time => {
                    let rec = harness::run_time(&run.time_spec()?, None)?.record;
                    writeln!(out, "{}", rec.to_csv())?;
                }
            }
        }
        Command::Attack { kind, run } => {
            header(&mut out, &run)?;
            attack(&mut out, kind, &run)?;
        }
        Command::DumpPlan { data, index, space } => {
            let mut spec = SpaceSpec::new(data.spec(data.seed)?, space.budget_pct);
            spec.config = index.config()?;
            spec.emax = space.emax;
            spec.bulk_fraction = space.bulk_fraction;
            spec.time_limit = Duration::from_secs(space.time_limit_secs);
            let plan = harness::space_plan(&spec)?;
            eprintln!(
                "{} nodes, {} keys, {} bytes freed{}",
                plan.chosen().count(),
                plan.total_keys,
                plan.predicted_freed_bytes,
                if plan.proven_optimal { "" } else { " (time limit hit, best found)" }
            );
            write!(out, "{}", plan.to_lines())?;
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn header(out: &mut impl Write, run: &RunArgs) -> Result<()> {
    if !run.no_header {
        writeln!(out, "{HEADER}")?;
    }
    Ok(())
}

fn attack(out: &mut impl Write, kind: AttackKind, run: &RunArgs) -> Result<()> {
    let time_setting = match kind {
        AttackKind::TimeWhite => Some(TimeSetting::White),
        AttackKind::TimeGray => Some(TimeSetting::Gray),
        AttackKind::TimeBlack => Some(TimeSetting::Black),
        _ => None,
    };
    if let Some(setting) = time_setting {
        let outcome = harness::run_time(&run.time_spec()?, Some(setting))?;
        report(&outcome.record);
        return Ok(writeln!(out, "{}", outcome.record.to_csv())?);
    }
    let mut trajectory = match &run.trajectory {
        Some(p) if matches!(kind, AttackKind::Dup | AttackKind::Szegp) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            writeln!(w, "run_id,{TRAJECTORY_HEADER}")?;
            Some(w)
        }
        Some(_) => bail!("--trajectory applies to dup and szegp only"),
        None => None,
    };
    for (i, seed) in run.seeds() {
        let (mut rec, space_run): (MetricsRecord, Option<SpaceRun>) = match kind {
            AttackKind::MckWhite => (harness::run_space(&run.space_spec(seed)?, SpaceSetting::White)?.record, None),
            AttackKind::MckGray => {
                let setting = SpaceSetting::Gray { bandwidth: run.bandwidth };
                (harness::run_space(&run.space_spec(seed)?, setting)?.record, None)
            }
            AttackKind::Dup => {
                let (rec, r) = harness::run_dup(&run.dup_spec(seed)?)?;
                (rec, Some(r))
            }
            AttackKind::Szegp => {
                let (rec, r) = harness::run_szegp(&run.dup_spec(seed)?, run.szegp_budget, run.szegp_samples, run.szegp_cluster)?;
                (rec, Some(r))
            }
            _ => unreachable!("time attacks handled above"),
        };
        rec.run_id = i;
        report(&rec);
        writeln!(out, "{}", rec.to_csv())?;
        if let (Some(w), Some(r)) = (trajectory.as_mut(), space_run) {
            for row in &r.trajectory {
                writeln!(w, "{i},{}", row.to_csv())?;
            }
        }
    }
    if let Some(mut w) = trajectory {
        w.flush()?;
    }
    Ok(())
}

fn report(rec: &MetricsRecord) {
    if rec.cap_exceeded {
        eprintln!("{} {} {}: memory cap reached after {} adversarial keys", rec.dataset, rec.attack, rec.setting, rec.budget_keys);
    }
}
