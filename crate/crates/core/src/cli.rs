//! Command-line front end.

use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::attack::{attack_standard_estimator, AttackConfig};
use crate::dp::{privacy_bounds, ChargeLedger, NoiseStream, Variant};
use crate::error::{Error, Result};
use crate::estimators::{
    robust_estimate, tracking_estimate, EstimatorSpec, NoiseCalibration, Response,
};
use crate::experiment::{run_experiment, write_csv, ExperimentConfig, Sidecar};
use crate::sketch::{merge, sketch_set, std_estimate, BottomKSketch, Key, SketchRandomness};

#[derive(Parser, Debug)]
#[command(
    name = "bottomk",
    version,
    about = "Bottom-k sketches and robust cardinality estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sketch newline-delimited key ids.
    Sketch(SketchArgs),
    /// Merge sketch files built with the same randomness.
    Merge(MergeArgs),
    /// Estimate the cardinality behind a sketch file.
    Estimate(EstimateArgs),
    /// Run the adaptive attack against an estimator.
    Attack(AttackArgs),
    /// Print privacy bounds as JSON.
    Accounting(AccountingArgs),
    /// Run the guaranteed-query experiment.
    Experiment(ExperimentArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorKind {
    Std,
    Basic,
    Tracking,
}

#[derive(Args, Debug)]
pub struct SketchArgs {
    /// Key file, `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Universe size; keys must lie in `[0, n)`.
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file, stdout if absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[arg(required = true, num_args = 1..)]
    pub sketches: Vec<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    /// Estimator config JSON; required for the robust estimators.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to the config's variant, or `std` without a config.
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Index of the noise stream, so successive queries draw fresh noise.
    #[arg(long, default_value_t = 0)]
    pub noise_index: u64,
    /// Charge ledger to start from (tracking only).
    #[arg(long)]
    pub ledger_in: Option<PathBuf>,
    /// Where to write the updated ledger (tracking only).
    #[arg(long)]
    pub ledger_out: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Ground set `{0, .., universe-1}`.
    #[arg(long, default_value_t = 1 << 14)]
    pub universe: u64,
    #[arg(long, value_enum, default_value = "std")]
    pub estimator: EstimatorKind,
    /// Defaults to the calibrated round count.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Defaults to the calibrated fraction.
    #[arg(long)]
    pub removal_fraction: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Participation budget of the robust estimators; defaults to the query count.
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long, value_enum, default_value = "sized")]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON, stdout if absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Transcript, one JSON object per line.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Sized,
    Analytic,
}

impl From<NoiseArg> for NoiseCalibration {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Sized => NoiseCalibration::Sized,
            NoiseArg::Analytic => NoiseCalibration::Analytic,
        }
    }
}

#[derive(Args, Debug)]
pub struct AccountingArgs {
    #[arg(long)]
    pub r: u32,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub delta: f64,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's trial count.
    #[arg(long)]
    pub trials: Option<u32>,
    /// CSV output, stdout if absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// JSON sidecar; defaults to the CSV path with `.json` appended.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sketch(a) => cmd_sketch(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Accounting(a) => cmd_accounting(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(fs::read_to_string(path)?)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn with_newline(mut s: String) -> String {
    s.push('\n');
    s
}

fn parse_keys(text: &str) -> Result<Vec<Key>> {
    text.as_bytes()
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(l.trim().parse::<u64>().map(Key).map_err(|_| {
                Error::Parse(format!("line {}: {:?} is not a key id", i + 1, l.trim()))
            })),
            Err(e) => Some(Err(e.into())),
        })
        .collect()
}

fn read_sketch(path: &Path) -> Result<BottomKSketch> {
    BottomKSketch::from_json(&fs::read_to_string(path)?)
}

fn cmd_sketch(a: SketchArgs) -> Result<()> {
    let keys = parse_keys(&read_input(&a.input)?)?;
    let rand = SketchRandomness::new(a.seed, a.n)?;
    let s = sketch_set(&rand, keys, a.k)?;
    write_output(a.output.as_deref(), &with_newline(s.to_json()))
}

fn cmd_merge(a: MergeArgs) -> Result<()> {
    let mut acc = read_sketch(&a.sketches[0])?;
    for path in &a.sketches[1..] {
        acc = merge(&acc, &read_sketch(path)?)?;
    }
    write_output(a.output.as_deref(), &with_newline(acc.to_json()))
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let s = read_sketch(&a.sketch)?;
    let spec = match &a.config {
        Some(p) => {
            let mut spec: EstimatorSpec = serde_json::from_str(&fs::read_to_string(p)?)?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            Some(spec)
        }
        None => None,
    };
    let kind = a.estimator.unwrap_or(match &spec {
        None => EstimatorKind::Std,
        Some(s) if s.variant == Variant::Tracking => EstimatorKind::Tracking,
        Some(_) => EstimatorKind::Basic,
    });
    let response = match kind {
        EstimatorKind::Std => {
            let est = std_estimate(&s);
            Response {
                estimate: est.value,
                exact: est.exact,
                saturated: est.saturated,
                deactivated: None,
            }
        }
        robust => {
            let mut spec =
                spec.ok_or_else(|| crate::error::invalid!("robust estimators need --config"))?;
            spec.variant = if robust == EstimatorKind::Tracking {
                Variant::Tracking
            } else {
                Variant::Basic
            };
            let cfg = spec.build()?;
            let mut noise = NoiseStream::with_index(cfg.seed(), a.noise_index);
            if robust == EstimatorKind::Basic {
                let (est, _) = robust_estimate(&cfg, &s, &mut noise)?;
                Response {
                    estimate: est.value,
                    exact: est.exact,
                    saturated: est.saturated,
                    deactivated: None,
                }
            } else {
                let mut ledger = match &a.ledger_in {
                    Some(p) => ChargeLedger::from_json(&fs::read_to_string(p)?)?,
                    None => ChargeLedger::new(cfg.r())?,
                };
                let (est, _, diag) = tracking_estimate(&cfg, &s, &mut ledger, &mut noise)?;
                if let Some(p) = &a.ledger_out {
                    fs::write(p, with_newline(ledger.to_json()))?;
                }
                Response {
                    estimate: est.value,
                    exact: est.exact,
                    saturated: est.saturated,
                    deactivated: Some(diag.deactivated),
                }
            }
        }
    };
    write_output(
        a.output.as_deref(),
        &with_newline(serde_json::to_string_pretty(&response)?),
    )
}

fn cmd_attack(a: AttackArgs) -> Result<()> {
    let size =
        usize::try_from(a.universe).map_err(|_| crate::error::invalid!("universe too large"))?;
    let mut cfg = AttackConfig::calibrated(a.k, size, a.seed);
    if let Some(rounds) = a.rounds {
        cfg.rounds = rounds;
    }
    if let Some(f) = a.removal_fraction {
        cfg.removal_fraction = f;
    }
    let rand = SketchRandomness::new(a.seed, a.universe)?;
    let ground: Vec<Key> = (0..a.universe).map(Key).collect();
    let k = a.k;

    let (report, transcript) = match a.estimator {
        EstimatorKind::Std => attack_standard_estimator(&ground, &cfg, |q| {
            Ok(std_estimate(&sketch_set(&rand, q.iter().copied(), k)?))
        })?,
        robust => {
            let variant = if robust == EstimatorKind::Tracking {
                Variant::Tracking
            } else {
                Variant::Basic
            };
            let r = a.r.unwrap_or(cfg.queries() as u32);
            let est = EstimatorSpec::new(k, r, a.universe, a.alpha, a.beta, variant)
                .seed(a.seed)
                .noise(a.noise.into())
                .build()?;
            let mut noise = NoiseStream::new(a.seed);
            let mut ledger = ChargeLedger::new(r)?;
            attack_standard_estimator(&ground, &cfg, |q| {
                let s = sketch_set(&rand, q.iter().copied(), k)?;
                if variant == Variant::Tracking {
                    Ok(tracking_estimate(&est, &s, &mut ledger, &mut noise)?.0)
                } else {
                    Ok(robust_estimate(&est, &s, &mut noise)?.0)
                }
            })?
        }
    };

    if let Some(p) = &a.transcript {
        let mut out = BufWriter::new(fs::File::create(p)?);
        for entry in &transcript {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    write_output(
        a.report.as_deref(),
        &with_newline(serde_json::to_string_pretty(&report)?),
    )
}

fn cmd_accounting(a: AccountingArgs) -> Result<()> {
    let bounds = privacy_bounds(a.r, a.eps, a.alpha, a.delta)?;
    write_output(None, &with_newline(serde_json::to_string_pretty(&bounds)?))
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&a.config)?)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = a.trials {
        cfg.trials = trials;
    }
    let rows = run_experiment(&cfg)?;
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv)?;
    let csv = String::from_utf8(csv).expect("csv is ASCII");
    write_output(a.output.as_deref(), &csv)?;
    let sidecar = a.sidecar.or_else(|| {
        a.output.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".json");
            PathBuf::from(s)
        })
    });
    if let Some(p) = sidecar {
        let json = serde_json::to_string_pretty(&Sidecar {
            config: &cfg,
            rows: &rows,
        })?;
        fs::write(p, with_newline(json))?;
    }
    Ok(())
}
