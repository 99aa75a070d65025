use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use mallows::divergence::{self, Kind, MethodChoice};
use mallows::estimate::{estimate_full, estimate_full_split, estimate_known_center, SampleBatch};
use mallows::experiments::{self, mad_vs_std_diagnostic, ExperimentConfig, ExperimentKind};
use mallows::perm::{format_permutations, parse_permutations};
use mallows::{BlockPartition, MallowsBlockModel};

const EXIT_FAILURE: u8 = 1;
const EXIT_CAPABILITY: u8 = 2;

#[derive(Parser)]
#[command(name = "mallows", version, about = "Mallows Block Model sampling, estimation and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw rankings from a model, one per line.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate central ranking and spreads from a ranking file.
    Estimate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        /// Known central ranking; skips ranking estimation.
        #[arg(long)]
        pi0: Option<PathBuf>,
        /// Estimate the ranking on the first half and the spreads on the second.
        #[arg(long, conflicts_with = "pi0")]
        split: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// KL or TV divergence between two models.
    Divergence {
        #[arg(short = 'a', long = "model-a")]
        a: PathBuf,
        #[arg(short = 'b', long = "model-b")]
        b: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and write `<kind>.csv` and `<kind>.json`.
    Experiment {
        #[arg(long, value_parser = parse_kind)]
        kind: Option<ExperimentKind>,
        /// JSON config; its fields override the defaults for the kind.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Moments and deviation diagnostics of a model.
    ModelInfo {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Kl,
    Tv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Exact,
    Mc,
    Sumstat,
    Bound,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: mallows::Error| e.to_string())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("invalid {what} in {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("MALLOWS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("MALLOWS_THREADS must be a nonnegative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Sample { model, n, seed, out } => {
            let model: MallowsBlockModel = read_json(&model, "model")?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draws: Vec<_> = (0..n).map(|_| model.sample(&mut rng)).collect();
            emit(out.as_deref(), &format_permutations(&draws))
        }
        Command::Estimate {
            samples,
            partition,
            pi0,
            split,
            out,
        } => {
            let partition: BlockPartition = read_json(&partition, "partition")?;
            let batch = SampleBatch::from_text(&read(&samples)?)
                .with_context(|| format!("invalid samples in {}", samples.display()))?;
            let report = match pi0 {
                Some(path) => {
                    let mut centers = parse_permutations(&read(&path)?)
                        .with_context(|| format!("invalid central ranking in {}", path.display()))?;
                    if centers.len() != 1 {
                        bail!("{} must hold exactly one ranking, found {}", path.display(), centers.len());
                    }
                    estimate_known_center(&batch, &centers.remove(0), &partition)?
                }
                None if split => estimate_full_split(&batch, &partition)?,
                None => estimate_full(&batch, &partition)?,
            };
            emit(out.as_deref(), &pretty(&report))
        }
        Command::Divergence {
            a,
            b,
            kind,
            method,
            draws,
            seed,
            out,
        } => {
            let ma: MallowsBlockModel = read_json(&a, "model")?;
            let mb: MallowsBlockModel = read_json(&b, "model")?;
            let kind = match kind {
                KindArg::Kl => Kind::Kl,
                KindArg::Tv => Kind::Tv,
            };
            let method = match method {
                MethodArg::Auto => MethodChoice::Auto,
                MethodArg::Exact => MethodChoice::Exact,
                MethodArg::Mc => MethodChoice::Mc,
                MethodArg::Sumstat => MethodChoice::Sumstat,
                MethodArg::Bound => MethodChoice::Bound,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let result = divergence::compute(&ma, &mb, kind, method, draws, &mut rng)?;
            let mut v = serde_json::to_value(result)?;
            v["kind"] = serde_json::to_value(kind)?;
            emit(out.as_deref(), &pretty(&v))
        }
        Command::Experiment {
            kind,
            config,
            seed,
            trials,
            out,
        } => {
            let mut cfg = match (config, kind) {
                (Some(path), kind) => {
                    let cfg: ExperimentConfig = read_json(&path, "experiment config")?;
                    if kind.is_some_and(|k| k != cfg.kind) {
                        bail!("--kind disagrees with the kind in {}", path.display());
                    }
                    cfg
                }
                (None, Some(kind)) => ExperimentConfig::default_for(kind),
                (None, None) => bail!("either --kind or --config is required"),
            };
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            let report = experiments::run(&cfg)?;
            report.write_to(&out)?;
            emit(None, &(report.summary_json() + "\n"))?;
            for a in report.assertions.iter().filter(|a| !a.passed) {
                eprintln!("assertion failed: {} ({})", a.name, a.detail);
            }
            if !report.passed() {
                bail!("experiment {} failed", cfg.kind);
            }
            Ok(())
        }
        Command::ModelInfo { model } => {
            let model: MallowsBlockModel = read_json(&model, "model")?;
            let info = json!({
                "m": model.m(),
                "d": model.d(),
                "m_star": model.partition().m_star(),
                "log_partition": model.log_partition(),
                "expected_stats": model.expected_stats(),
                "stat_variances": model.stat_variances(),
                "deviation": mad_vs_std_diagnostic(&model)?,
            });
            emit(None, &pretty(&info))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mallows::Error>() {
        Some(mallows::Error::Capability(_)) => EXIT_CAPABILITY,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_FAILURE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
