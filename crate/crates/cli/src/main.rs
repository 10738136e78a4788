mod config;
mod plot;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_variants, PipelineConfig};
use seizure_core::evaluation::Scheme;

/// Seizure-type classification pipeline: synthetic corpus generation, EDF
/// ingestion, wavelet features, training, cross-validation and reporting.
#[derive(Parser)]
#[command(name = "seizure", version)]
struct Cli {
    /// TOML pipeline configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every stochastic component.
    #[arg(long)]
    seed: Option<u64>,
    /// Rebuild outputs even when they match the current configuration.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// cnn, bilstm or fused (crossval also accepts all).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic EDF corpus with annotation sidecars.
    GenCorpus {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        patients_per_class: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Montage, resample, filter and segment every EDF into the segment cache.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// "ANODE-CATHODE" per line; built-in TCP montage when absent.
        #[arg(long)]
        montage: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compute 252x20 wavelet feature maps for the cached segments.
    Extract {
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model on the cached data (stratified validation hold-out).
    Train(TrainFlags),
    /// Seizure-wise 5-fold or patient-wise 3-fold cross-validation.
    Crossval {
        /// seizure5 or patient3.
        #[arg(long)]
        scheme: Option<String>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Per-window class probabilities for one EDF file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        edf: PathBuf,
        #[arg(long)]
        montage: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render confusion heatmaps and loss curves as PNG.
    Plot {
        /// A report JSON, confusion or history CSV, or a crossval directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the wavelet and gradient-check suites.
    Selftest {
        #[arg(long, default_value_t = 1000)]
        signals: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Stage(&'static str, anyhow::Error),
}

fn need(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str, key: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Failure::Usage(format!("--{name} is required (or set {key} in the config file)")))
}

fn stage<T>(name: &'static str, r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Stage(name, e))
}

fn apply_train_flags(cfg: &mut PipelineConfig, f: &TrainFlags) {
    if let Some(s) = f.common.seed.or(cfg.seed) {
        cfg.train.seed = s;
    }
    if let Some(e) = f.epochs {
        cfg.train.max_epochs = e;
    }
    if let Some(b) = f.batch_size {
        cfg.train.batch_size = b;
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = stage("config", PipelineConfig::load(cli.config.as_deref()))?;
    match cli.command {
        Command::GenCorpus { out, patients_per_class, common } => {
            let out = need(out, &cfg.corpus_dir, "out", "corpus_dir")?;
            if let Some(p) = patients_per_class {
                cfg.corpus.patients_per_class = p;
            }
            let seed = common.seed.or(cfg.seed).unwrap_or(0);
            stage("gen-corpus", stages::gen_corpus(&out, &cfg.corpus, seed, common.force))
        }
        Command::Ingest { corpus, cache, montage, common } => {
            let corpus = need(corpus, &cfg.corpus_dir, "corpus", "corpus_dir")?;
            let cache = need(cache, &cfg.cache_dir, "cache", "cache_dir")?;
            if montage.is_some() {
                cfg.montage = montage;
            }
            let m = stage("ingest", cfg.montage())?;
            let seed = common.seed.or(cfg.seed).unwrap_or(0);
            stage("ingest", stages::ingest(&corpus, &cache, &m, seed, common.force))
        }
        Command::Extract { cache, common } => {
            let cache = need(cache, &cfg.cache_dir, "cache", "cache_dir")?;
            let seed = common.seed.or(cfg.seed).unwrap_or(0);
            stage("extract", stages::extract(&cache, seed, common.force))
        }
        Command::Train(f) => {
            let cache = need(f.cache.clone(), &cfg.cache_dir, "cache", "cache_dir")?;
            let out = need(f.out.clone(), &cfg.output_dir, "out", "output_dir")?;
            apply_train_flags(&mut cfg, &f);
            let variant = f.variant.clone().or(cfg.variant.clone()).unwrap_or_else(|| "fused".into());
            cfg.model.variant = variant.parse().map_err(Failure::Usage)?;
            stage("train", stages::train(&cache, &out, &cfg.train, &cfg.model, f.common.force))
        }
        Command::Crossval { scheme, flags: f } => {
            let cache = need(f.cache.clone(), &cfg.cache_dir, "cache", "cache_dir")?;
            let out = need(f.out.clone(), &cfg.output_dir, "out", "output_dir")?;
            apply_train_flags(&mut cfg, &f);
            let scheme = scheme.or(cfg.scheme.clone()).unwrap_or_else(|| "seizure5".into());
            let scheme: Scheme = scheme.parse().map_err(Failure::Usage)?;
            let variant = f.variant.clone().or(cfg.variant.clone()).unwrap_or_else(|| "fused".into());
            let variants = parse_variants(&variant).map_err(|e| Failure::Usage(e.to_string()))?;
            stage("crossval", stages::crossval(&cache, &out, scheme, &variants, &cfg.train, &cfg.model, f.common.force))
        }
        Command::Predict { checkpoint, edf, montage, out } => {
            if montage.is_some() {
                cfg.montage = montage;
            }
            let m = stage("predict", cfg.montage())?;
            stage("predict", stages::predict(&checkpoint, &edf, &m, &out))
        }
        Command::Plot { input, out } => {
            let written = stage("plot", plot::plot(&input, out.as_deref()))?;
            for p in written {
                println!("plot: {}", p.display());
            }
            Ok(())
        }
        Command::Selftest { signals, seed } => {
            if stages::selftest(signals, seed) {
                println!("selftest: all checks passed");
                Ok(())
            } else {
                Err(Failure::Stage("selftest", anyhow::anyhow!("one or more checks failed")))
            }
        }
    }
}

/// The error chain joined by ": ", skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `seizure --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Stage(name, e)) => {
            eprintln!("error: stage {name} failed: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
