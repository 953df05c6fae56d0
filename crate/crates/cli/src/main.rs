use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use structoscope::convergence::{Aggregation, Verdict};
use structoscope::features::Lexicons;
use structoscope::pipeline::{self, InputFormat, RunConfig, Stage, SEED_ENV};
use structoscope::synth::RegimeSpec;
use structoscope::{Error, Result};

/// Structural-convergence analysis of segmented document corpora.
#[derive(Parser)]
#[command(name = "structoscope", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the corpus.
    Ingest(RunArgs),
    /// Re-segment documents and apply the segment-count filter.
    Segment(RunArgs),
    /// Build the standardized feature matrix.
    Featurize(RunArgs),
    /// Fit k-means per domain.
    Cluster(RunArgs),
    /// Label segments and assign evaluation groups.
    Sequences(RunArgs),
    /// Compare groups by transition order.
    AnalyzeOrder(RunArgs),
    /// Compare groups by transition position.
    AnalyzePosition(RunArgs),
    /// Classify the structural regime.
    Classify(RunArgs),
    /// Write a Markdown summary.
    Report(RunArgs),
    /// Run every stage.
    All(RunArgs),
    /// Generate a synthetic corpus with a planted regime.
    Synth(SynthArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// jsonl, conllu_dir, subtitle_jsonl or sequences_jsonl.
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Sets every seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kmeans_seed: Option<u64>,
    #[arg(long)]
    bootstrap_seed: Option<u64>,
    /// genre=<value> or domain=<value>.
    #[arg(long)]
    slice: Option<String>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    affect: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// mean or min.
    #[arg(long)]
    aggregation: Option<Aggregation>,
    #[arg(long)]
    n_bins: Option<usize>,
    /// Restrict position analysis to transitions from this label...
    #[arg(long)]
    from: Option<u32>,
    /// ...to this label.
    #[arg(long)]
    to: Option<u32>,
}

#[derive(Args)]
struct SynthArgs {
    /// ordered, akp, reverse_akp or noisy.
    #[arg(long)]
    regime: Verdict,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    min_segments: Option<usize>,
    #[arg(long)]
    max_segments: Option<usize>,
    #[arg(long)]
    noise_high: Option<f64>,
    #[arg(long)]
    noise_low: Option<f64>,
    /// Emit a text corpus instead of block sequences.
    #[arg(long)]
    tokens: bool,
}

fn build_config(config: Option<&PathBuf>, a: RunArgs) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = a.input {
        cfg.input.path = Some(v);
    }
    if let Some(v) = a.format {
        cfg.input.format = v;
    }
    if let Some(v) = a.output {
        cfg.output = v;
    }
    if let Some(v) = a.seed {
        cfg.seeds.kmeans = Some(v);
        cfg.seeds.bootstrap = Some(v);
    }
    if let Some(v) = a.kmeans_seed {
        cfg.seeds.kmeans = Some(v);
    }
    if let Some(v) = a.bootstrap_seed {
        cfg.seeds.bootstrap = Some(v);
    }
    if a.slice.is_some() {
        cfg.slice = a.slice;
    }
    if a.stopwords.is_some() {
        cfg.lexicons.stopwords = a.stopwords;
    }
    if a.affect.is_some() {
        cfg.lexicons.affect = a.affect;
    }
    if let Some(v) = a.k {
        cfg.clustering.k = v;
    }
    if let Some(v) = a.n_init {
        cfg.clustering.n_init = v;
    }
    if let Some(v) = a.m {
        cfg.order.m = v;
    }
    if let Some(v) = a.aggregation {
        cfg.order.aggregation = v;
    }
    if let Some(v) = a.n_bins {
        cfg.grouping.n_bins = v;
    }
    if a.from.is_some() || a.to.is_some() {
        cfg.position.from = a.from;
        cfg.position.to = a.to;
    }
    cfg.apply_env()?;
    Ok(cfg)
}

fn synth(a: SynthArgs) -> Result<()> {
    let seed = match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(vec![format!("{SEED_ENV}={v:?} is not an unsigned integer")]))?,
        Err(_) => a
            .seed
            .ok_or_else(|| Error::Config(vec![format!("synth needs --seed (or {SEED_ENV})")]))?,
    };
    let mut spec = RegimeSpec::new(a.regime, seed);
    if let Some(v) = a.n_docs {
        spec.n_docs = v;
    }
    if let Some(v) = a.min_segments {
        spec.seg_range.0 = v;
    }
    if let Some(v) = a.max_segments {
        spec.seg_range.1 = v;
    }
    if let Some(v) = a.noise_high {
        spec.noise_high = v;
    }
    if let Some(v) = a.noise_low {
        spec.noise_low = v;
    }
    let n = pipeline::write_synth(&spec, &a.out, a.tokens, &Lexicons::builtin())?;
    println!("wrote {n} {} documents to {}", spec.regime, a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (stage, args) = match cli.command {
        Command::Synth(a) => return synth(a),
        Command::All(a) => (None, a),
        Command::Ingest(a) => (Some(Stage::Ingest), a),
        Command::Segment(a) => (Some(Stage::Segment), a),
        Command::Featurize(a) => (Some(Stage::Featurize), a),
        Command::Cluster(a) => (Some(Stage::Cluster), a),
        Command::Sequences(a) => (Some(Stage::Sequences), a),
        Command::AnalyzeOrder(a) => (Some(Stage::AnalyzeOrder), a),
        Command::AnalyzePosition(a) => (Some(Stage::AnalyzePosition), a),
        Command::Classify(a) => (Some(Stage::Classify), a),
        Command::Report(a) => (Some(Stage::Report), a),
    };
    let cfg = build_config(cli.config.as_ref(), args)?;
    match stage {
        Some(s) => pipeline::run_stage(&cfg, s)?,
        None => pipeline::run_all(&cfg)?,
    }
    if matches!(stage, None | Some(Stage::Classify)) {
        let path = cfg.output.join(pipeline::artifact::REGIME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Internal(format!("{}: {e}", path.display())))?;
        let report: pipeline::RegimeReport =
            serde_json::from_str(&text).map_err(|e| Error::Internal(e.to_string()))?;
        let position = report.position.verdict.map_or("none".to_string(), |v| v.to_string());
        println!("order: {}  position: {position}", report.verdict);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Config(problems) => {
                    eprintln!("error: invalid configuration");
                    for p in problems {
                        eprintln!("  - {p}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
