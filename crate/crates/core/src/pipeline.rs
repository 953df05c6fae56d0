//! Stage orchestration: configuration, persisted intermediates, manifest and
//! output-directory locking.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{assign_blocks, kmeans_fit, KMeansModel, KMeansOptions};
use crate::convergence::{
    analyze_order, analyze_position, classify_regime, histogram, write_columns, Aggregation, GroupMatrix,
    OrderOptions, PositionOptions, RegimeLabel, Thresholds, Verdict,
};
use crate::corpus::{
    iqr_filter, load_corpus, rank_groups, read_jsonl, write_jsonl, Corpus, CorpusFormat, CorpusMeta, Document,
};
use crate::error::{Error, Result};
use crate::features::{assemble_matrix, write_matrix, FamilyWeights, FeatureMatrix, Lexicons, Scaling};
use crate::segmentation::{segment_by_markers, segment_cues, MarkerRule};
use crate::sequence::{extract_transitions, read_sequences, write_sequences, Label, SequenceRecord};
use crate::synth::{generate, to_corpus, RegimeSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SEED_ENV: &str = "STRUCTOSCOPE_SEED";

/// Dependencies whose behaviour determines numeric output.
pub const LIBRARIES_OF_RECORD: &[(&str, &str)] = &[
    ("rand", "0.9.5"),
    ("rand_chacha", "0.9.0"),
    ("rand_distr", "0.5.1"),
    ("serde_json", "1.0.154"),
];

pub mod artifact {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const CORPUS_META: &str = "corpus_meta.json";
    pub const SEGMENTED: &str = "segmented.jsonl";
    pub const SEGMENTED_META: &str = "segmented_meta.json";
    pub const FEATURES: &str = "features.csv";
    pub const SCALING: &str = "feature_scaling.json";
    pub const MODEL: &str = "kmeans_model.json";
    pub const SEQUENCES: &str = "sequences.jsonl";
    pub const SEQUENCES_META: &str = "sequences_meta.json";
    pub const ORDER_MATRIX: &str = "order_matrix.csv";
    pub const ORDER_ANALYSIS: &str = "order_analysis.json";
    pub const POSITION_MATRIX: &str = "position_matrix.csv";
    pub const POSITION_ANALYSIS: &str = "position_analysis.json";
    pub const REGIME: &str = "regime.json";
    pub const REPORT: &str = "report.md";
    pub const MANIFEST: &str = "manifest.json";
    pub const LOCK: &str = ".structoscope.lock";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    ConlluDir,
    SubtitleJsonl,
    SequencesJsonl,
}

impl InputFormat {
    fn corpus_format(self) -> Option<CorpusFormat> {
        match self {
            InputFormat::Jsonl => Some(CorpusFormat::Jsonl),
            InputFormat::ConlluDir => Some(CorpusFormat::ConlluDir),
            InputFormat::SubtitleJsonl => Some(CorpusFormat::SubtitleJsonl),
            InputFormat::SequencesJsonl => None,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequences_jsonl" => Ok(InputFormat::SequencesJsonl),
            other => match other.parse::<CorpusFormat>() {
                Ok(CorpusFormat::Jsonl) => Ok(InputFormat::Jsonl),
                Ok(CorpusFormat::ConlluDir) => Ok(InputFormat::ConlluDir),
                Ok(CorpusFormat::SubtitleJsonl) => Ok(InputFormat::SubtitleJsonl),
                Err(_) => Err(Error::invalid(format!("unknown input format `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub format: InputFormat,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig { path: None, format: InputFormat::Jsonl }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconConfig {
    pub stopwords: Option<PathBuf>,
    pub affect: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationMode {
    /// Keep the input's segments, except subtitle cues, which are regrouped.
    #[default]
    Auto,
    Given,
    Markers,
    BayesianBlocks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub mode: SegmentationMode,
    pub marker_pattern: String,
    pub min_tokens: usize,
    pub p0: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            mode: SegmentationMode::Auto,
            marker_pattern: r"(?m)^\s*(?:CHAPTER|Chapter|#+)\b.*$".into(),
            min_tokens: 1,
            p0: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingConfig {
    /// Tukey multiplier for the segment-count filter; absent disables it.
    pub iqr_multiplier: Option<f64>,
    pub n_bins: usize,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig { iqr_multiplier: Some(1.5), n_bins: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let o = KMeansOptions::default();
        ClusteringConfig { k: 5, n_init: o.n_init, max_iter: o.max_iter, tol: o.tol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderConfig {
    pub m: usize,
    pub aggregation: Aggregation,
    pub normalized: bool,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig { m: 1, aggregation: Aggregation::Mean, normalized: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositionConfig {
    pub from: Option<Label>,
    pub to: Option<Label>,
    pub grid_size: usize,
    pub bootstrap_splits: usize,
    pub histogram_bins: usize,
}

impl Default for PositionConfig {
    fn default() -> Self {
        let o = PositionOptions::default();
        PositionConfig {
            from: None,
            to: None,
            grid_size: o.grid_size,
            bootstrap_splits: o.bootstrap_splits,
            histogram_bins: o.histogram_bins,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub kmeans: Option<u64>,
    pub bootstrap: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output: PathBuf,
    /// `key=value` with key `genre` or `domain`.
    pub slice: Option<String>,
    pub input: InputConfig,
    pub lexicons: LexiconConfig,
    pub segmentation: SegmentationConfig,
    pub grouping: GroupingConfig,
    pub features: FamilyWeights,
    pub clustering: ClusteringConfig,
    pub order: OrderConfig,
    pub position: PositionConfig,
    pub classify: Thresholds,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output: PathBuf::from("structoscope-out"),
            slice: None,
            input: InputConfig::default(),
            lexicons: LexiconConfig::default(),
            segmentation: SegmentationConfig::default(),
            grouping: GroupingConfig::default(),
            features: FamilyWeights::default(),
            clustering: ClusteringConfig::default(),
            order: OrderConfig::default(),
            position: PositionConfig::default(),
            classify: Thresholds::default(),
            seeds: Seeds::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Reads a TOML config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.output);
        if let Some(p) = cfg.input.path.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.lexicons.stopwords.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.lexicons.affect.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    /// Applies the seed environment override, when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(vec![format!("{SEED_ENV}={v:?} is not an unsigned integer")]))?;
            self.seeds.kmeans = Some(seed);
            self.seeds.bootstrap = Some(seed);
        }
        Ok(())
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        match &self.input.path {
            None => p.push("input.path is required".to_string()),
            Some(path) if !path.exists() => p.push(format!("input.path {} does not exist", path.display())),
            Some(_) => {}
        }
        for (name, path) in [("stopwords", &self.lexicons.stopwords), ("affect", &self.lexicons.affect)] {
            if let Some(path) = path {
                if !path.is_file() {
                    p.push(format!("lexicons.{name} {} does not exist", path.display()));
                }
            }
        }
        if self.seeds.kmeans.is_none() {
            p.push(format!("seeds.kmeans is required (or set {SEED_ENV})"));
        }
        if self.seeds.bootstrap.is_none() {
            p.push(format!("seeds.bootstrap is required (or set {SEED_ENV})"));
        }
        if let Some(s) = &self.slice {
            if let Err(e) = parse_slice(s) {
                p.push(e.to_string());
            }
        }
        if self.segmentation.min_tokens < 1 {
            p.push("segmentation.min_tokens must be at least 1".into());
        }
        if !(self.segmentation.p0 > 0.0 && self.segmentation.p0 < 1.0) {
            p.push(format!("segmentation.p0 must lie in (0, 1), got {}", self.segmentation.p0));
        }
        if let Err(e) = regex::Regex::new(&self.segmentation.marker_pattern) {
            p.push(format!("segmentation.marker_pattern: {e}"));
        }
        if let Some(m) = self.grouping.iqr_multiplier {
            if !(m >= 0.0 && m.is_finite()) {
                p.push(format!("grouping.iqr_multiplier must be nonnegative, got {m}"));
            }
        }
        if self.grouping.n_bins < 2 {
            p.push("grouping.n_bins must be at least 2".into());
        }
        let w = &self.features;
        for (name, v) in [("pos", w.pos), ("deprel", w.deprel), ("stop", w.stop), ("affect", w.affect)] {
            if !(v >= 0.0 && v.is_finite()) {
                p.push(format!("features.{name} weight must be nonnegative, got {v}"));
            }
        }
        let c = &self.clustering;
        if c.k < 2 {
            p.push("clustering.k must be at least 2".into());
        }
        if c.n_init < 1 || c.max_iter < 1 {
            p.push("clustering.n_init and clustering.max_iter must be positive".into());
        }
        if !(c.tol >= 0.0) {
            p.push("clustering.tol must be nonnegative".into());
        }
        if self.order.m < 1 {
            p.push("order.m must be at least 1".into());
        }
        let pc = &self.position;
        if pc.from.is_some() != pc.to.is_some() {
            p.push("position.from and position.to must be given together".into());
        }
        if pc.from.is_some() && pc.from == pc.to {
            p.push("position.from and position.to must differ".into());
        }
        if pc.grid_size < 2 || pc.histogram_bins < 1 {
            p.push("position.grid_size must be at least 2 and histogram_bins at least 1".into());
        }
        if let Err(Error::Config(more)) = self.classify.validate() {
            p.extend(more.into_iter().map(|m| format!("classify: {m}")));
        }
        for g in self.classify.high_groups.iter().chain(&self.classify.low_groups) {
            if *g >= self.grouping.n_bins {
                p.push(format!("classify group {g} does not exist with {} bins", self.grouping.n_bins));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn kmeans_seed(&self) -> u64 {
        self.seeds.kmeans.expect("validated")
    }

    fn bootstrap_seed(&self) -> u64 {
        self.seeds.bootstrap.expect("validated")
    }

    fn input_path(&self) -> &Path {
        self.input.path.as_deref().expect("validated")
    }

    fn uses_corpus(&self) -> bool {
        self.input.format != InputFormat::SequencesJsonl
    }
}

fn parse_slice(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if (k == "genre" || k == "domain") && !v.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::Config(vec![format!("slice `{s}` must be genre=<value> or domain=<value>")])),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Segment,
    Featurize,
    Cluster,
    Sequences,
    AnalyzeOrder,
    AnalyzePosition,
    Classify,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Segment,
        Stage::Featurize,
        Stage::Cluster,
        Stage::Sequences,
        Stage::AnalyzeOrder,
        Stage::AnalyzePosition,
        Stage::Classify,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Featurize => "featurize",
            Stage::Cluster => "cluster",
            Stage::Sequences => "sequences",
            Stage::AnalyzeOrder => "analyze-order",
            Stage::AnalyzePosition => "analyze-position",
            Stage::Classify => "classify",
            Stage::Report => "report",
        }
    }

    fn needs_corpus(self) -> bool {
        matches!(self, Stage::Ingest | Stage::Segment | Stage::Featurize | Stage::Cluster)
    }
}

/// Exclusive ownership of an output directory for the life of the value.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(artifact::LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Digest of a file, or of a directory's files in name order.
pub fn path_digest(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return file_digest(path);
    }
    let mut names: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap_or_default().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(file_digest(&p)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub libraries: BTreeMap<String, String>,
    pub config_hash: String,
    pub seeds: Seeds,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    fn fresh(cfg: &RunConfig) -> Self {
        Manifest {
            tool: "structoscope".into(),
            version: VERSION.into(),
            libraries: LIBRARIES_OF_RECORD.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            config_hash: cfg.hash(),
            seeds: cfg.seeds.clone(),
            stages: BTreeMap::new(),
        }
    }

    /// The existing manifest if it was produced under the same config.
    fn load_or_fresh(cfg: &RunConfig) -> Self {
        let path = cfg.output.join(artifact::MANIFEST);
        let fresh = Manifest::fresh(cfg);
        match fs::read(&path).ok().and_then(|b| serde_json::from_slice::<Manifest>(&b).ok()) {
            Some(m) if m.config_hash == fresh.config_hash && m.version == fresh.version => m,
            _ => fresh,
        }
    }
}

/// Tracks what one stage reads and writes.
struct StageCtx<'a> {
    cfg: &'a RunConfig,
    record: StageRecord,
}

impl<'a> StageCtx<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        StageCtx { cfg, record: StageRecord::default() }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output.join(name)
    }

    /// Path of an upstream artifact, registered as an input.
    fn upstream(&mut self, name: &str, stage: Stage) -> Result<PathBuf> {
        let path = self.out(name);
        if !path.is_file() {
            return Err(Error::MissingArtifact { stage: stage.name(), path });
        }
        self.record.inputs.insert(name.to_string(), file_digest(&path)?);
        Ok(path)
    }

    fn external(&mut self, path: &Path) -> Result<()> {
        self.record.inputs.insert(path.display().to_string(), path_digest(path)?);
        Ok(())
    }

    fn wrote(&mut self, name: &str) -> Result<()> {
        let path = self.out(name);
        self.record.outputs.insert(name.to_string(), file_digest(&path)?);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.out(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.wrote(name)
    }

    fn read_json<T: DeserializeOwned>(&mut self, name: &str, stage: Stage) -> Result<T> {
        let path = self.upstream(name, stage)?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }
}

/// Runs one stage under the output lock and records it in the manifest.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<()> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(&cfg.output)?;
    run_locked(cfg, stage)
}

/// Runs every applicable stage in order.
pub fn run_all(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(&cfg.output)?;
    for stage in Stage::ALL {
        if stage.needs_corpus() && !cfg.uses_corpus() {
            continue;
        }
        run_locked(cfg, stage)?;
    }
    Ok(())
}

fn run_locked(cfg: &RunConfig, stage: Stage) -> Result<()> {
    if stage.needs_corpus() && !cfg.uses_corpus() {
        return Err(Error::Config(vec![format!(
            "stage `{}` does not apply to sequences_jsonl input",
            stage.name()
        )]));
    }
    log::info!("stage {}", stage.name());
    let mut ctx = StageCtx::new(cfg);
    match stage {
        Stage::Ingest => ingest(&mut ctx)?,
        Stage::Segment => segment(&mut ctx)?,
        Stage::Featurize => featurize(&mut ctx)?,
        Stage::Cluster => cluster(&mut ctx)?,
        Stage::Sequences => sequences(&mut ctx)?,
        Stage::AnalyzeOrder => order(&mut ctx)?,
        Stage::AnalyzePosition => position(&mut ctx)?,
        Stage::Classify => classify(&mut ctx)?,
        Stage::Report => report(&mut ctx)?,
    }
    let mut manifest = Manifest::load_or_fresh(cfg);
    manifest.stages.insert(stage.name().to_string(), ctx.record);
    let path = cfg.output.join(artifact::MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn load_lexicons(ctx: &mut StageCtx) -> Result<Lexicons> {
    let lx = &ctx.cfg.lexicons;
    for p in [&lx.stopwords, &lx.affect].into_iter().flatten() {
        ctx.external(p)?;
    }
    Lexicons::load(lx.stopwords.as_deref(), lx.affect.as_deref())
}

fn read_corpus(ctx: &mut StageCtx, jsonl: &str, meta: &str, stage: Stage) -> Result<Corpus> {
    let meta: CorpusMeta = ctx.read_json(meta, stage)?;
    let path = ctx.upstream(jsonl, stage)?;
    read_jsonl(&path, meta)
}

fn save_corpus(ctx: &mut StageCtx, corpus: &Corpus, jsonl: &str, meta: &str) -> Result<()> {
    write_jsonl(corpus, &ctx.out(jsonl))?;
    ctx.wrote(jsonl)?;
    ctx.write_json(meta, &corpus.meta)
}

fn ingest(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let input = cfg.input_path();
    ctx.external(input)?;
    let format = cfg.input.format.corpus_format().expect("corpus input");
    let mut corpus = load_corpus(input, format)?;
    let lex = load_lexicons(ctx)?;
    corpus.meta.lexicons = lex.ids().to_vec();
    if corpus.documents.is_empty() {
        return Err(Error::invalid(format!("{} contains no usable documents", input.display())));
    }
    save_corpus(ctx, &corpus, artifact::CORPUS, artifact::CORPUS_META)
}

fn segment(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut corpus = read_corpus(ctx, artifact::CORPUS, artifact::CORPUS_META, Stage::Ingest)?;
    let seg = &cfg.segmentation;
    let mode = match seg.mode {
        SegmentationMode::Auto if corpus.meta.format == Some(CorpusFormat::SubtitleJsonl) => {
            SegmentationMode::BayesianBlocks
        }
        SegmentationMode::Auto => SegmentationMode::Given,
        m => m,
    };
    match mode {
        SegmentationMode::Given | SegmentationMode::Auto => {}
        SegmentationMode::Markers => {
            let rule = MarkerRule::new(&seg.marker_pattern, seg.min_tokens)?;
            for doc in &mut corpus.documents {
                let parts: Option<Vec<&str>> = doc.segments.iter().map(|s| s.raw_text.as_deref()).collect();
                let Some(parts) = parts else {
                    return Err(Error::invalid(format!(
                        "document {} has no raw text; marker segmentation needs text input",
                        doc.id
                    )));
                };
                doc.segments = segment_by_markers(&parts.join("\n"), &rule)?;
            }
        }
        SegmentationMode::BayesianBlocks => {
            for doc in &mut corpus.documents {
                if doc.segments.iter().any(|s| s.time_start.is_none() || s.time_end.is_none()) {
                    return Err(Error::invalid(format!(
                        "document {} lacks cue timestamps needed for change-point segmentation",
                        doc.id
                    )));
                }
                doc.segments = segment_cues(&doc.segments, seg.p0)?;
            }
        }
    }
    corpus.prune_empty();
    if let Some(m) = cfg.grouping.iqr_multiplier {
        corpus = iqr_filter(&corpus, m)?;
        if corpus.documents.is_empty() {
            return Err(Error::invalid("the IQR filter removed every document"));
        }
    }
    save_corpus(ctx, &corpus, artifact::SEGMENTED, artifact::SEGMENTED_META)
}

fn featurize(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let corpus = read_corpus(ctx, artifact::SEGMENTED, artifact::SEGMENTED_META, Stage::Segment)?;
    let lex = load_lexicons(ctx)?;
    let matrix = assemble_matrix(&corpus, &lex, cfg.features)?;
    write_matrix(&matrix, &ctx.out(artifact::FEATURES), &ctx.out(artifact::SCALING))?;
    ctx.wrote(artifact::FEATURES)?;
    ctx.wrote(artifact::SCALING)
}

fn read_matrix(ctx: &mut StageCtx) -> Result<FeatureMatrix> {
    let scaling: Scaling = ctx.read_json(artifact::SCALING, Stage::Featurize)?;
    let path = ctx.upstream(artifact::FEATURES, Stage::Featurize)?;
    FeatureMatrix::read_csv(&path, &scaling)
}

/// Rows of `matrix` belonging to the given documents, in matrix order.
fn select_rows(matrix: &FeatureMatrix, ids: &BTreeSet<&str>) -> FeatureMatrix {
    let d = matrix.n_cols();
    let mut row_index = Vec::new();
    let mut values = Vec::new();
    for (i, (id, seg)) in matrix.row_index.iter().enumerate() {
        if ids.contains(id.as_str()) {
            row_index.push((id.clone(), *seg));
            values.extend_from_slice(&matrix.values[i * d..(i + 1) * d]);
        }
    }
    FeatureMatrix {
        columns: matrix.columns.clone(),
        row_index,
        values,
        mean: matrix.mean.clone(),
        std: matrix.std.clone(),
    }
}

fn domains(corpus: &Corpus) -> BTreeMap<&str, Corpus> {
    let mut out: BTreeMap<&str, Corpus> = BTreeMap::new();
    for d in &corpus.documents {
        out.entry(d.domain.as_str())
            .or_insert_with(|| Corpus { documents: Vec::new(), meta: corpus.meta.clone() })
            .documents
            .push(d.clone());
    }
    out
}

/// One model per domain; cluster indices are not comparable across domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainModels {
    pub domains: BTreeMap<String, KMeansModel>,
}

fn cluster(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let corpus = read_corpus(ctx, artifact::SEGMENTED, artifact::SEGMENTED_META, Stage::Segment)?;
    let matrix = read_matrix(ctx)?;
    let c = &cfg.clustering;
    let opts = KMeansOptions { n_init: c.n_init, max_iter: c.max_iter, tol: c.tol };
    let mut models = BTreeMap::new();
    for (domain, sub) in domains(&corpus) {
        let ids: BTreeSet<&str> = sub.documents.iter().map(|d| d.id.as_str()).collect();
        let rows = select_rows(&matrix, &ids);
        let model = kmeans_fit(&rows, c.k, cfg.kmeans_seed(), opts)
            .map_err(|e| Error::invalid(format!("domain `{domain}`: {e}")))?;
        log::info!("domain {domain}: inertia {} after {} iterations", model.inertia, model.n_iter);
        models.insert(domain.to_string(), model);
    }
    ctx.write_json(artifact::MODEL, &DomainModels { domains: models })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencesMeta {
    pub n_bins: usize,
    pub slice: Option<String>,
    pub domains: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub iqr_dropped: Vec<String>,
}

fn matches_slice(r: &SequenceRecord, slice: &Option<(String, String)>) -> bool {
    match slice {
        None => true,
        Some((k, v)) if k == "genre" => r.genre_tags.iter().any(|g| g == v),
        Some((_, v)) => r.domain.as_deref() == Some(v.as_str()),
    }
}

fn sequences(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut iqr_dropped = Vec::new();
    let mut records: Vec<SequenceRecord> = if cfg.uses_corpus() {
        let corpus = read_corpus(ctx, artifact::SEGMENTED, artifact::SEGMENTED_META, Stage::Segment)?;
        let matrix = read_matrix(ctx)?;
        let models: DomainModels = ctx.read_json(artifact::MODEL, Stage::Cluster)?;
        let mut out = Vec::new();
        for (domain, sub) in domains(&corpus) {
            let model = models.domains.get(domain).ok_or_else(|| {
                Error::invalid(format!("no clustering model for domain `{domain}`; rerun the cluster stage"))
            })?;
            let ids: BTreeSet<&str> = sub.documents.iter().map(|d| d.id.as_str()).collect();
            let rows = select_rows(&matrix, &ids);
            for (doc, seq) in sub.documents.iter().zip(assign_blocks(&sub, &rows, model)?) {
                out.push(SequenceRecord {
                    id: doc.id.clone(),
                    eval_score: doc.eval_score,
                    group: None,
                    domain: Some(doc.domain.clone()),
                    genre_tags: doc.genre_tags.clone(),
                    labels: seq.labels,
                });
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    } else {
        let input = cfg.input_path();
        ctx.external(input)?;
        let mut recs = read_sequences(input)?;
        if let Some(r) = recs.iter().find(|r| r.labels.is_empty()) {
            return Err(Error::invalid(format!("sequence `{}` has no labels", r.id)));
        }
        if let Some(m) = cfg.grouping.iqr_multiplier {
            let docs = recs
                .iter()
                .map(|r| Document {
                    id: r.id.clone(),
                    domain: String::new(),
                    genre_tags: Vec::new(),
                    eval_score: r.eval_score,
                    segments: vec![crate::corpus::Segment::from_text(0, "x"); r.labels.len()],
                    group: None,
                })
                .collect();
            let filtered = iqr_filter(&Corpus::new(docs, CorpusMeta::default())?, m)?;
            iqr_dropped = filtered.meta.iqr.map(|r| r.dropped).unwrap_or_default();
            recs.retain(|r| !iqr_dropped.contains(&r.id));
        }
        recs
    };

    let slice = cfg.slice.as_deref().map(parse_slice).transpose()?;
    records.retain(|r| matches_slice(r, &slice));
    let n_bins = cfg.grouping.n_bins;
    let groups = rank_groups(records.iter().map(|r| (r.eval_score, r.id.as_str())), n_bins)?;
    let mut group_sizes = vec![0; n_bins];
    for (r, g) in records.iter_mut().zip(groups) {
        r.group = Some(g);
        group_sizes[g] += 1;
    }
    write_sequences(&ctx.out(artifact::SEQUENCES), &records)?;
    ctx.wrote(artifact::SEQUENCES)?;
    let domains: BTreeSet<String> = records.iter().filter_map(|r| r.domain.clone()).collect();
    ctx.write_json(
        artifact::SEQUENCES_META,
        &SequencesMeta { n_bins, slice: cfg.slice.clone(), domains: domains.into_iter().collect(), group_sizes, iqr_dropped },
    )
}

fn grouped_sequences(ctx: &mut StageCtx) -> Result<Vec<Vec<SequenceRecord>>> {
    let meta: SequencesMeta = ctx.read_json(artifact::SEQUENCES_META, Stage::Sequences)?;
    if meta.domains.len() > 1 {
        return Err(Error::invalid(format!(
            "sequences span domains {:?}; cluster labels are not comparable across domains, select one with a domain slice",
            meta.domains
        )));
    }
    let path = ctx.upstream(artifact::SEQUENCES, Stage::Sequences)?;
    let mut groups = vec![Vec::new(); meta.n_bins];
    for r in read_sequences(&path)? {
        let g = r.group.ok_or_else(|| Error::invalid(format!("sequence `{}` has no group", r.id)))?;
        if g >= meta.n_bins {
            return Err(Error::invalid(format!("sequence `{}` has group {g} outside 0..{}", r.id, meta.n_bins)));
        }
        groups[g].push(r);
    }
    Ok(groups)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMedoids {
    pub group: usize,
    pub size: usize,
    pub medoid_ids: Vec<String>,
    pub medoids: Vec<Vec<Label>>,
    pub assignment_cost: f64,
    pub cohesion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub m: usize,
    pub aggregation: Aggregation,
    pub normalized: bool,
    pub groups: Vec<GroupMedoids>,
    pub matrix: GroupMatrix,
}

fn order(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let groups = grouped_sequences(ctx)?;
    let blocks: Vec<Vec<_>> = groups.iter().map(|g| g.iter().map(SequenceRecord::block_sequence).collect()).collect();
    let opts = OrderOptions { m: cfg.order.m, aggregation: cfg.order.aggregation, normalized: cfg.order.normalized };
    let analysis = analyze_order(&blocks, opts)?;
    let mut per_group = Vec::new();
    for (g, set) in analysis.medoid_sets.iter().enumerate() {
        let mut ids: Vec<&str> = groups[g].iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        per_group.push(GroupMedoids {
            group: g,
            size: groups[g].len(),
            medoid_ids: set.medoid_indices.iter().map(|&i| ids[i].to_string()).collect(),
            medoids: set.medoids.clone(),
            assignment_cost: set.assignment_cost,
            cohesion: analysis.cohesion[g],
        });
    }
    analysis.matrix.write_csv(&ctx.out(artifact::ORDER_MATRIX))?;
    ctx.wrote(artifact::ORDER_MATRIX)?;
    ctx.write_json(
        artifact::ORDER_ANALYSIS,
        &OrderReport {
            m: opts.m,
            aggregation: opts.aggregation,
            normalized: opts.normalized,
            groups: per_group,
            matrix: analysis.matrix,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPositions {
    pub group: usize,
    pub events: usize,
    pub cohesion: f64,
    pub bandwidth: f64,
    pub spike: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub filter: Option<(Label, Label)>,
    pub absent: Vec<usize>,
    pub groups: Vec<GroupPositions>,
    pub matrix: GroupMatrix,
}

fn position(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let groups = grouped_sequences(ctx)?;
    let events: Vec<Vec<_>> = groups
        .iter()
        .map(|g| g.iter().flat_map(|r| extract_transitions(&r.block_sequence())).collect())
        .collect();
    let pc = &cfg.position;
    let opts = PositionOptions {
        filter: pc.from.zip(pc.to),
        grid_size: pc.grid_size,
        bootstrap_splits: pc.bootstrap_splits,
        seed: cfg.bootstrap_seed(),
        histogram_bins: pc.histogram_bins,
    };
    let analysis = analyze_position(&events, &opts)?;

    for entry in fs::read_dir(&cfg.output).map_err(|e| Error::io(&cfg.output, e))? {
        let path = entry.map_err(|e| Error::io(&cfg.output, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if (name.starts_with("kde_group_") || name.starts_with("hist_group_")) && name.ends_with(".csv") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let mut per_group = Vec::new();
    for (i, &g) in analysis.matrix.groups.iter().enumerate() {
        let kde = &analysis.kde[i];
        let name = format!("kde_group_{g}.csv");
        kde.write_csv(&ctx.out(&name))?;
        ctx.wrote(&name)?;
        let (centres, density) = histogram(&analysis.samples[g], opts.histogram_bins);
        let name = format!("hist_group_{g}.csv");
        write_columns(&ctx.out(&name), ("bin_centre", &centres), ("density", &density))?;
        ctx.wrote(&name)?;
        per_group.push(GroupPositions {
            group: g,
            events: analysis.samples[g].len(),
            cohesion: analysis.cohesion[i],
            bandwidth: kde.bandwidth,
            spike: kde.spike,
        });
    }
    analysis.matrix.write_csv(&ctx.out(artifact::POSITION_MATRIX))?;
    ctx.wrote(artifact::POSITION_MATRIX)?;
    ctx.write_json(
        artifact::POSITION_ANALYSIS,
        &PositionReport { filter: opts.filter, absent: analysis.absent, groups: per_group, matrix: analysis.matrix },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionVerdict {
    pub verdict: Option<Verdict>,
    pub label: Option<RegimeLabel>,
    /// Why no verdict could be reached, when `verdict` is absent.
    pub note: Option<String>,
}

impl DimensionVerdict {
    fn from(result: Result<RegimeLabel>) -> Self {
        match result {
            Ok(label) => DimensionVerdict { verdict: Some(label.verdict), label: Some(label), note: None },
            Err(e) => DimensionVerdict { verdict: None, label: None, note: Some(e.to_string()) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// The order-dimension verdict.
    pub verdict: Verdict,
    pub order: DimensionVerdict,
    pub position: DimensionVerdict,
    pub position_filter: Option<(Label, Label)>,
    pub config_hash: String,
}

fn classify(ctx: &mut StageCtx) -> Result<()> {
    let cfg = ctx.cfg;
    let order: OrderReport = ctx.read_json(artifact::ORDER_ANALYSIS, Stage::AnalyzeOrder)?;
    let position: PositionReport = ctx.read_json(artifact::POSITION_ANALYSIS, Stage::AnalyzePosition)?;
    let order_cohesion: Vec<f64> = order.groups.iter().map(|g| g.cohesion).collect();
    let order_label = classify_regime(&order.matrix, &order_cohesion, &cfg.classify)?;
    let position_cohesion: Vec<f64> = position.groups.iter().map(|g| g.cohesion).collect();
    let position_label = DimensionVerdict::from(classify_regime(&position.matrix, &position_cohesion, &cfg.classify));
    let report = RegimeReport {
        verdict: order_label.verdict,
        order: DimensionVerdict::from(Ok(order_label)),
        position: position_label,
        position_filter: position.filter,
        config_hash: cfg.hash(),
    };
    ctx.write_json(artifact::REGIME, &report)
}

fn fmt_matrix(out: &mut String, m: &GroupMatrix) {
    out.push_str("| |");
    for g in &m.groups {
        out.push_str(&format!(" {g} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(m.len()));
    out.push('\n');
    for (i, g) in m.groups.iter().enumerate() {
        out.push_str(&format!("| {g} |"));
        for j in 0..m.len() {
            out.push_str(&format!(" {:.3} |", m.get(i, j)));
        }
        out.push('\n');
    }
}

fn fmt_dimension(out: &mut String, name: &str, d: &DimensionVerdict) {
    match (&d.label, &d.note) {
        (Some(l), _) => {
            let x = &l.diagnostics;
            out.push_str(&format!(
                "- {name}: **{}** (normalized cohesion high {:.3}, low {:.3}; cross/grand {:.3})\n",
                l.verdict, x.c_high_norm, x.c_low_norm, x.separation
            ));
        }
        (None, Some(n)) => out.push_str(&format!("- {name}: no verdict ({n})\n")),
        (None, None) => out.push_str(&format!("- {name}: no verdict\n")),
    }
}

fn report(ctx: &mut StageCtx) -> Result<()> {
    let meta: SequencesMeta = ctx.read_json(artifact::SEQUENCES_META, Stage::Sequences)?;
    let order: OrderReport = ctx.read_json(artifact::ORDER_ANALYSIS, Stage::AnalyzeOrder)?;
    let position: PositionReport = ctx.read_json(artifact::POSITION_ANALYSIS, Stage::AnalyzePosition)?;
    let regime: RegimeReport = ctx.read_json(artifact::REGIME, Stage::Classify)?;
    let mut s = String::from("# structoscope report\n\n");
    s.push_str(&format!("Config hash: `{}`\n\n", regime.config_hash));
    if let Some(slice) = &meta.slice {
        s.push_str(&format!("Slice: `{slice}`\n\n"));
    }
    s.push_str(&format!(
        "Documents per group: {:?} ({} dropped by the segment-count filter)\n\n",
        meta.group_sizes,
        meta.iqr_dropped.len()
    ));
    s.push_str("## Regime\n\n");
    fmt_dimension(&mut s, "order", &regime.order);
    fmt_dimension(&mut s, "position", &regime.position);
    s.push_str("\n## Order: medoid distances between groups\n\n");
    fmt_matrix(&mut s, &order.matrix);
    s.push_str("\n| group | size | cohesion | medoid |\n|---|---|---|---|\n");
    for g in &order.groups {
        s.push_str(&format!("| {} | {} | {:.3} | {:?} |\n", g.group, g.size, g.cohesion, g.medoids));
    }
    s.push_str("\n## Position: Wasserstein distances between groups\n\n");
    if let Some((f, t)) = position.filter {
        s.push_str(&format!("Transition {f} -> {t} only.\n\n"));
    }
    fmt_matrix(&mut s, &position.matrix);
    if !position.absent.is_empty() {
        s.push_str(&format!("\nGroups without events: {:?}\n", position.absent));
    }
    let path = ctx.out(artifact::REPORT);
    fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    ctx.wrote(artifact::REPORT)
}

/// Writes a synthetic corpus: block sequences, or rendered text with `tokens`.
pub fn write_synth(spec: &RegimeSpec, out: &Path, tokens: bool, lex: &Lexicons) -> Result<usize> {
    let docs = generate(spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if tokens {
        write_jsonl(&to_corpus(&docs, spec, lex)?, out)?;
    } else {
        let recs: Vec<SequenceRecord> = docs.iter().map(|d| d.record()).collect();
        write_sequences(out, &recs)?;
    }
    Ok(docs.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_config(dir: &Path, regime: Verdict, seed: u64) -> RunConfig {
        let input = dir.join("seqs.jsonl");
        write_synth(&RegimeSpec::new(regime, seed), &input, false, &Lexicons::builtin()).unwrap();
        RunConfig {
            output: dir.join("out"),
            input: InputConfig { path: Some(input), format: InputFormat::SequencesJsonl },
            seeds: Seeds { kmeans: Some(1), bootstrap: Some(2) },
            position: PositionConfig { from: Some(1), to: Some(4), ..Default::default() },
            ..Default::default()
        }
    }

    fn read_regime(cfg: &RunConfig) -> RegimeReport {
        serde_json::from_slice(&fs::read(cfg.output.join(artifact::REGIME)).unwrap()).unwrap()
    }

    #[test]
    fn sequences_route_recovers_akp() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_config(dir.path(), Verdict::Akp, 3);
        run_all(&cfg).unwrap();
        let r = read_regime(&cfg);
        assert_eq!(r.verdict, Verdict::Akp);
        assert_eq!(r.position.verdict, Some(Verdict::Akp));
        assert!(cfg.output.join("kde_group_9.csv").is_file());
        assert!(!cfg.output.join(artifact::LOCK).exists());
    }

    #[test]
    fn stages_one_by_one_equal_all() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_config(dir.path(), Verdict::Ordered, 5);
        run_all(&cfg).unwrap();
        let all = fs::read(cfg.output.join(artifact::MANIFEST)).unwrap();
        let mut step = cfg.clone();
        step.output = dir.path().join("step");
        for s in [Stage::Sequences, Stage::AnalyzeOrder, Stage::AnalyzePosition, Stage::Classify, Stage::Report] {
            run_stage(&step, s).unwrap();
        }
        assert_eq!(all, fs::read(step.output.join(artifact::MANIFEST)).unwrap());
    }

    #[test]
    fn missing_upstream_names_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_config(dir.path(), Verdict::Noisy, 1);
        match run_stage(&cfg, Stage::Classify) {
            Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "analyze-order"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_aggregates_problems() {
        let cfg = RunConfig { grouping: GroupingConfig { n_bins: 1, ..Default::default() }, ..Default::default() };
        match cfg.validate() {
            Err(Error::Config(p)) => {
                assert!(p.len() >= 4, "{p:?}");
                assert!(p.iter().any(|m| m.contains("seeds.kmeans")));
                assert!(p.iter().any(|m| m.contains("input.path")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toml_config_round_trip() {
        let text = r#"
            output = "out"
            slice = "genre=mystery"
            [input]
            path = "corpus.jsonl"
            format = "conllu_dir"
            [order]
            aggregation = "min"
            [seeds]
            kmeans = 7
            bootstrap = 8
        "#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.input.format, InputFormat::ConlluDir);
        assert_eq!(cfg.order.aggregation, Aggregation::Min);
        assert_eq!(cfg.seeds.kmeans, Some(7));
        assert_eq!(cfg.clustering.k, 5);
        assert!(RunConfig::from_toml_str("[clustering]\nkk = 3").is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let first = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(first);
        OutputLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn libraries_match_lockfile() {
        let lock = include_str!("../../../Cargo.lock");
        for (name, version) in LIBRARIES_OF_RECORD {
            let entry = format!("name = \"{name}\"\nversion = \"{version}\"");
            assert!(lock.contains(&entry), "{name} {version} not in Cargo.lock");
        }
    }

    #[test]
    fn config_hash_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig { output: PathBuf::from("elsewhere"), ..Default::default() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { slice: Some("genre=x".into()), ..Default::default() };
        assert_ne!(a.hash(), c.hash());
    }
}
