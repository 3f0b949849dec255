//! Command-line front end.
//!
//! Every command reads an optional TOML config (`--config`) whose values
//! are overridden by flags. Exit status: 0 success, 1 usage error, 2 data
//! or validation error, 3 internal check failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::catalog::Catalog;
use crate::dataset::{
    build_all_tasks, clean_matches, ingest_matches, label_sequence, purchase_count_stats, split_dataset, synth_matches_with,
    write_matches, EpisodeTask, MatchRecord, SynthConfig,
};
use crate::diagnostics::gradcheck_suite;
use crate::embeddings::{build_vocab, cbow_train, export_embeddings, CbowConfig, EMBED_PARAM};
use crate::error::Error;
use crate::eval::{default_threads, evaluate_policy, reports_table, EvalReport, F1Mode, GreedyPolicy};
use crate::model::{AblationFlags, ModelConfig, PolicyModel};
use crate::training::{meta_train, AdaptedPolicy, Phase, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

const SIDECAR_FORMAT: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "roundbuy", version, about = "Learn and evaluate per-round purchase policies")]
pub struct Cli {
    /// TOML config; command-line flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, clean and split a directory of match documents into a manifest.
    Ingest(IngestArgs),
    /// Per-category purchase-count histogram.
    Stats(StatsArgs),
    /// Write a synthetic corpus with per-player preferences.
    Synth(SynthArgs),
    /// Train action embeddings with CBOW.
    PretrainEmbed(EmbedArgs),
    /// Meta-train the policy and write checkpoints plus a training log.
    Train(TrainArgs),
    /// Evaluate a checkpoint after few-shot adaptation.
    Eval(EvalArgs),
    /// Evaluate the greedy purchasing rule.
    Baseline(BaselineArgs),
    /// Run the gradient-check suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Train,
    Dev,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory of match documents.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Catalog document; the bundled fixture when omitted.
    #[arg(long, value_name = "FILE")]
    pub catalog: Option<PathBuf>,
    /// Split manifest written by `ingest`.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Manifest part to use (requires --manifest).
    #[arg(long, value_enum)]
    pub part: Option<Part>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Manifest output path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Also write the JSON counts here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for match documents.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub matches: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub profiles: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for `embeddings.txt` and `embeddings.ckpt`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FlagArgs {
    /// Replace the history vector with the learned null vector.
    #[arg(long)]
    pub no_rae: bool,
    /// Run every decoder regardless of the gates.
    #[arg(long)]
    pub no_gates: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for checkpoints, sidecars and the log.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Checkpoint holding pretrained `embed.actions`.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub flags: FlagArgs,
    /// One decoder over the whole vocabulary.
    #[arg(long)]
    pub single_decoder: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub inner_lr: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    /// Dev evaluation period for early stopping; 0 disables it.
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the parameter initialization.
    #[arg(long)]
    pub init_seed: Option<u64>,
    /// Also write a checkpoint every N iterations under `checkpoints/`.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub flags: FlagArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Support rounds per task; only the target rounds are scored.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    /// Count duplicate purchases (multiset F1).
    #[arg(long)]
    pub multiset: bool,
    /// Evaluation threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write the JSON report here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random points per primitive.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    /// Rounds used for the composed-graph check.
    #[arg(long, default_value_t = 3)]
    pub states: usize,
}

/// The optional config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub split_seed: u64,
    pub init_seed: u64,
    pub model: ModelConfig,
    pub flags: AblationFlags,
    pub train: TrainConfig,
    pub embed: CbowConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            split_seed: 1,
            init_seed: 1,
            model: ModelConfig::default(),
            flags: AblationFlags::default(),
            train: TrainConfig::default(),
            embed: CbowConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let doc = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&doc).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Split manifest: match ids per part plus the cleaning report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split_seed: u64,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub rejected: Vec<RejectedMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedMatch {
    pub match_id: String,
    pub round_index: u32,
    pub player_slot: usize,
    pub reason: String,
}

/// Written next to every checkpoint; `eval` reads it back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: u32,
    pub model: ModelConfig,
    pub flags: AblationFlags,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub iteration: usize,
    pub catalog: serde_json::Value,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Check(_) => EXIT_CHECK,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the exit status. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Ingest(a) => ingest(a, &config, out, err),
        Command::Stats(a) => stats(a, out, err),
        Command::Synth(a) => synth(a, &config, out),
        Command::PretrainEmbed(a) => pretrain_embed(a, &config, out, err),
        Command::Train(a) => train(a, config, out, err),
        Command::Eval(a) => eval(a, out, err),
        Command::Baseline(a) => baseline(a, &config, out, err),
        Command::Gradcheck(a) => gradcheck(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| {
        CliError::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn load_catalog(path: Option<&Path>) -> CliResult<Catalog> {
    match path {
        None => Ok(Catalog::default_fixture()),
        Some(p) if !p.is_file() => Err(CliError::Usage(format!("catalog {} does not exist", p.display()))),
        Some(p) => Ok(Catalog::load(p)?),
    }
}

fn read_manifest(path: &Path) -> CliResult<Manifest> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("manifest {} does not exist", path.display())));
    }
    let doc = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&doc).map_err(Error::from)?)
}

/// Parses and cleans every match under `--data`, reporting rejections.
fn load_clean(args: &DataArgs, catalog: &Catalog, err: &mut dyn Write) -> CliResult<Vec<MatchRecord>> {
    if !args.data.is_dir() {
        return Err(CliError::Usage(format!("data directory {} does not exist", args.data.display())));
    }
    let (kept, rejected) = clean_matches(ingest_matches(&args.data, catalog)?, catalog);
    if !rejected.is_empty() {
        let _ = writeln!(err, "dropped {} inconsistent matches", rejected.len());
    }
    Ok(kept)
}

/// The matches of one manifest part (all matches without a manifest).
fn select(args: &DataArgs, matches: Vec<MatchRecord>, default: Part) -> CliResult<Vec<MatchRecord>> {
    let Some(path) = &args.manifest else {
        return match args.part {
            None | Some(Part::All) => Ok(matches),
            Some(_) => Err(CliError::Usage("--part needs --manifest".into())),
        };
    };
    let manifest = read_manifest(path)?;
    let ids: Vec<&String> = match args.part.unwrap_or(default) {
        Part::Train => manifest.train.iter().collect(),
        Part::Dev => manifest.dev.iter().collect(),
        Part::Test => manifest.test.iter().collect(),
        Part::All => manifest.train.iter().chain(&manifest.dev).chain(&manifest.test).collect(),
    };
    let mut by_id: std::collections::BTreeMap<String, MatchRecord> = matches.into_iter().map(|m| (m.match_id.clone(), m)).collect();
    ids.into_iter()
        .map(|id| {
            by_id
                .remove(id)
                .ok_or(CliError::Data(Error::EmptyInput("manifest names a match missing from the data directory")))
        })
        .collect()
}

fn tasks_for(matches: &[MatchRecord], k: usize, catalog: &Catalog, err: &mut dyn Write) -> Vec<EpisodeTask> {
    let (tasks, skips) = build_all_tasks(matches, k, catalog);
    for s in &skips {
        let _ = writeln!(err, "{s}");
    }
    tasks
}

fn ingest(a: &IngestArgs, config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let catalog = load_catalog(a.data.catalog.as_deref())?;
    if !a.data.data.is_dir() {
        return Err(CliError::Usage(format!("data directory {} does not exist", a.data.data.display())));
    }
    let (kept, rejected) = clean_matches(ingest_matches(&a.data.data, &catalog)?, &catalog);
    let split_seed = a.split_seed.unwrap_or(config.split_seed);
    let ids: Vec<String> = kept.iter().map(|m| m.match_id.clone()).collect();
    let (train, dev, test) = split_dataset(ids, split_seed)?;
    let manifest = Manifest {
        split_seed,
        train,
        dev,
        test,
        rejected: rejected
            .iter()
            .map(|r| RejectedMatch {
                match_id: r.match_id.clone(),
                round_index: r.round_index,
                player_slot: r.player_slot,
                reason: format!("{:?}", r.reason),
            })
            .collect(),
    };
    let doc = serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n";
    write_file(&a.out, doc.as_bytes())?;
    let _ = writeln!(err, "wrote {}", a.out.display());
    emit(
        out,
        &format!(
            "matches kept={} rejected={} train={} dev={} test={}\n",
            kept.len(),
            manifest.rejected.len(),
            manifest.train.len(),
            manifest.dev.len(),
            manifest.test.len()
        ),
    )
}

fn stats(a: &StatsArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let catalog = load_catalog(a.data.catalog.as_deref())?;
    let matches = select(&a.data, load_clean(&a.data, &catalog, err)?, Part::All)?;
    let stats = purchase_count_stats(&matches, &catalog)?;
    if let Some(path) = &a.out {
        let doc = serde_json::to_string_pretty(&stats).map_err(Error::from)? + "\n";
        write_file(path, doc.as_bytes())?;
    }
    emit(out, &stats.to_table())
}

fn synth(a: &SynthArgs, config: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    if a.matches == 0 {
        return Err(CliError::Usage("--matches must be at least 1".into()));
    }
    let catalog = load_catalog(a.catalog.as_deref())?;
    let mut synth = config.synth.clone();
    if let Some(p) = a.profiles {
        synth.profiles = p;
    }
    if synth.profiles == 0 {
        return Err(CliError::Usage("--profiles must be at least 1".into()));
    }
    let matches = synth_matches_with(a.seed, a.matches, &catalog, &synth);
    write_matches(&a.out, &matches)?;
    emit(out, &format!("wrote {} matches to {}\n", matches.len(), a.out.display()))
}

fn pretrain_embed(a: &EmbedArgs, config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let catalog = load_catalog(a.data.catalog.as_deref())?;
    let matches = select(&a.data, load_clean(&a.data, &catalog, err)?, Part::Train)?;
    let mut cfg = config.embed.clone();
    if let Some(v) = a.dim {
        cfg.d_emb = v;
    }
    if let Some(v) = a.window {
        cfg.window = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let mut corpus = Vec::new();
    for m in &matches {
        for round in &m.rounds {
            for purchases in &round.purchases {
                corpus.push(label_sequence(purchases, &catalog)?);
            }
        }
    }
    let vocab = build_vocab(&catalog);
    let trained = cbow_train(&vocab, &corpus, &cfg)?;
    let mut store = ParamStore::new();
    store.insert(EMBED_PARAM, trained.embeddings.clone())?;
    write_file(&a.out.join("embeddings.txt"), export_embeddings(&vocab, &trained.embeddings)?.as_bytes())?;
    write_file(&a.out.join("embeddings.ckpt"), &store.to_checkpoint_bytes())?;
    let first = trained.losses.first().copied().unwrap_or(f64::NAN);
    let last = trained.losses.last().copied().unwrap_or(f64::NAN);
    emit(
        out,
        &format!(
            "cbow: {} sequences, {} epochs, loss {first:.6} -> {last:.6}; wrote {}\n",
            corpus.len(),
            cfg.epochs,
            a.out.join("embeddings.txt").display()
        ),
    )
}

fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

fn write_checkpoint(path: &Path, params: &ParamStore, sidecar: &Sidecar) -> CliResult<()> {
    write_file(path, &params.to_checkpoint_bytes())?;
    let doc = serde_json::to_string_pretty(sidecar).map_err(Error::from)? + "\n";
    write_file(&sidecar_path(path), doc.as_bytes())
}

fn train(a: &TrainArgs, mut config: RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let catalog = load_catalog(a.data.catalog.as_deref())?;
    let t = &mut config.train;
    if let Some(v) = a.iterations {
        t.meta_iterations = v;
    }
    if let Some(v) = a.k {
        t.k = v;
    }
    if let Some(v) = a.inner_lr {
        t.inner_lr = v;
    }
    if let Some(v) = a.epsilon {
        t.meta_epsilon = v;
    }
    if let Some(v) = a.warmup_epochs {
        t.warmup_epochs = v;
    }
    if let Some(v) = a.eval_every {
        t.eval_every = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.init_seed {
        config.init_seed = v;
    }
    config.flags.rae &= !a.flags.no_rae;
    config.flags.gates &= !a.flags.no_gates;
    config.flags.single_decoder |= a.single_decoder;
    config.train.validate()?;
    if let Some(p) = &a.embeddings {
        if !p.is_file() {
            return Err(CliError::Usage(format!("embeddings checkpoint {} does not exist", p.display())));
        }
    }

    let all = load_clean(&a.data, &catalog, err)?;
    let (train_matches, dev_matches) = if a.data.manifest.is_some() {
        let part = |p| DataArgs {
            data: a.data.data.clone(),
            catalog: None,
            manifest: a.data.manifest.clone(),
            part: Some(p),
        };
        let train = select(&part(a.data.part.unwrap_or(Part::Train)), all.clone(), Part::Train)?;
        (train, select(&part(Part::Dev), all, Part::Dev)?)
    } else {
        (all, Vec::new())
    };
    let train_tasks = tasks_for(&train_matches, config.train.k, &catalog, err);
    let dev_tasks = tasks_for(&dev_matches, config.train.k, &catalog, err);

    let model = PolicyModel::new(catalog.clone(), config.model, config.flags)?;
    let mut theta0 = model.init_params(config.init_seed)?;
    if let Some(p) = &a.embeddings {
        let table = ParamStore::load(p)?.tensor(EMBED_PARAM)?.clone();
        model.load_embeddings(&mut theta0, &table)?;
    }
    let catalog_json: serde_json::Value = serde_json::from_str(&catalog.to_json_string()).map_err(Error::from)?;
    let sidecar = |iteration| Sidecar {
        format: SIDECAR_FORMAT,
        model: config.model,
        flags: config.flags,
        train: config.train.clone(),
        init_seed: config.init_seed,
        iteration,
        catalog: catalog_json.clone(),
    };

    let mut log = String::new();
    let total = config.train.meta_iterations;
    let outcome = meta_train(
        &model,
        &theta0,
        &train_tasks,
        Some(&dev_tasks),
        &config.train,
        |record, theta| {
            log.push_str(&serde_json::to_string(record)?);
            log.push('\n');
            let done = record.iteration + 1;
            if done % 10 == 0 || done == total {
                let _ = writeln!(
                    err,
                    "iter {done}/{total} {:?} seq_loss={:.4} r_greedy={:.4}",
                    record.phase, record.seq_loss, record.r_greedy
                );
            }
            if a.checkpoint_every > 0 && done % a.checkpoint_every == 0 {
                let path = a.out.join("checkpoints").join(format!("iter-{done:06}.ckpt"));
                write_checkpoint(&path, theta, &sidecar(done)).map_err(|e| match e {
                    CliError::Data(e) => e,
                    other => Error::Config(other.to_string()),
                })?;
            }
            Ok(())
        },
    )?;
    write_file(&a.out.join("train_log.jsonl"), log.as_bytes())?;
    write_checkpoint(&a.out.join("model.ckpt"), &outcome.params, &sidecar(outcome.best_iteration + 1))?;
    emit(
        out,
        &format!(
            "trained {} iterations on {} tasks; kept iteration {}; wrote {}\n",
            outcome.log.len(),
            train_tasks.len(),
            outcome.best_iteration + 1,
            a.out.join("model.ckpt").display()
        ),
    )
}

fn report_out(scoring: &ScoringArgs, report: &EvalReport, out: &mut dyn Write) -> CliResult<()> {
    if let Some(path) = &scoring.out {
        write_file(path, (report.to_json_string() + "\n").as_bytes())?;
    }
    emit(out, &reports_table(std::slice::from_ref(report)))?;
    emit(out, &format!("pairs={} tasks={} [{}]\n", report.pairs, report.tasks, report.fingerprint))
}

fn mode(scoring: &ScoringArgs) -> F1Mode {
    if scoring.multiset {
        F1Mode::Multiset
    } else {
        F1Mode::Set
    }
}

fn threads(scoring: &ScoringArgs) -> CliResult<usize> {
    match scoring.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(default_threads()),
    }
}

/// A checkpoint with its sidecar and the model it describes.
#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub model: PolicyModel,
    pub params: ParamStore,
    pub sidecar: Sidecar,
}

/// Reads `checkpoint` and the sidecar beside it. A missing file is a usage
/// error; a malformed one is a data error.
pub fn load_checkpoint(checkpoint: &Path) -> CliResult<LoadedCheckpoint> {
    if !checkpoint.is_file() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let side_path = sidecar_path(checkpoint);
    if !side_path.is_file() {
        return Err(CliError::Usage(format!("checkpoint sidecar {} does not exist", side_path.display())));
    }
    let doc = std::fs::read_to_string(&side_path).map_err(|e| Error::Io {
        path: side_path.clone(),
        source: e,
    })?;
    let sidecar: Sidecar = serde_json::from_str(&doc).map_err(Error::from)?;
    if sidecar.format != SIDECAR_FORMAT {
        return Err(CliError::Data(Error::Checkpoint(format!("unsupported sidecar format {}", sidecar.format))));
    }
    let catalog = Catalog::from_json_str(&sidecar.catalog.to_string())?;
    let model = PolicyModel::new(catalog, sidecar.model, sidecar.flags)?;
    let params = ParamStore::load(checkpoint)?;
    model.check_params(&params)?;
    Ok(LoadedCheckpoint { model, params, sidecar })
}

fn eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let LoadedCheckpoint {
        mut model,
        params: theta,
        sidecar,
    } = load_checkpoint(&a.checkpoint)?;
    if let Some(p) = a.data.catalog.as_deref() {
        let catalog = load_catalog(Some(p))?;
        if catalog.vocab_size() != model.catalog.vocab_size() {
            return Err(CliError::Usage("--catalog does not match the checkpoint's vocabulary".into()));
        }
        model.catalog = catalog;
    }
    model.flags.rae &= !a.flags.no_rae;
    model.flags.gates &= !a.flags.no_gates;
    let catalog = model.catalog.clone();

    let matches = select(&a.data, load_clean(&a.data, &catalog, err)?, Part::Test)?;
    let tasks = tasks_for(&matches, sidecar.train.k, &catalog, err);
    let policy = AdaptedPolicy {
        model: &model,
        theta: &theta,
        config: &sidecar.train,
        phase: Phase::Scst,
    };
    let report = evaluate_policy(&policy, &tasks, &catalog, mode(&a.scoring), threads(&a.scoring)?)?;
    report_out(&a.scoring, &report, out)
}

fn baseline(a: &BaselineArgs, config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let catalog = load_catalog(a.data.catalog.as_deref())?;
    let matches = select(&a.data, load_clean(&a.data, &catalog, err)?, Part::Test)?;
    let k = a.k.unwrap_or(config.train.k);
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let tasks = tasks_for(&matches, k, &catalog, err);
    let report = evaluate_policy(&GreedyPolicy { catalog: &catalog }, &tasks, &catalog, mode(&a.scoring), threads(&a.scoring)?)?;
    report_out(&a.scoring, &report, out)
}

fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.points == 0 || a.states == 0 {
        return Err(CliError::Usage("--points and --states must be at least 1".into()));
    }
    let report = gradcheck_suite(a.points, a.states)?;
    emit(out, &report.to_text())?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Check(format!("max relative error {:.3e}", report.max_rel_error())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("roundbuy").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["eval", "--data", "x"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_checkpoint_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.ckpt");
        let (code, _, err) = run_args(&["eval", "--data", dir.path().to_str().unwrap(), "--checkpoint", missing.to_str().unwrap()]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn bad_data_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.json"), "{\"match_id\": 3}").unwrap();
        let (code, _, _) = run_args(&["stats", "--data", dir.path().to_str().unwrap()]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn config_file_is_read_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "split_seed = 9\n[train]\nk = 3\nmeta_iterations = 7\n").unwrap();
        let loaded = RunConfig::load(&cfg).unwrap();
        assert_eq!(loaded.split_seed, 9);
        assert_eq!(loaded.train.k, 3);
        assert_eq!(loaded.train.inner_lr, TrainConfig::default().inner_lr);
        std::fs::write(&cfg, "typo = 1\n").unwrap();
        assert!(matches!(RunConfig::load(&cfg), Err(CliError::Usage(_))));

        let data = dir.path().join("data");
        assert_eq!(run_args(&["synth", "--out", data.to_str().unwrap(), "--matches", "10"]).0, 0);
        std::fs::write(&cfg, "split_seed = 9\n").unwrap();
        let manifest = dir.path().join("m.json");
        let args = ["--config", cfg.to_str().unwrap(), "ingest", "--data", data.to_str().unwrap(), "--out", manifest.to_str().unwrap()];
        assert_eq!(run_args(&args).0, 0);
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
        assert_eq!(m.split_seed, 9);
        assert_eq!((m.train.len(), m.dev.len(), m.test.len()), (8, 1, 1));
        let mut with_flag = args.to_vec();
        with_flag.extend(["--split-seed", "4"]);
        assert_eq!(run_args(&with_flag).0, 0);
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
        assert_eq!(m.split_seed, 4);
    }
}
