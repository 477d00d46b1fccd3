//! Command-line front end: synthesis, training, evaluation, prediction and
//! knowledge-graph inspection.

mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{evaluate_corpus, predict_scene, EvalError, DEFAULT_KS};
use crate::knowledge::{assemble, write_kg_dir, KgMode, KnowledgeError, KnowledgeGraph, Vocab, VocabRegistry};
use crate::scene::{generate_synthetic_corpus, load_scene, save_scene, SceneError, SceneSample, SynthSpec};
use crate::training::{
    history_csv, load_checkpoint, save_checkpoint, scene_seed, train, CheckpointError, Optimizer, TrainError,
};

pub use config::{PathConfig, RunConfig};
pub use output::{kg_summary, to_dot, PredictionFile, PredictedSegment, PredictedTriplet};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ksgn", version, about = "Knowledge-bridged 3D scene graph prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene corpus.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus loss history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Predict the scene graph of one scene.
    Predict(PredictArgs),
    /// Print knowledge matrix statistics.
    KgInspect(KgInspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_segments: Option<usize>,
    /// Also derive a knowledge graph from separately generated scenes.
    #[arg(long)]
    pub kg_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub kg_scenes: usize,
    /// Seed of the knowledge scenes; defaults to `seed + 1`.
    #[arg(long)]
    pub kg_seed: Option<u64>,
    #[arg(long, default_value_t = 16)]
    pub embedding_dim: usize,
}

#[derive(Debug, Args, Default)]
pub struct KgArgs {
    /// Directory holding `embeddings.txt` and `<matrix>.tsv` files.
    #[arg(long)]
    pub kg_dir: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Extra vocabulary file (JSON).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Edge-list file for one matrix, as `name=path`; repeatable.
    #[arg(long = "edge-file", value_parser = parse_edge_file)]
    pub edge_files: Vec<(String, PathBuf)>,
}

fn parse_widths(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("expected two comma-separated widths, got `{s}`");
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_edge_file(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected `name=path`, got `{s}`"))?;
    Ok((name.to_string(), PathBuf::from(path)))
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub kg: KgArgs,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Checkpoint path; defaults to `<output-dir>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Loss CSV path; defaults to `<output-dir>/loss.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda_obj: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub d_h: Option<usize>,
    #[arg(long)]
    pub d_p: Option<usize>,
    /// Two hidden PointNet widths, e.g. `32,64`.
    #[arg(long, value_parser = parse_widths)]
    pub pointnet_hidden: Option<(usize, usize)>,
    #[arg(long)]
    pub n_points: Option<usize>,
    #[arg(long)]
    pub predicate_threshold: Option<f64>,
    #[arg(long)]
    pub distance_threshold: Option<f64>,
    #[arg(long)]
    pub kg_mode: Option<KgMode>,
    /// Shorthand for `--kg-mode internal`.
    #[arg(long)]
    pub internal: bool,
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub deterministic: Option<bool>,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Report path; defaults to `<output-dir>/metrics.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Predicate probability threshold; defaults to the checkpoint's.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub top_n: usize,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Triplet file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the predicted graph in DOT format.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Default)]
pub struct KgInspectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub kg: KgArgs,
    /// Inspect the graph stored in a checkpoint instead.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub kg_mode: Option<KgMode>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub vocab: String,
    pub seed: u64,
    pub count: usize,
    pub scenes: Vec<String>,
}

fn registry(extra: Option<&Path>) -> Result<VocabRegistry, CliError> {
    let mut r = VocabRegistry::builtin();
    if let Some(p) = extra {
        r.register(Vocab::load(p)?);
    }
    Ok(r)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Scene files listed in the directory's manifest, or every `*.json` file
/// in name order when there is none.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("corpus directory not found: {}", dir.display())));
    }
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        let text = std::fs::read_to_string(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::Config { path: manifest.clone(), msg: e.to_string() })?;
        return Ok(m.scenes.iter().map(|s| dir.join(s)).collect());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_corpus(dir: &Path, registry: &VocabRegistry) -> Result<Vec<SceneSample>, CliError> {
    corpus_files(dir)?.iter().map(|p| load_scene(p, registry).map_err(CliError::from)).collect()
}

fn corpus_vocab<'a>(scenes: &[SceneSample], registry: &'a VocabRegistry, dir: &Path) -> Result<&'a Vocab, CliError> {
    let first = scenes
        .first()
        .ok_or_else(|| CliError::Usage(format!("corpus {} contains no scenes", dir.display())))?;
    if let Some(s) = scenes.iter().find(|s| s.vocab != first.vocab) {
        return Err(CliError::Usage(format!(
            "corpus {} mixes vocabularies `{}` and `{}`",
            dir.display(),
            first.vocab,
            s.vocab
        )));
    }
    registry.get(&first.vocab).ok_or_else(|| SceneError::UnknownVocab(first.vocab.clone()).into())
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut spec = SynthSpec::new(args.count);
    if let Some(m) = args.max_segments {
        spec.max_segments = m;
        spec.min_segments = spec.min_segments.min(m);
    }
    let scenes = generate_synthetic_corpus(args.seed, &spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut names = Vec::with_capacity(scenes.len());
    for (i, s) in scenes.iter().enumerate() {
        let name = format!("scene_{i:04}.json");
        save_scene(s, &args.out.join(&name))?;
        names.push(name);
    }
    let manifest = Manifest { vocab: spec.vocab.name.clone(), seed: args.seed, count: scenes.len(), scenes: names };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&args.out.join(MANIFEST), &text)?;
    let _ = writeln!(out, "wrote {} scenes to {}", scenes.len(), args.out.display());
    if let Some(dir) = &args.kg_dir {
        let kg_spec = SynthSpec { num_scenes: args.kg_scenes, ..spec.clone() };
        let kg_scenes = generate_synthetic_corpus(args.kg_seed.unwrap_or(args.seed.wrapping_add(1)), &kg_spec)?;
        write_kg_dir(dir, &kg_scenes, &spec.vocab, args.embedding_dim, args.seed)?;
        let _ = writeln!(out, "wrote knowledge files derived from {} scenes to {}", kg_scenes.len(), dir.display());
    }
    Ok(())
}

fn apply_train_overrides(cfg: &mut RunConfig, a: &TrainArgs) {
    let t = &mut cfg.train;
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { t.$field = v; } )* };
    }
    set!(learning_rate, lambda_obj, epochs, seed, steps, d_h, d_p, n_points, predicate_threshold, distance_threshold,
        kg_mode, optimizer, batch_size, deterministic);
    if let Some((h1, h2)) = a.pointnet_hidden {
        t.pointnet_hidden = [h1, h2];
    }
    if a.internal {
        t.kg_mode = KgMode::Internal;
    }
    let p = &mut cfg.paths;
    p.edge_files.extend(a.kg.edge_files.iter().cloned());
    for (dst, src) in [
        (&mut p.corpus, &a.corpus),
        (&mut p.kg_dir, &a.kg.kg_dir),
        (&mut p.embeddings, &a.kg.embeddings),
        (&mut p.vocab, &a.kg.vocab),
        (&mut p.output_dir, &a.output_dir),
        (&mut p.checkpoint, &a.checkpoint),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn build_kg(cfg: &RunConfig, vocab: &Vocab, mode: KgMode, log: &mut dyn Write) -> Result<KnowledgeGraph, CliError> {
    let sources = cfg.kg_sources(vocab)?;
    let (kg, report) = assemble(vocab, &sources, mode)?;
    for (kind, n) in &report.skipped_edges {
        let _ = writeln!(log, "warning: skipped {n} edges naming unknown classes in {}", kind.name());
    }
    if !report.missing_words.is_empty() {
        let _ = writeln!(log, "warning: {} label words have no embedding", report.missing_words.len());
    }
    Ok(kg)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_train_overrides(&mut cfg, args);
    cfg.train.validate()?;
    let corpus_dir = cfg.paths.corpus.clone().ok_or_else(|| CliError::Usage("no corpus given (--corpus)".into()))?;
    let files = corpus_files(&corpus_dir)?;
    if let Some(missing) = files.iter().find(|f| !f.is_file()) {
        return Err(CliError::Usage(format!("scene file not found: {}", missing.display())));
    }
    let out_dir = cfg.output_dir();
    let ck_path = cfg.paths.checkpoint.clone().unwrap_or_else(|| out_dir.join("checkpoint.json"));
    let hist_path = args.history.clone().unwrap_or_else(|| out_dir.join("loss.csv"));
    let reg = registry(cfg.paths.vocab.as_deref())?;
    let scenes = load_corpus(&corpus_dir, &reg)?;
    let vocab = corpus_vocab(&scenes, &reg, &corpus_dir)?;
    let kg = build_kg(&cfg, vocab, cfg.train.kg_mode, out)?;
    for dir in [ck_path.parent(), hist_path.parent()].into_iter().flatten().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }

    let outcome = train(&scenes, &kg, &cfg.train)?;
    save_checkpoint(&outcome.checkpoint, &ck_path)?;
    write_file(&hist_path, &history_csv(&outcome.history))?;
    let last = outcome.history.last().map_or(f64::NAN, |r| r.total);
    let _ = writeln!(
        out,
        "trained {} epochs on {} scenes ({:?} knowledge), final loss {last:.6}",
        outcome.history.len(),
        scenes.len(),
        cfg.train.kg_mode
    );
    let _ = writeln!(out, "checkpoint: {}\nloss history: {}", ck_path.display(), hist_path.display());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let ck_path = args
        .checkpoint
        .clone()
        .or(cfg.paths.checkpoint.clone())
        .ok_or_else(|| CliError::Usage("no checkpoint given (--checkpoint)".into()))?;
    let corpus_dir = args
        .corpus
        .clone()
        .or(cfg.paths.eval_corpus.clone())
        .or(cfg.paths.corpus.clone())
        .ok_or_else(|| CliError::Usage("no corpus given (--corpus)".into()))?;
    let out_dir = args.output_dir.clone().unwrap_or_else(|| cfg.output_dir());
    let report_path = args.report.clone().unwrap_or_else(|| out_dir.join("metrics.json"));
    let ck = load_checkpoint(&ck_path)?;
    let mut reg = registry(args.vocab.as_deref().or(cfg.paths.vocab.as_deref()))?;
    reg.register(ck.vocab().clone());
    let scenes = load_corpus(&corpus_dir, &reg)?;
    let vocab = corpus_vocab(&scenes, &reg, &corpus_dir)?;
    ck.check_vocab(vocab)?;
    let model = ck.model()?;
    let tau = args.tau.unwrap_or(ck.config.predicate_threshold);
    if !(tau > 0.0 && tau < 1.0) {
        return Err(CliError::Usage(format!("tau must lie in (0, 1), got {tau}")));
    }
    let ks = if args.k.is_empty() { DEFAULT_KS.to_vec() } else { args.k.clone() };
    let seed = ck.config.seed;
    let report = evaluate_corpus(&model, &ck.params, &scenes, tau, &ks, args.top_n, |i| scene_seed(seed, i))?;
    write_file(&report_path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    let _ = write!(out, "{}", report.table());
    if report.missing_instances > 0 {
        let _ = writeln!(
            out,
            "warning: {} of {} ground-truth pairs lie outside the distance threshold and count as misses",
            report.missing_instances, report.n_pairs
        );
    }
    let _ = writeln!(out, "report: {}", report_path.display());
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let mut reg = registry(args.vocab.as_deref())?;
    reg.register(ck.vocab().clone());
    let scene = load_scene(&args.scene, &reg)?;
    let vocab = reg.get(&scene.vocab).ok_or_else(|| SceneError::UnknownVocab(scene.vocab.clone()))?;
    ck.check_vocab(vocab)?;
    let model = ck.model()?;
    let tau = args.tau.unwrap_or(ck.config.predicate_threshold);
    let pred = predict_scene(&model, &ck.params, &scene, tau, args.seed)?;
    let file = PredictionFile::new(&scene, &pred, vocab);
    write_file(&args.out, &(serde_json::to_string_pretty(&file).expect("predictions serialize") + "\n"))?;
    let _ = writeln!(out, "{} segments, {} predicted triplets -> {}", file.segments.len(), file.triplets.len(), args.out.display());
    if let Some(dot) = &args.dot {
        write_file(dot, &to_dot(&file))?;
        let _ = writeln!(out, "graph: {}", dot.display());
    }
    Ok(())
}

pub fn cmd_kg_inspect(args: &KgInspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kg = match &args.checkpoint {
        Some(p) => load_checkpoint(p)?.kg,
        None => {
            let mut cfg = load_config(args.config.as_deref())?;
            if args.kg.kg_dir.is_some() {
                cfg.paths.kg_dir.clone_from(&args.kg.kg_dir);
            }
            if args.kg.embeddings.is_some() {
                cfg.paths.embeddings.clone_from(&args.kg.embeddings);
            }
            cfg.paths.edge_files.extend(args.kg.edge_files.iter().cloned());
            let vocab = match args.kg.vocab.as_deref().or(cfg.paths.vocab.as_deref()) {
                Some(p) => Vocab::load(p)?,
                None => Vocab::synthetic(),
            };
            build_kg(&cfg, &vocab, args.kg_mode.unwrap_or(cfg.train.kg_mode), out)?
        }
    };
    let _ = write!(out, "{}", kg_summary(&kg));
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::KgInspect(a) => cmd_kg_inspect(a, out),
    }
}
