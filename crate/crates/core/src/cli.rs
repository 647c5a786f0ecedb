//! Command-line interface.
//!
//! Metrics go to stdout as `key=value` lines; diagnostics go to stderr.
//! Exit codes: 0 success, 1 usage error, 2 data error. Every run writes a
//! manifest: to `--manifest` if given, else next to `--out` as
//! `<out>.manifest.json`, else to stderr as a `manifest=<json>` line.
//! `GEOMM_NUM_THREADS` overrides the worker thread count.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bootstrap::{bootstrap_train, induce_dictionary, mutual_best, BootstrapConfig, Direction};
use crate::dataio::{
    file_digest, load_dictionary, load_embeddings, load_model, load_scored_pairs, preprocess, save_model,
    with_suffix, write_dictionary, Embeddings, ModelFile, PreprocessScheme, WordPair,
};
use crate::error::{Error, Result};
use crate::model::ModelVariant;
use crate::optimizer::SolverOptions;
use crate::pipelines::{make_disjoint_pivot, train_bilingual, train_multilingual, DictionaryEdge, TrainConfig};
use crate::retrieval::{evaluate_bli_with, evaluate_word_similarity, InferenceSpace, RetrievalMode, Retriever};

pub const THREADS_ENV: &str = "GEOMM_NUM_THREADS";

#[derive(Parser, Debug)]
#[command(name = "geomm", version, about = "Align word embeddings across languages with rotations and a shared metric")]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a bilingual model from a seed dictionary.
    Train(TrainArgs),
    /// Jointly train one model over several languages.
    TrainMulti(TrainMultiArgs),
    /// Semi-supervised training with iterative dictionary induction.
    Bootstrap(BootstrapArgs),
    /// Translate words (from arguments or stdin).
    Translate(TranslateArgs),
    /// Precision@1/5/10 on a test dictionary.
    EvaluateBli(EvaluateBliArgs),
    /// Pearson correlation on a scored cross-lingual word-pair file.
    EvaluateSim(EvaluateSimArgs),
    /// Write a dictionary induced by CSLS top-1 retrieval.
    Induce(InduceArgs),
    /// Make two dictionaries share no pivot-language word.
    MakeDisjointPivotDicts(DisjointArgs),
}

fn parse_lambdas(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s == "grid" {
        return Ok(crate::pipelines::DEFAULT_LAMBDA_GRID.to_vec());
    }
    s.split(',')
        .map(|t| {
            let v: f64 = t.trim().parse().map_err(|_| format!("not a number: `{t}`"))?;
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(format!("λ must be positive, got {v}"))
            }
        })
        .collect()
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    /// A single value, a comma-separated list, or `grid` for 10,100,1000,10000.
    #[arg(long = "lambda", default_value = "grid", value_parser = parse_lambdas)]
    pub lambda: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    /// Seeds the validation split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-iter", default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = crate::retrieval::DEFAULT_CSLS_K)]
    pub csls_k: usize,
    /// Keep only the first N words of each embedding file.
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long, value_enum, default_value_t = PreprocessScheme::Unit)]
    pub preprocess: PreprocessScheme,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl OptimArgs {
    fn config(&self, variant: ModelVariant) -> TrainConfig {
        TrainConfig {
            lambdas: self.lambda.clone(),
            val_frac: self.val_frac,
            seed: self.seed,
            solver: SolverOptions {
                max_iters: self.max_iter,
                grad_tol: self.grad_tol,
                ..SolverOptions::default()
            },
            variant,
            csls_k: self.csls_k,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub src_emb: PathBuf,
    #[arg(long)]
    pub tgt_emb: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Source language identifier stored in the model.
    #[arg(long, default_value = "src")]
    pub src: String,
    #[arg(long, default_value = "tgt")]
    pub tgt: String,
    #[arg(long, value_enum, default_value_t = ModelVariant::Full)]
    pub variant: ModelVariant,
    #[command(flatten)]
    pub opt: OptimArgs,
}

#[derive(Args, Debug)]
pub struct TrainMultiArgs {
    /// One edge per line: `lang_i lang_j emb_i emb_j dict`. Relative paths
    /// are resolved against the file's directory.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opt: OptimArgs,
}

#[derive(Args, Debug)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 25_000)]
    pub vocab_cutoff: usize,
    #[arg(long, default_value_t = 20)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 1)]
    pub patience: usize,
    /// Keep only pairs induced in both directions.
    #[arg(long)]
    pub mutual_best: bool,
    /// Select λ again in every round.
    #[arg(long)]
    pub reselect_lambda: bool,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub src: String,
    #[arg(long)]
    pub tgt: String,
    #[arg(long)]
    pub src_emb: PathBuf,
    #[arg(long)]
    pub tgt_emb: PathBuf,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long, default_value_t = crate::retrieval::DEFAULT_CSLS_K)]
    pub csls_k: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RetrievalArgs {
    #[arg(long, value_enum, default_value_t = RetrievalMode::Csls)]
    pub mode: RetrievalMode,
    #[arg(long, value_enum, default_value_t = InferenceSpace::Latent)]
    pub space: InferenceSpace,
    /// Only the first N target words are retrieval candidates.
    #[arg(long, default_value_t = 200_000)]
    pub retrieval_vocab: usize,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Words to translate; read whitespace-separated from stdin if absent.
    pub words: Vec<String>,
}

#[derive(Args, Debug)]
pub struct EvaluateBliArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[arg(long)]
    pub test_dict: PathBuf,
    /// Print each query's top candidates on stderr.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateSimArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Lines `src_word tgt_word score`.
    #[arg(long)]
    pub pairs_file: PathBuf,
}

#[derive(Args, Debug)]
pub struct InduceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 25_000)]
    pub vocab_cutoff: usize,
    #[arg(long, value_enum, default_value_t = Direction::Both)]
    pub direction: Direction,
    /// Keep only pairs induced in both directions (overrides --direction).
    #[arg(long)]
    pub mutual_best: bool,
}

#[derive(Args, Debug)]
pub struct DisjointArgs {
    /// Source–pivot dictionary.
    #[arg(long)]
    pub dict1: PathBuf,
    /// Pivot–target dictionary.
    #[arg(long)]
    pub dict2: PathBuf,
    #[arg(long)]
    pub out1: PathBuf,
    #[arg(long)]
    pub out2: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Everything needed to reproduce a run.
#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: &'static str,
    pub config: Value,
    /// Input path to hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub elapsed_secs: f64,
    pub threads: usize,
    pub results: Value,
}

struct Run {
    manifest: RunManifest,
    start: Instant,
    out: Box<dyn Write>,
}

impl Run {
    fn input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    fn emit(&mut self, key: &str, value: impl std::fmt::Display) -> Result<()> {
        writeln!(self.out, "{key}={value}")?;
        Ok(())
    }

    fn finish(mut self, manifest_path: Option<&Path>, default_dir: Option<&Path>) -> Result<()> {
        self.manifest.elapsed_secs = self.start.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let target = manifest_path
            .map(Path::to_path_buf)
            .or_else(|| default_dir.map(|p| with_suffix(p, ".manifest.json")));
        match target {
            Some(p) => std::fs::write(p, text + "\n")?,
            None => eprintln!("manifest={}", serde_json::to_string(&self.manifest).expect("manifest serializes")),
        }
        self.out.flush()?;
        Ok(())
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn load_emb(run: &mut Run, path: &Path, max_vocab: Option<usize>, scheme: PreprocessScheme) -> Result<Embeddings> {
    run.input(path)?;
    preprocess(load_embeddings(path, max_vocab)?, scheme)
}

fn load_dict(run: &mut Run, path: &Path) -> Result<Vec<WordPair>> {
    run.input(path)?;
    let d = load_dictionary(path)?;
    if d.pairs.is_empty() {
        return Err(Error::EmptyDictionary(format!("{} contains no word pairs", path.display())));
    }
    Ok(d.pairs)
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return 1;
            }
        }
    }
    let run = Run {
        manifest: RunManifest {
            command: String::new(),
            args: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
            version: env!("CARGO_PKG_VERSION"),
            config: Value::Null,
            inputs: BTreeMap::new(),
            outputs: vec![],
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            elapsed_secs: 0.0,
            threads: rayon::current_num_threads(),
            results: Value::Null,
        },
        start: Instant::now(),
        out: Box::new(std::io::stdout().lock()),
    };
    match dispatch(cli.command, run) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(command: Command, mut run: Run) -> Result<()> {
    match command {
        Command::Train(a) => {
            run.manifest.command = "train".into();
            cmd_train(a, run)
        }
        Command::TrainMulti(a) => {
            run.manifest.command = "train-multi".into();
            cmd_train_multi(a, run)
        }
        Command::Bootstrap(a) => {
            run.manifest.command = "bootstrap".into();
            cmd_bootstrap(a, run)
        }
        Command::Translate(a) => {
            run.manifest.command = "translate".into();
            cmd_translate(a, run)
        }
        Command::EvaluateBli(a) => {
            run.manifest.command = "evaluate-bli".into();
            cmd_evaluate_bli(a, run)
        }
        Command::EvaluateSim(a) => {
            run.manifest.command = "evaluate-sim".into();
            cmd_evaluate_sim(a, run)
        }
        Command::Induce(a) => {
            run.manifest.command = "induce".into();
            cmd_induce(a, run)
        }
        Command::MakeDisjointPivotDicts(a) => {
            run.manifest.command = "make-disjoint-pivot-dicts".into();
            cmd_disjoint(a, run)
        }
    }
}

fn train_config_json(cfg: &TrainConfig, opt: &OptimArgs) -> Value {
    json!({
        "lambdas": cfg.lambdas,
        "val_frac": cfg.val_frac,
        "seed": cfg.seed,
        "variant": cfg.variant,
        "csls_k": cfg.csls_k,
        "max_iters": cfg.solver.max_iters,
        "grad_tol": cfg.solver.grad_tol,
        "step_tol": cfg.solver.step_tol,
        "max_vocab": opt.max_vocab,
        "preprocess": opt.preprocess,
    })
}

fn cmd_train(a: TrainArgs, mut run: Run) -> Result<()> {
    let cfg = a.opt.config(a.variant);
    cfg.validate()?;
    run.manifest.config = train_config_json(&cfg, &a.opt);
    let se = load_emb(&mut run, &a.src_emb, a.opt.max_vocab, a.opt.preprocess)?;
    let te = load_emb(&mut run, &a.tgt_emb, a.opt.max_vocab, a.opt.preprocess)?;
    let dict = load_dict(&mut run, &a.dict)?;
    let (params, report) = train_bilingual(&a.src, &a.tgt, &se, &te, &dict, &cfg)?;
    save_model(&a.out, &ModelFile { params, preprocess: a.opt.preprocess })?;
    for c in &report.candidates {
        if let Some(p) = c.val_p1 {
            run.emit(&format!("val_p1[{}]", c.lambda), pct(p))?;
        }
    }
    run.emit("lambda", report.selected_lambda)?;
    run.emit("final_cost", report.final_cost)?;
    run.emit("iterations", report.iterations)?;
    run.emit("termination", &report.termination)?;
    run.emit("dropped_pairs", report.edges[0].dropped_pairs)?;
    run.emit("model", a.out.display())?;
    run.manifest.outputs.push(a.out.display().to_string());
    run.manifest.results = serde_json::to_value(&report).expect("report serializes");
    let m = a.opt.manifest.clone();
    run.finish(m.as_deref(), Some(&a.out))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cmd_train_multi(a: TrainMultiArgs, mut run: Run) -> Result<()> {
    let cfg = a.opt.config(ModelVariant::Full);
    cfg.validate()?;
    run.manifest.config = train_config_json(&cfg, &a.opt);
    run.input(&a.pairs)?;
    let base = a.pairs.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = std::fs::read_to_string(&a.pairs)?;
    let mut emb_paths: HashMap<String, PathBuf> = HashMap::new();
    let mut embeddings: HashMap<String, Embeddings> = HashMap::new();
    let mut dicts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::Parse {
                path: a.pairs.clone(),
                line: i + 1,
                msg: format!("expected 5 fields, found {}", f.len()),
            });
        }
        for (lang, p) in [(f[0], f[2]), (f[1], f[3])] {
            let path = resolve(&base, p);
            match emb_paths.get(lang) {
                Some(prev) if *prev != path => {
                    return Err(Error::Parse {
                        path: a.pairs.clone(),
                        line: i + 1,
                        msg: format!("language `{lang}` already uses {}", prev.display()),
                    });
                }
                Some(_) => {}
                None => {
                    let e = load_emb(&mut run, &path, a.opt.max_vocab, a.opt.preprocess)?;
                    embeddings.insert(lang.to_string(), e);
                    emb_paths.insert(lang.to_string(), path);
                }
            }
        }
        let pairs = load_dict(&mut run, &resolve(&base, f[4]))?;
        dicts.push(DictionaryEdge { src: f[0].into(), tgt: f[1].into(), pairs });
    }
    if dicts.is_empty() {
        return Err(Error::EmptyDictionary(format!("{} lists no edges", a.pairs.display())));
    }
    let (params, report) = train_multilingual(&embeddings, &dicts, &cfg)?;
    run.emit("languages", params.languages().join(","))?;
    save_model(&a.out, &ModelFile { params, preprocess: a.opt.preprocess })?;
    for c in &report.candidates {
        if let Some(p) = c.val_p1 {
            run.emit(&format!("val_p1[{}]", c.lambda), pct(p))?;
        }
    }
    run.emit("lambda", report.selected_lambda)?;
    run.emit("final_cost", report.final_cost)?;
    run.emit("iterations", report.iterations)?;
    run.emit("termination", &report.termination)?;
    run.emit("dropped_pairs", report.edges.iter().map(|e| e.dropped_pairs).sum::<usize>())?;
    run.emit("model", a.out.display())?;
    run.manifest.outputs.push(a.out.display().to_string());
    run.manifest.results = serde_json::to_value(&report).expect("report serializes");
    let m = a.opt.manifest.clone();
    run.finish(m.as_deref(), Some(&a.out))
}

fn cmd_bootstrap(a: BootstrapArgs, mut run: Run) -> Result<()> {
    let t = &a.train;
    let cfg = BootstrapConfig {
        train: t.opt.config(t.variant),
        vocab_cutoff: a.vocab_cutoff,
        max_rounds: a.max_rounds,
        patience: a.patience,
        mutual_best: a.mutual_best,
        reselect_lambda: a.reselect_lambda,
    };
    cfg.validate()?;
    let mut config = train_config_json(&cfg.train, &t.opt);
    config["vocab_cutoff"] = json!(cfg.vocab_cutoff);
    config["max_rounds"] = json!(cfg.max_rounds);
    config["patience"] = json!(cfg.patience);
    config["mutual_best"] = json!(cfg.mutual_best);
    config["reselect_lambda"] = json!(cfg.reselect_lambda);
    run.manifest.config = config;
    let se = load_emb(&mut run, &t.src_emb, t.opt.max_vocab, t.opt.preprocess)?;
    let te = load_emb(&mut run, &t.tgt_emb, t.opt.max_vocab, t.opt.preprocess)?;
    let dict = load_dict(&mut run, &t.dict)?;
    let (params, report) = bootstrap_train(&t.src, &t.tgt, &se, &te, &dict, &cfg)?;
    save_model(&t.out, &ModelFile { params, preprocess: t.opt.preprocess })?;
    for r in &report.rounds {
        eprintln!("round={} dict_size={} val_p1={}", r.round, r.dict_size, pct(r.val_p1));
    }
    run.emit("lambda", report.lambda)?;
    run.emit("seed_val_p1", pct(report.seed_val_p1))?;
    run.emit("rounds", report.rounds.len())?;
    run.emit("best_round", report.best_round)?;
    run.emit("val_p1", pct(report.best_val_p1))?;
    if let Some(msg) = &report.aborted {
        eprintln!("warning: bootstrap stopped early: {msg}");
    }
    run.emit("model", t.out.display())?;
    run.manifest.outputs.push(t.out.display().to_string());
    run.manifest.results = serde_json::to_value(&report).expect("report serializes");
    let m = t.opt.manifest.clone();
    run.finish(m.as_deref(), Some(&t.out))
}

struct Loaded {
    model: ModelFile,
    src: Embeddings,
    tgt: Embeddings,
}

fn load_for_model(run: &mut Run, m: &ModelArgs) -> Result<Loaded> {
    if m.csls_k == 0 {
        return Err(Error::InvalidConfig("CSLS k must be at least 1".into()));
    }
    run.input(&m.model)?;
    let model = load_model(&m.model)?;
    model.params.index_of(&m.src)?;
    model.params.index_of(&m.tgt)?;
    let src = load_emb(run, &m.src_emb, m.max_vocab, model.preprocess)?;
    let tgt = load_emb(run, &m.tgt_emb, m.max_vocab, model.preprocess)?;
    if src.dim() != model.params.dim() || tgt.dim() != model.params.dim() {
        return Err(Error::dims(model.params.dim(), if src.dim() != model.params.dim() { src.dim() } else { tgt.dim() }));
    }
    Ok(Loaded { model, src, tgt })
}

fn model_config(m: &ModelArgs, r: Option<&RetrievalArgs>, preprocess: PreprocessScheme) -> Value {
    let mut v = json!({
        "src": m.src,
        "tgt": m.tgt,
        "max_vocab": m.max_vocab,
        "csls_k": m.csls_k,
        "preprocess": preprocess,
    });
    if let Some(r) = r {
        v["mode"] = json!(r.mode);
        v["space"] = json!(r.space);
        v["retrieval_vocab"] = json!(r.retrieval_vocab);
    }
    v
}

fn retriever(l: &Loaded, m: &ModelArgs, r: &RetrievalArgs) -> Result<Retriever> {
    let tgt = l.tgt.truncated(r.retrieval_vocab);
    let k = m.csls_k.min(l.src.len()).min(tgt.len()).max(1);
    Retriever::build(&l.model.params, &m.src, &m.tgt, &l.src, &tgt, r.mode, r.space, k)
}

fn cmd_translate(a: TranslateArgs, mut run: Run) -> Result<()> {
    let l = load_for_model(&mut run, &a.model)?;
    let mut config = model_config(&a.model, Some(&a.retrieval), l.model.preprocess);
    config["topk"] = json!(a.topk);
    run.manifest.config = config;
    let words: Vec<String> = if a.words.is_empty() {
        let mut w = Vec::new();
        for line in std::io::stdin().lock().lines() {
            w.extend(line?.split_whitespace().map(str::to_string));
        }
        w
    } else {
        a.words.clone()
    };
    let r = retriever(&l, &a.model, &a.retrieval)?;
    let out = r.translate(&words, a.topk);
    let mut oov = Vec::new();
    for t in &out {
        match &t.candidates {
            Some(c) => {
                let list: Vec<&str> = c.iter().map(|(w, _)| w.as_str()).collect();
                run.emit(&t.query, list.join(","))?;
            }
            None => {
                eprintln!("oov={}", t.query);
                oov.push(t.query.clone());
            }
        }
    }
    run.manifest.results = json!({ "queries": words.len(), "oov": oov });
    let m = a.model.manifest.clone();
    run.finish(m.as_deref(), None)
}

fn cmd_evaluate_bli(a: EvaluateBliArgs, mut run: Run) -> Result<()> {
    let l = load_for_model(&mut run, &a.model)?;
    run.manifest.config = model_config(&a.model, Some(&a.retrieval), l.model.preprocess);
    let test = load_dict(&mut run, &a.test_dict)?;
    let r = retriever(&l, &a.model, &a.retrieval)?;
    let rep = evaluate_bli_with(&r, &test)?;
    if a.dump {
        let mut seen = std::collections::HashSet::new();
        let queries: Vec<String> = test
            .iter()
            .filter(|(s, _)| seen.insert(s.clone()))
            .map(|(s, _)| s.clone())
            .collect();
        for t in r.translate(&queries, 10) {
            if let Some(c) = t.candidates {
                let list: Vec<String> = c.iter().map(|(w, s)| format!("{w}:{s:.4}")).collect();
                eprintln!("query={} top={}", t.query, list.join(","));
            }
        }
    }
    run.emit("p@1", pct(rep.p1))?;
    run.emit("p@5", pct(rep.p5))?;
    run.emit("p@10", pct(rep.p10))?;
    run.emit("evaluated", rep.evaluated)?;
    run.emit("oov", rep.oov)?;
    run.emit("coverage", pct(rep.coverage()))?;
    run.manifest.results = serde_json::to_value(&rep).expect("report serializes");
    let m = a.model.manifest.clone();
    run.finish(m.as_deref(), None)
}

fn cmd_evaluate_sim(a: EvaluateSimArgs, mut run: Run) -> Result<()> {
    let l = load_for_model(&mut run, &a.model)?;
    run.manifest.config = model_config(&a.model, None, l.model.preprocess);
    run.input(&a.pairs_file)?;
    let pairs = load_scored_pairs(&a.pairs_file)?;
    let rep = evaluate_word_similarity(&l.model.params, &a.model.src, &a.model.tgt, &l.src, &l.tgt, &pairs)?;
    run.emit("pearson", format!("{:.4}", rep.pearson))?;
    run.emit("used", rep.used)?;
    run.emit("total", rep.total)?;
    run.emit("coverage", pct(rep.used as f64 / rep.total as f64))?;
    run.manifest.results = serde_json::to_value(&rep).expect("report serializes");
    let m = a.model.manifest.clone();
    run.finish(m.as_deref(), None)
}

fn cmd_induce(a: InduceArgs, mut run: Run) -> Result<()> {
    if a.vocab_cutoff == 0 {
        return Err(Error::InvalidConfig("vocabulary cutoff must be at least 1".into()));
    }
    let l = load_for_model(&mut run, &a.model)?;
    let mut config = model_config(&a.model, None, l.model.preprocess);
    config["vocab_cutoff"] = json!(a.vocab_cutoff);
    config["direction"] = json!(a.direction);
    config["mutual_best"] = json!(a.mutual_best);
    run.manifest.config = config;
    let m = &a.model;
    let pairs = if a.mutual_best {
        mutual_best(&l.model.params, &m.src, &m.tgt, &l.src, &l.tgt, a.vocab_cutoff, m.csls_k)?
    } else {
        induce_dictionary(&l.model.params, &m.src, &m.tgt, &l.src, &l.tgt, a.vocab_cutoff, m.csls_k, a.direction)?
    };
    write_dictionary(&a.out, &pairs)?;
    run.emit("pairs", pairs.len())?;
    run.emit("dictionary", a.out.display())?;
    run.manifest.outputs.push(a.out.display().to_string());
    run.manifest.results = json!({ "pairs": pairs.len() });
    let mp = a.model.manifest.clone();
    run.finish(mp.as_deref(), Some(&a.out))
}

fn cmd_disjoint(a: DisjointArgs, mut run: Run) -> Result<()> {
    run.manifest.config = json!({ "seed": a.seed });
    let d1 = load_dict(&mut run, &a.dict1)?;
    let d2 = load_dict(&mut run, &a.dict2)?;
    let out = make_disjoint_pivot(&d1, &d2, a.seed);
    write_dictionary(&a.out1, &out.first)?;
    write_dictionary(&a.out2, &out.second)?;
    run.emit("shared_pivots", out.shared)?;
    run.emit("kept1", out.first.len())?;
    run.emit("kept2", out.second.len())?;
    run.manifest.outputs = vec![a.out1.display().to_string(), a.out2.display().to_string()];
    run.manifest.results = json!({
        "shared_pivots": out.shared,
        "kept1": out.first.len(),
        "kept2": out.second.len(),
    });
    run.finish(a.manifest.as_deref(), Some(&a.out1))
}
