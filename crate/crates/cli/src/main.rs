mod config;
mod render;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use toprst::corpus::{read_corpus, write_corpus};
use toprst::embeddings::{load_embeddings, load_features, FeatureTable};
use toprst::eval::{bucket_report, confusion_matrices, render_buckets, top_relations, Metric, MetricReport};
use toprst::nn::{finite_difference_check, scalar_width, GradCheckOptions};
use toprst::parser::DocumentForward;
use toprst::synthetic::generate_synthetic;
use toprst::training::{build_static_targets, document_loss};
use toprst::vocab::{LabelSet, Vocab};
use toprst::{parse_document, train, Document, Model, ModelConfig, RstTree, Scalar, TrainConfig};

use config::load_config;
use render::render_tree;

/// Errors that exit with status 2 instead of 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "toprst", version, about = "Top-down RST discourse parser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with gold trees.
    Gen(GenArgs),
    /// Train a model and write checkpoints plus a metrics log.
    Train(Box<TrainArgs>),
    /// Parse a corpus with a trained model.
    Parse(ParseArgs),
    /// Score predicted trees against gold trees.
    Eval(EvalArgs),
    /// Draw one document's gold tree.
    Render(RenderArgs),
    /// Finite-difference check of the analytic gradients on a small model.
    CheckGrad(CheckGradArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    docs: usize,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    edus_min: u64,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(2..))]
    edus_max: u64,
    /// Output corpus; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F64,
    F32,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required_unless_present = "print_config")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// TOML file with training fields and an optional [model] table.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Best checkpoint by dev Full (the last one without --dev).
    #[arg(long, required_unless_present = "print_config")]
    out_model: Option<PathBuf>,
    /// Last-epoch checkpoint; defaults to `<out-model>.last`.
    #[arg(long)]
    out_last: Option<PathBuf>,
    /// Per-epoch metrics log; defaults to `<out-model>.log`.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Pre-trained word vectors, one `token v1 .. vd` per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Per-token syntax features for train and dev documents.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[arg(long)]
    quiet: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,

    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    no_penalty: bool,
    #[arg(long)]
    oracle_start_epoch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    grad_accum: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    pos_dim: Option<usize>,
    #[arg(long)]
    edu_type_dim: Option<usize>,
    #[arg(long)]
    syntax_dim: Option<usize>,
    #[arg(long)]
    rnn_hidden: Option<usize>,
    #[arg(long)]
    segmenter_hidden: Option<usize>,
    #[arg(long)]
    use_syntax: bool,
    #[arg(long)]
    no_paragraph_feature: bool,
    #[arg(long)]
    max_edu_tokens: Option<usize>,
}

impl TrainArgs {
    fn configs(&self) -> Result<(TrainConfig, ModelConfig)> {
        let file = match &self.config {
            Some(p) => load_config(p)?,
            None => Default::default(),
        };
        let (mut t, mut m) = (file.train, file.model);
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(t.lambda1, self.lambda1);
        set!(t.lambda2, self.lambda2);
        set!(t.beta, self.beta);
        set!(t.alpha, self.alpha);
        set!(t.oracle_start_epoch, self.oracle_start_epoch);
        set!(t.lr, self.lr);
        set!(t.batch_size, self.batch_size);
        set!(t.grad_accum, self.grad_accum);
        set!(t.dropout, self.dropout);
        set!(t.adam_eps, self.adam_eps);
        set!(t.max_epochs, self.max_epochs);
        set!(t.seed, self.seed);
        if self.no_penalty {
            t.penalty_enabled = false;
        }
        let e = &mut m.encoder;
        set!(e.word_dim, self.word_dim);
        set!(e.pos_dim, self.pos_dim);
        set!(e.edu_type_dim, self.edu_type_dim);
        set!(e.syntax_dim, self.syntax_dim);
        set!(e.rnn_hidden, self.rnn_hidden);
        set!(m.segmenter_hidden, self.segmenter_hidden);
        if self.use_syntax {
            e.use_syntax = true;
        }
        if self.no_paragraph_feature {
            e.use_paragraph_feature = false;
        }
        if self.max_edu_tokens.is_some() {
            e.max_edu_tokens = self.max_edu_tokens;
        }
        t.validate()?;
        m.validate()?;
        Ok((t, m))
    }
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output corpus with predicted trees in the `gold` field; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-decision traces (`m n split nuc rel prob`) here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = Metric::Original)]
    metric: Metric,
    /// Count the root span under original Parseval.
    #[arg(long)]
    include_root: bool,
    /// Scores per document-length bucket (in EDUs).
    #[arg(long)]
    buckets: bool,
    /// Nuclearity and relation confusion matrices.
    #[arg(long)]
    confusion: bool,
    /// Corpus used to rank relations for the confusion matrix; defaults to --gold.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    top: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    doc_id: String,
}

#[derive(Args)]
struct CheckGradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// EDUs in the synthetic document.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    edus: u64,
    #[arg(long)]
    use_syntax: bool,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Coordinates sampled per tensor; every coordinate when omitted.
    #[arg(long)]
    max_per_param: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,toprst=info,toprst::training=warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => match a.precision {
            Precision::F64 => run_train::<f64>(&a),
            Precision::F32 => run_train::<f32>(&a),
        },
        Command::Parse(a) => parse(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::CheckGrad(a) => check_grad(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("error: {}", msg.split_whitespace().collect::<Vec<_>>().join(" "));
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn corpus(path: &Path) -> Result<Vec<Document>> {
    read_corpus(path).with_context(|| format!("cannot read corpus {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn gen(a: GenArgs) -> Result<()> {
    if a.edus_min > a.edus_max {
        bail!(UsageError(format!("--edus-min {} exceeds --edus-max {}", a.edus_min, a.edus_max)));
    }
    let docs = generate_synthetic(a.seed, a.docs, a.edus_min as usize, a.edus_max as usize)?;
    let mut w = output(a.out.as_deref())?;
    toprst::corpus::write_corpus_to(&mut w, &docs)?;
    w.flush()?;
    Ok(())
}

fn features<T: Scalar>(path: Option<&Path>, model: &ModelConfig) -> Result<Option<FeatureTable<T>>> {
    let Some(p) = path else { return Ok(None) };
    if !model.encoder.use_syntax {
        warn!("--features given but the model does not use syntax features; ignoring");
        return Ok(None);
    }
    let t = load_features(p, model.encoder.syntax_dim).with_context(|| format!("cannot read features {}", p.display()))?;
    Ok(Some(t))
}

fn run_train<T: Scalar>(a: &TrainArgs) -> Result<()> {
    let (cfg, mcfg) = a.configs()?;
    if a.print_config {
        let mut table = toml::Table::try_from(&cfg)?;
        table.insert("model".into(), toml::Value::try_from(&mcfg)?);
        print!("{}", toml::to_string(&table)?);
        return Ok(());
    }
    let (Some(corpus_path), Some(out_model)) = (&a.corpus, &a.out_model) else {
        bail!(UsageError("--corpus and --out-model are required".into()));
    };
    let docs = corpus(corpus_path)?;
    ensure!(!docs.is_empty(), "training corpus {} is empty", corpus_path.display());
    let dev = a.dev.as_deref().map(corpus).transpose()?;
    let feats = features::<T>(a.features.as_deref(), &mcfg)?;
    if mcfg.encoder.use_syntax && feats.is_none() {
        bail!("the model uses syntax features; pass --features");
    }
    let mut model = Model::<T>::for_corpus(mcfg, &docs, cfg.seed)?;
    if let Some(p) = &a.embeddings {
        let table = load_embeddings::<T>(p, model.config.encoder.word_dim).with_context(|| format!("cannot read embeddings {}", p.display()))?;
        let enc = model.encoder.clone();
        let n = enc.load_pretrained(&mut model.store, &table)?;
        info!("pre-trained vectors for {n} of {} words", enc.words.len());
    }
    if let Some(dev) = &dev {
        let unknown = model.labels.unknown_relations(dev);
        ensure!(
            unknown.is_empty(),
            "dev corpus uses relations absent from the training corpus: {}",
            unknown.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    info!(
        "{} training documents, {} relations, {} parameters ({})",
        docs.len(),
        model.labels.num_relations(),
        model.num_parameters(),
        T::NAME
    );

    let log_path = a.metrics.clone().unwrap_or_else(|| with_suffix(out_model, ".log"));
    let mut log = output(Some(&log_path))?;
    let mut io_err = None;
    let quiet = a.quiet;
    let outcome = train(model, &docs, dev.as_deref(), feats.as_ref(), &cfg, &mut |e| {
        if !quiet {
            println!("{e}");
        }
        match writeln!(log, "{e}").and_then(|_| log.flush()) {
            Ok(()) => true,
            Err(err) => {
                io_err = Some(err);
                false
            }
        }
    })?;
    if let Some(err) = io_err {
        return Err(err).context(format!("cannot write {}", log_path.display()));
    }
    outcome.best.save(out_model).with_context(|| format!("cannot write {}", out_model.display()))?;
    let last = a.out_last.clone().unwrap_or_else(|| with_suffix(out_model, ".last"));
    outcome.last.save(&last).with_context(|| format!("cannot write {}", last.display()))?;
    info!("best epoch {} written to {}, last epoch to {}", outcome.best_epoch, out_model.display(), last.display());
    Ok(())
}

fn parse(a: ParseArgs) -> Result<()> {
    match scalar_width(&a.model).with_context(|| format!("cannot read model {}", a.model.display()))? {
        8 => parse_with::<f64>(&a),
        4 => parse_with::<f32>(&a),
        w => bail!("model stores {w}-byte values; expected 4 or 8"),
    }
}

/// Fails when the corpus shares no tokens with the model's vocabulary.
fn check_vocabulary(words: &Vocab, docs: &[Document]) -> Result<()> {
    let (mut seen, mut known) = (0usize, 0usize);
    for t in docs.iter().flat_map(|d| &d.edus).flat_map(|e| &e.tokens) {
        seen += 1;
        known += usize::from(words.contains(t));
    }
    if seen > 0 && known == 0 {
        bail!("vocabulary mismatch: none of the corpus's {seen} tokens occur in the model vocabulary");
    }
    if seen > 0 && known * 2 < seen {
        warn!("only {known} of {seen} corpus tokens are in the model vocabulary");
    }
    Ok(())
}

fn parse_with<T: Scalar>(a: &ParseArgs) -> Result<()> {
    let model = Model::<T>::load(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let docs = corpus(&a.corpus)?;
    check_vocabulary(&model.encoder.words, &docs)?;
    let feats = features::<T>(a.features.as_deref(), &model.config)?;
    let mut trace = a.trace.as_deref().map(|p| output(Some(p))).transpose()?;
    let mut out = Vec::with_capacity(docs.len());
    for d in &docs {
        let r = parse_document(&model, d, feats.as_ref()).with_context(|| format!("document {}", d.doc_id))?;
        if let Some(w) = trace.as_mut() {
            writeln!(w, "# {}", d.doc_id)?;
            w.write_all(r.trace().as_bytes())?;
        }
        out.push(Document {
            gold: Some(r.tree),
            ..d.clone()
        });
    }
    if let Some(w) = trace.as_mut() {
        w.flush()?;
    }
    match &a.out {
        Some(p) => write_corpus(p, &out).with_context(|| format!("cannot write {}", p.display()))?,
        None => {
            let mut w = output(None)?;
            toprst::corpus::write_corpus_to(&mut w, &out)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Pairs every gold document with the prediction of the same id.
fn align<'a>(gold: &'a [Document], pred: &'a [Document]) -> Result<Vec<(&'a Document, &'a RstTree, &'a RstTree)>> {
    let by_id: HashMap<&str, &Document> = pred.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    ensure!(by_id.len() == pred.len(), "predicted corpus repeats a doc_id");
    ensure!(
        gold.len() == pred.len(),
        "gold has {} documents, predictions have {}",
        gold.len(),
        pred.len()
    );
    gold.iter()
        .map(|g| {
            let p = by_id.get(g.doc_id.as_str()).ok_or_else(|| anyhow!("no prediction for document {}", g.doc_id))?;
            ensure!(p.len() == g.len(), "document {}: gold has {} EDUs, prediction {}", g.doc_id, g.len(), p.len());
            let gt = g.gold.as_ref().ok_or_else(|| anyhow!("gold document {} has no tree", g.doc_id))?;
            let pt = p.gold.as_ref().ok_or_else(|| anyhow!("predicted document {} has no tree", p.doc_id))?;
            Ok((g, gt, pt))
        })
        .collect()
}

fn eval(a: EvalArgs) -> Result<()> {
    let gold = corpus(&a.gold)?;
    let pred = corpus(&a.pred)?;
    let pairs = align(&gold, &pred)?;
    let gs: Vec<&RstTree> = pairs.iter().map(|p| p.1).collect();
    let ps: Vec<&RstTree> = pairs.iter().map(|p| p.2).collect();
    let report = MetricReport::from_trees(&gs, &ps, a.metric, a.include_root)?;
    let mut w = output(None)?;
    writeln!(w, "{} Parseval over {} documents", a.metric, pairs.len())?;
    writeln!(w, "{report}")?;
    let mut js = json!({ "metric": a.metric, "documents": pairs.len(), "scores": report });
    if a.buckets {
        let items: Vec<_> = pairs.iter().map(|(d, g, p)| (d.len(), *g, *p)).collect();
        let rows = bucket_report(&items, a.metric, a.include_root)?;
        writeln!(w, "\n{}", render_buckets(&rows))?;
        js["buckets"] = serde_json::to_value(&rows)?;
    }
    if a.confusion {
        let ranking = match &a.train {
            Some(p) => corpus(p)?,
            None => gold.clone(),
        };
        let top = top_relations(&ranking, a.top);
        let tp: Vec<_> = pairs.iter().map(|(_, g, p)| (*g, *p)).collect();
        let c = confusion_matrices(&tp, &top)?;
        writeln!(w, "\nnuclearity\n{}", c.nuclearity)?;
        writeln!(w, "relation\n{}", c.relation)?;
        js["confusion"] = serde_json::to_value(&c)?;
    }
    w.flush()?;
    if let Some(p) = &a.json {
        std::fs::write(p, serde_json::to_string_pretty(&js)? + "\n").with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let docs = corpus(&a.corpus)?;
    let doc = docs
        .iter()
        .find(|d| d.doc_id == a.doc_id)
        .ok_or_else(|| UsageError(format!("no document with id {}", a.doc_id)))?;
    let tree = doc.gold.as_ref().ok_or_else(|| anyhow!("document {} has no tree", a.doc_id))?;
    let mut w = output(None)?;
    w.write_all(render_tree(doc, tree).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn check_grad(a: CheckGradArgs) -> Result<()> {
    let q = a.edus as usize;
    let docs = generate_synthetic(a.seed, 1, q, q)?;
    let doc = &docs[0];
    let mut mcfg = ModelConfig::default();
    let e = &mut mcfg.encoder;
    (e.word_dim, e.pos_dim, e.edu_type_dim, e.syntax_dim, e.rnn_hidden) = (4, 3, 2, 3, 3);
    e.use_syntax = a.use_syntax;
    mcfg.segmenter_hidden = 3;
    let labels = LabelSet::from_documents(&docs)?;
    let model = Model::<f64>::new(mcfg, Vocab::words(&docs), Vocab::pos_tags(&docs), labels, a.seed)?;
    let mut feats = FeatureTable::new(3);
    for e in &doc.edus {
        for t in 1..=e.tokens.len() {
            let v = (0..3).map(|k| ((e.index * 7 + t * 3 + k) % 11) as f64 / 11.0 - 0.5).collect();
            feats.insert(&doc.doc_id, e.index, t, v)?;
        }
    }
    let targets = build_static_targets(doc)?;
    let cfg = TrainConfig::default();
    let opts = GradCheckOptions {
        tolerance: a.tolerance,
        max_per_param: a.max_per_param.unwrap_or(usize::MAX),
        seed: a.seed,
        ..Default::default()
    };
    let mut store = model.store.clone();
    let report = finite_difference_check(
        &mut store,
        |store, g| {
            let graph = std::mem::take(g);
            let mut fwd = DocumentForward::with_store(&model, store, graph, &model.encoder, doc, Some(&feats))?;
            let nodes = document_loss(&mut fwd, &targets, &cfg, 1, targets.len())?;
            *g = fwd.into_graph();
            Ok(nodes.loss)
        },
        &opts,
    )?;
    print!("{report}");
    report.into_result()?;
    Ok(())
}
