use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use aspect_rec::aspect::{score_documents, train, AspectModel, ModelKind, ObservationSet, SnapshotMeta, TrainConfig};
use aspect_rec::corpus::{
    ingest_access_log, parse_access_log, parse_timestamp, temporal_split, Corpus, DenseSelection,
    DEFAULT_TRUNCATION_BYTES,
};
use aspect_rec::eval::{evaluate, fit_linear_trend, rank_documents, EvalProtocol, DEFAULT_HALF_LIFE};
use aspect_rec::knn::KnnRecommender;
use aspect_rec::smoothing::{density_sweep, smooth, Aggregation};
use aspect_rec::synth::{generate, generate_test, overfit_experiment, ContentSpec, OverfitConfig, SyntheticSpec};
use aspect_rec::textproc::{read_stopwords, tfidf_vectors};

#[derive(Parser)]
#[command(name = "aspect-rec", version, about = "Aspect-model document recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus snapshot from an access log and a directory of document texts.
    Ingest(IngestArgs),
    /// Fit an aspect model and write its snapshot and per-iteration trace.
    Train(TrainArgs),
    /// Write a corpus whose access matrix is similarity-smoothed.
    Smooth(SmoothArgs),
    /// Density of the smoothed access matrix across similarity thresholds.
    Density(DensityArgs),
    /// Ranked recommendations for one user.
    Recommend(RecommendArgs),
    /// Rank-score a model or the k-NN baseline against a test corpus.
    Evaluate(EvaluateArgs),
    /// Rank score as a function of k (k-NN), the smoothing threshold, or K.
    Sweep(SweepArgs),
    /// Mean overfitting iteration against density on synthetic block data.
    Synth(SynthArgs),
    /// Write a synthetic block-structured corpus (and optionally a test corpus).
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    MeanAll,
    MeanAboveThreshold,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::MeanAll => Aggregation::MeanAll,
            AggregationArg::MeanAboveThreshold => Aggregation::MeanAboveThreshold,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    #[value(name = "two_way")]
    TwoWay,
    #[value(name = "three_way")]
    ThreeWay,
    #[value(name = "user_words")]
    UserWords,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::TwoWay => ModelKind::TwoWay,
            KindArg::ThreeWay => ModelKind::ThreeWay,
            KindArg::UserWords => ModelKind::UserWords,
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Tab-separated `user doc timestamp` access log.
    #[arg(long)]
    log: PathBuf,
    /// Directory of document texts, one file per document named by its id
    /// (an extension such as `.txt` is stripped).
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_BYTES)]
    truncation_bytes: usize,
    /// File with one stopword per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Keep only this many of the most active users.
    #[arg(long, requires = "subset_docs")]
    subset_users: Option<usize>,
    /// Keep only this many of the documents most read by the kept users.
    #[arg(long, requires = "subset_users")]
    subset_docs: Option<usize>,
    /// Split events at this time: earlier ones go to `--output`, the rest to
    /// `--test-output`.
    #[arg(long, requires = "test_output")]
    cutoff: Option<String>,
    #[arg(long, requires = "cutoff")]
    test_output: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long, value_enum, default_value = "two_way")]
    kind: KindArg,
    /// Number of latent classes.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Use tempered EM.
    #[arg(long)]
    tempered: bool,
    #[arg(long, default_value_t = 0.9)]
    eta: f64,
    #[arg(long, default_value_t = 0.6)]
    beta_floor: f64,
    /// Fraction of observation weight held out for validation.
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    min_ll_gain: f64,
}

impl TrainFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            k: self.k,
            max_iters: self.max_iters,
            restarts: self.restarts,
            seed: self.seed,
            tempered: self.tempered,
            eta: self.eta,
            beta_floor: self.beta_floor,
            holdout_fraction: self.holdout,
            min_ll_gain: self.min_ll_gain,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output model snapshot.
    #[arg(long)]
    model: PathBuf,
    /// Trace output; defaults to the model path with `.trace.tsv` appended.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Smooth the access matrix at this similarity threshold before training.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum, default_value = "mean-all")]
    aggregation: AggregationArg,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "mean-all")]
    aggregation: AggregationArg,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated ascending thresholds.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    thresholds: Vec<f64>,
    #[arg(long, value_enum, default_value = "mean-all")]
    aggregation: AggregationArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    /// Leave out documents the user already accessed.
    #[arg(long, value_enum, default_value = "on")]
    exclude_train: Switch,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Training corpus (unsmoothed).
    #[arg(long)]
    corpus: PathBuf,
    /// Test corpus with the same users and documents.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, conflicts_with = "knn", required_unless_present = "knn")]
    model: Option<PathBuf>,
    /// Evaluate the k-NN baseline with this many neighbours.
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_HALF_LIFE)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "on")]
    exclude_train: Switch,
    /// Per-user report.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    #[value(name = "k_nn")]
    KNn,
    #[value(name = "threshold")]
    Threshold,
    #[value(name = "K")]
    K,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum)]
    axis: Axis,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Model kind for the K axis (the threshold axis always smooths a two-way model).
    #[arg(long, value_enum, default_value = "user_words")]
    kind: KindArg,
    /// Latent classes for the threshold axis.
    #[arg(long, default_value_t = 25)]
    k: usize,
    /// Restarts per point; defaults to 2 on the K axis and 5 on the threshold axis.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tempered: bool,
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, value_enum, default_value = "mean-all")]
    aggregation: AggregationArg,
    #[arg(long, default_value_t = DEFAULT_HALF_LIFE)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "on")]
    exclude_train: Switch,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct GroupFlags {
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long, default_value_t = 50)]
    users_per_group: usize,
    #[arg(long, default_value_t = 300)]
    docs_per_group: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.015,0.02,0.025,0.03,0.035,0.04")]
    densities: Vec<f64>,
    /// Random restarts per density; 50 matches the original experiment, 10 is a quick run.
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    groups: GroupFlags,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    groups: GroupFlags,
    /// Words per group vocabulary block; 0 generates no text.
    #[arg(long, default_value_t = 50)]
    vocab_per_group: usize,
    #[arg(long, default_value_t = 40)]
    tokens_per_doc: usize,
    #[arg(long)]
    output: PathBuf,
    /// Also write an independently drawn test corpus of the same density.
    #[arg(long)]
    test_output: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Density(a) => cmd_density(a),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes to `path`, or standard output when absent.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::read_snapshot(open(path)?).with_context(|| format!("reading corpus {}", path.display()))
}

fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    corpus
        .write_snapshot(create(path)?)
        .with_context(|| format!("writing corpus {}", path.display()))
}

fn load_model(path: &Path) -> Result<(AspectModel, SnapshotMeta)> {
    AspectModel::read_snapshot(open(path)?).with_context(|| format!("reading model {}", path.display()))
}

/// Document texts keyed by file stem, in file-name order.
fn read_document_dir(dir: &Path) -> Result<Vec<(String, String)>> {
    ensure!(dir.is_dir(), "document directory {} does not exist", dir.display());
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .with_context(|| format!("non-UTF-8 file name {}", p.display()))?
                .to_string();
            let bytes = fs::read(&p).with_context(|| format!("cannot read {}", p.display()))?;
            Ok((id, String::from_utf8_lossy(&bytes).into_owned()))
        })
        .collect()
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let texts = a.docs.as_deref().map(read_document_dir).transpose()?;
    let stopwords: Option<HashSet<String>> = a
        .stopwords
        .as_deref()
        .map(|p| read_stopwords(open(p)?).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let log = parse_access_log(open(&a.log)?).with_context(|| format!("reading {}", a.log.display()))?;
    for r in &log.rejected {
        eprintln!("{}:{}: skipped: {}", a.log.display(), r.line, r.reason);
    }

    let (mut train, mut test) = match &a.cutoff {
        Some(c) => {
            let cutoff = parse_timestamp(c).with_context(|| format!("invalid cutoff {c:?}"))?;
            let split = temporal_split(&log.events, cutoff);
            (split.train, Some(split.test))
        }
        None => (ingest_access_log(&log.events), None),
    };

    if let Some(texts) = &texts {
        let known: HashSet<&str> = train.documents.iter().map(String::as_str).collect();
        let relevant: Vec<(&str, &str)> = texts
            .iter()
            .filter(|(id, _)| known.contains(id.as_str()))
            .map(|(id, t)| (id.as_str(), t.as_str()))
            .collect();
        let ignored = texts.len() - relevant.len();
        if ignored > 0 {
            eprintln!("ignored {ignored} document files with no accesses");
        }
        train.ingest_documents(relevant, a.truncation_bytes, stopwords.as_ref())?;
        if let Some(t) = test.as_mut() {
            t.vocabulary = train.vocabulary.clone();
            t.doc_word = train.doc_word.clone();
        }
    }

    if let (Some(nu), Some(nd)) = (a.subset_users, a.subset_docs) {
        let selection = DenseSelection::compute(&train.user_doc, nu, nd)?;
        train = train.restrict(&selection);
        test = test.map(|t| t.restrict(&selection));
    }

    save_corpus(&train, &a.output)?;
    if let (Some(t), Some(p)) = (&test, &a.test_output) {
        save_corpus(t, p)?;
    }
    eprintln!(
        "{} users, {} documents, {} words, density {:.6}",
        train.n_users(),
        train.n_documents(),
        train.n_words(),
        train.user_doc.density()
    );
    Ok(())
}

fn smoothed(corpus: &Corpus, threshold: f64, aggregation: Aggregation) -> Result<Corpus> {
    ensure!(
        corpus.n_words() > 0,
        "smoothing needs document text, but the corpus vocabulary is empty"
    );
    let vectors = tfidf_vectors(&corpus.doc_word);
    Ok(corpus.with_user_doc(smooth(&corpus.user_doc, &vectors, threshold, aggregation)?)?)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut corpus = load_corpus(&a.corpus)?;
    if let Some(t) = a.threshold {
        corpus = smoothed(&corpus, t, a.aggregation.into())?;
    }
    let kind: ModelKind = a.flags.kind.into();
    let config = a.flags.config();
    let obs = ObservationSet::for_kind(kind, &corpus.user_doc, &corpus.doc_word)?;
    let outcome = train(kind, &obs, &config)?;
    let meta = SnapshotMeta {
        seed: config.seed,
        config_digest: config.digest(),
    };
    let mut out = create(&a.model)?;
    outcome.model.write_snapshot(&mut out, &meta)?;
    let trace_path = a.trace.unwrap_or_else(|| {
        let mut p = a.model.clone().into_os_string();
        p.push(".trace.tsv");
        p.into()
    });
    let mut trace_out = create(&trace_path)?;
    outcome.trace.write_tsv(&mut trace_out)?;
    trace_out.flush()?;
    let t = &outcome.trace;
    eprintln!(
        "restart {} selected: best iteration {}, validation log-likelihood {}, overfit at {}",
        t.restart,
        t.best_iteration,
        t.best_valid_ll(),
        t.overfit_iteration.map_or("never".into(), |i| i.to_string())
    );
    Ok(())
}

fn cmd_smooth(a: SmoothArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let out = smoothed(&corpus, a.threshold, a.aggregation.into())?;
    eprintln!(
        "density {:.6} -> {:.6}",
        corpus.user_doc.density(),
        out.user_doc.density()
    );
    save_corpus(&out, &a.output)
}

fn cmd_density(a: DensityArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let vectors = tfidf_vectors(&corpus.doc_word);
    let table = density_sweep(&corpus.user_doc, &vectors, &a.thresholds, a.aggregation.into())?;
    let mut out = output(a.output.as_deref())?;
    writeln!(out, "# threshold\tdensity")?;
    for (t, d) in table {
        writeln!(out, "{t}\t{d}")?;
    }
    out.flush()?;
    Ok(())
}

fn check_model_fits(model: &AspectModel, corpus: &Corpus) -> Result<()> {
    let dims = model.dims();
    ensure!(
        dims.users == corpus.n_users(),
        "model has {} users, corpus has {}",
        dims.users,
        corpus.n_users()
    );
    if model.kind().has_documents() {
        ensure!(
            dims.docs == corpus.n_documents(),
            "model has {} documents, corpus has {}",
            dims.docs,
            corpus.n_documents()
        );
    }
    if model.kind() == ModelKind::UserWords {
        ensure!(
            dims.words == corpus.n_words(),
            "model has {} words, corpus has {}",
            dims.words,
            corpus.n_words()
        );
    }
    Ok(())
}

fn model_scorer<'a>(
    model: &'a AspectModel,
    corpus: &'a Corpus,
) -> impl Fn(usize) -> aspect_rec::Result<Vec<f64>> + Sync + 'a {
    move |u| Ok(score_documents(model, u, Some(&corpus.doc_word), None)?.scores)
}

fn cmd_recommend(a: RecommendArgs) -> Result<()> {
    let (model, _) = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    check_model_fits(&model, &corpus)?;
    let u = corpus.user_index(&a.user)?;
    let scores = model_scorer(&model, &corpus)(u)?;
    let exclude: &[usize] = match a.exclude_train {
        Switch::On => corpus.user_doc.row(u).0,
        Switch::Off => &[],
    };
    let mut out = output(None)?;
    for (rank, d) in rank_documents(&scores, exclude).into_iter().take(a.top_n).enumerate() {
        writeln!(out, "{}\t{}\t{:e}", rank + 1, corpus.documents[d], scores[d])?;
    }
    out.flush()?;
    Ok(())
}

fn load_pair(train: &Path, test: &Path) -> Result<(Corpus, Corpus)> {
    let train_c = load_corpus(train)?;
    let test_c = load_corpus(test)?;
    ensure!(
        train_c.users == test_c.users && train_c.documents == test_c.documents,
        "{} and {} do not share users and documents",
        train.display(),
        test.display()
    );
    Ok((train_c, test_c))
}

fn protocol(alpha: f64, exclude: Switch) -> EvalProtocol {
    EvalProtocol {
        alpha,
        exclude_train: matches!(exclude, Switch::On),
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let (train_c, test_c) = load_pair(&a.corpus, &a.test)?;
    let proto = protocol(a.alpha, a.exclude_train);
    let report = match (&a.model, a.knn) {
        (Some(path), _) => {
            let (model, _) = load_model(path)?;
            check_model_fits(&model, &train_c)?;
            evaluate(&train_c.user_doc, &test_c.user_doc, &proto, model_scorer(&model, &train_c))?
        }
        (None, Some(k)) => {
            let knn = KnnRecommender::new(&train_c.user_doc);
            evaluate(&train_c.user_doc, &test_c.user_doc, &proto, |u| knn.score_user(u, k))?
        }
        (None, None) => bail!("give --model or --knn"),
    };
    if let Some(p) = &a.output {
        let mut out = create(p)?;
        report.write_tsv(&mut out, &train_c.users)?;
        out.flush()?;
    }
    println!("R\t{}", report.r);
    Ok(())
}

/// `from, from + step, …` up to `to` inclusive.
fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    ensure!(step > 0.0, "step must be positive");
    ensure!(to >= from, "range end {to} is below its start {from}");
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

fn as_count(x: f64) -> Result<usize> {
    ensure!(x >= 1.0 && x.fract() == 0.0, "{x} is not a positive integer");
    Ok(x as usize)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let (train_c, test_c) = load_pair(&a.corpus, &a.test)?;
    let proto = protocol(a.alpha, a.exclude_train);
    let (from, to, step) = match a.axis {
        Axis::KNn => (10.0, 60.0, 5.0),
        Axis::K => (10.0, 60.0, 10.0),
        Axis::Threshold => (0.1, 0.9, 0.1),
    };
    let xs = grid(a.from.unwrap_or(from), a.to.unwrap_or(to), a.step.unwrap_or(step))?;
    let config = |k: usize, restarts: usize| TrainConfig {
        k,
        restarts,
        seed: a.seed,
        tempered: a.tempered,
        holdout_fraction: a.holdout,
        max_iters: a.max_iters,
        ..TrainConfig::default()
    };
    let fit_and_score = |kind: ModelKind, corpus: &Corpus, config: &TrainConfig| -> Result<f64> {
        let obs = ObservationSet::for_kind(kind, &corpus.user_doc, &corpus.doc_word)?;
        let model = train(kind, &obs, config)?.model;
        let report = evaluate(&train_c.user_doc, &test_c.user_doc, &proto, model_scorer(&model, &train_c))?;
        Ok(report.r)
    };

    let mut table = Vec::with_capacity(xs.len());
    match a.axis {
        Axis::KNn => {
            let knn = KnnRecommender::new(&train_c.user_doc);
            for &x in &xs {
                let k = as_count(x)?;
                let r = evaluate(&train_c.user_doc, &test_c.user_doc, &proto, |u| knn.score_user(u, k))?.r;
                table.push((x, r));
            }
        }
        Axis::K => {
            let restarts = a.restarts.unwrap_or(2);
            for &x in &xs {
                let r = fit_and_score(a.kind.into(), &train_c, &config(as_count(x)?, restarts))?;
                table.push((x, r));
            }
        }
        Axis::Threshold => {
            let restarts = a.restarts.unwrap_or(5);
            for &t in &xs {
                let smoothed_c = smoothed(&train_c, t, a.aggregation.into())?;
                let r = fit_and_score(ModelKind::TwoWay, &smoothed_c, &config(a.k, restarts))?;
                table.push((t, r));
            }
        }
    }

    let label = match a.axis {
        Axis::KNn => "k_nn",
        Axis::Threshold => "threshold",
        Axis::K => "K",
    };
    let mut out = output(a.output.as_deref())?;
    writeln!(out, "# {label}\tR")?;
    for (x, r) in &table {
        writeln!(out, "{x}\t{r}")?;
    }
    if a.axis == Axis::Threshold && table.len() >= 3 {
        let fit = fit_linear_trend(&table)?;
        writeln!(out, "# slope\t{}", fit.slope)?;
        writeln!(out, "# intercept\t{}", fit.intercept)?;
        writeln!(out, "# slope_p_value\t{}", fit.slope_p_value)?;
    }
    out.flush()?;
    Ok(())
}

fn block_spec(g: &GroupFlags, density: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec::blocks(g.groups, g.users_per_group, g.docs_per_group, density, seed)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let config = OverfitConfig {
        k: a.k,
        restarts: a.restarts,
        max_iters: a.max_iters,
        ..OverfitConfig::default()
    };
    let points = overfit_experiment(&block_spec(&a.groups, 0.0, a.seed), &a.densities, &config)?;
    let mut out = output(a.output.as_deref())?;
    for p in points {
        writeln!(out, "{} {}", p.density, p.mean_overfit_iteration)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut spec = block_spec(&a.groups, a.density, a.seed);
    if a.vocab_per_group > 0 {
        spec = spec.with_content(ContentSpec {
            vocab_per_group: a.vocab_per_group,
            tokens_per_doc: a.tokens_per_doc,
        });
    }
    let data = generate(&spec)?;
    save_corpus(&data.corpus, &a.output)?;
    if let Some(p) = &a.test_output {
        let test = data.corpus.with_user_doc(generate_test(&spec)?)?;
        save_corpus(&test, p)?;
    }
    Ok(())
}
