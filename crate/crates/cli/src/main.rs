//! `hasoc`: preprocessing, hashtag segmentation, training, prediction,
//! evaluation and dataset statistics.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use hasoc_core::classifier::{self, Mode, TrainedModel};
use hasoc_core::corpus::{self, LabeledDataset, Task};
use hasoc_core::embedkit::BackendKind;
use hasoc_core::hashseg;
use hasoc_core::metrics;
use hasoc_core::textprep::{Language, Preprocessor, RawPost};

use config::{parse_lang_path, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "hasoc",
    version,
    about = "Multilingual hate-speech detection pipeline"
)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every subcommand. Each one overrides the config field
/// of the same name.
#[derive(Args, Debug)]
struct Shared {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (splits, shuffles, init, dropout, hash vectors)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Text embedding backend: hash or remote
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Base URL of the embedding service
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Remote encoder: xlmr, mbert or distilmbert
    #[arg(long, global = true)]
    model_id: Option<String>,
    /// 1a (HOF/NOT) or 1b (HATE/OFFN/PRFN/NONE)
    #[arg(long, global = true)]
    task: Option<Task>,
    /// mono or multi
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// en, hi or mr
    #[arg(long, global = true)]
    lang: Option<Language>,
    /// Text embedding dimension
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Per-request timeout of the remote backend
    #[arg(long, global = true)]
    timeout_ms: Option<u64>,
    /// Texts per remote embedding request
    #[arg(long, global = true)]
    max_batch: Option<usize>,
    /// On-disk embedding cache
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Dimension of hashed hashtag/emoji vectors when no table is given
    #[arg(long, global = true)]
    aux_dim: Option<usize>,
    /// Unigram counts for hashtag segmentation (word<TAB>count)
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Emoji descriptions (emoji<TAB>description)
    #[arg(long, global = true)]
    emoji_registry: Option<PathBuf>,
    /// Emoji vectors in word2vec text format
    #[arg(long, global = true)]
    emoji_table: Option<PathBuf>,
    /// Word vectors for hashtag segments and emoji descriptions
    #[arg(long, global = true)]
    word_table: Option<PathBuf>,
    /// Leave the hashtag block empty
    #[arg(long, global = true)]
    no_hashtags: bool,
    /// Leave the emoji vector block empty
    #[arg(long, global = true)]
    no_emoji_vectors: bool,
    /// Leave the emoji description block empty
    #[arg(long, global = true)]
    no_emoji_descriptions: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean a dataset and append tokens and extracted entities as columns
    Preprocess {
        /// Dataset CSV/TSV
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a hashtag into words
    Segment {
        /// Hashtag, with or without the leading #
        hashtag: String,
    },
    /// Train a classification head
    Train(TrainArgs),
    /// Label every post of a CSV file
    Predict {
        /// Trained model file
        #[arg(long)]
        model: PathBuf,
        /// CSV/TSV with a text column
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV with label and class probabilities
        #[arg(long)]
        out: PathBuf,
    },
    /// Score models on test sets and print the comparison grid
    Evaluate {
        /// Trained model file (repeatable)
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        /// Test set as <lang>=<path> (repeatable)
        #[arg(long, required = true, value_parser = parse_lang_path)]
        test: Vec<(Language, PathBuf)>,
        /// Also write the grid as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print class counts of a dataset
    Stats {
        /// Dataset CSV/TSV
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training set as <lang>=<path> (repeatable)
    #[arg(long, value_parser = parse_lang_path)]
    datasets: Vec<(Language, PathBuf)>,
    /// Model file to write
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch history JSON to write
    #[arg(long)]
    history: Option<PathBuf>,
    /// Hidden layer width [default: 256]
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Dropout probability [default: 0.2]
    #[arg(long)]
    dropout: Option<f64>,
    /// Adam learning rate [default: 0.0002]
    #[arg(long)]
    lr: Option<f64>,
    /// Minibatch size [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epoch limit [default: 50]
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 5]
    #[arg(long)]
    patience: Option<usize>,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "hash" => Ok(BackendKind::Hash),
        "remote" => Ok(BackendKind::Remote),
        other => Err(format!(
            "unknown backend `{other}` (expected hash or remote)"
        )),
    }
}

/// Usage and configuration problems exit with 2, everything else with 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

type CmdResult = Result<(), Failure>;

impl Shared {
    fn as_config(&self) -> RunConfig {
        let flag = |b: bool| b.then_some(true);
        RunConfig {
            seed: self.seed,
            task: self.task,
            mode: self.mode,
            lang: self.lang,
            backend: self.backend,
            endpoint: self.endpoint.clone(),
            model_id: self.model_id.clone(),
            dim: self.dim,
            timeout_ms: self.timeout_ms,
            max_batch: self.max_batch,
            cache: self.cache.clone(),
            aux_dim: self.aux_dim,
            lexicon: self.lexicon.clone(),
            emoji_registry: self.emoji_registry.clone(),
            emoji_table: self.emoji_table.clone(),
            word_table: self.word_table.clone(),
            no_hashtags: flag(self.no_hashtags),
            no_emoji_vectors: flag(self.no_emoji_vectors),
            no_emoji_descriptions: flag(self.no_emoji_descriptions),
            ..RunConfig::default()
        }
    }

    /// Config file (if any) with the flags laid over it.
    fn resolve(&self, extra: Option<&RunConfig>) -> Result<RunConfig, Failure> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p).usage()?,
            None => RunConfig::default(),
        };
        let mut cfg = base.overlay(&self.as_config());
        if let Some(e) = extra {
            cfg = cfg.overlay(e);
        }
        Ok(cfg)
    }
}

fn load(path: &Path, lang: Language) -> Result<LabeledDataset, Failure> {
    corpus::load_dataset(path, lang)
        .with_context(|| format!("loading {}", path.display()))
        .usage()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .usage()
}

fn cmd_preprocess(shared: &Shared, input: &Path, out: &Path) -> CmdResult {
    let cfg = shared.resolve(None)?;
    let lang = cfg.lang.unwrap_or(Language::En);
    let data = load(input, lang)?;
    let pre = Preprocessor::default();
    let mut w = csv::Writer::from_writer(create(out)?);
    let mut header: Vec<&str> = corpus::CSV_HEADER.to_vec();
    header.extend([
        "tokens", "hashtags", "mentions", "urls", "emojis", "smileys", "reserved", "numbers",
    ]);
    w.write_record(&header).context("writing output")?;
    for row in &data.rows {
        let p = pre.process(&RawPost {
            text: row.text.clone(),
            language: row.language,
        });
        let e = &p.clean.entities;
        let mut record: Vec<String> = vec![
            row.hasoc_id.clone(),
            row.tweet_id.clone(),
            row.text.clone(),
            row.task_1.as_str().to_string(),
            row.task_2.map_or(String::new(), |t| t.as_str().to_string()),
            p.tokens.join(" "),
        ];
        for list in [
            &e.hashtags,
            &e.mentions,
            &e.urls,
            &e.emojis,
            &e.smileys,
            &e.reserved,
            &e.numbers,
        ] {
            record.push(list.join(" "));
        }
        w.write_record(&record).context("writing output")?;
    }
    w.flush().context("writing output")?;
    eprintln!("preprocessed {} rows into {}", data.len(), out.display());
    Ok(())
}

fn cmd_segment(shared: &Shared, hashtag: &str) -> CmdResult {
    let cfg = shared.resolve(None)?;
    let lexicon = cfg.lexicon().usage()?;
    let seg = hashseg::segment(hashtag.trim_start_matches('#'), &lexicon);
    println!("{}", seg.joined());
    Ok(())
}

fn cmd_train(shared: &Shared, args: &TrainArgs) -> CmdResult {
    let extra = RunConfig {
        datasets: args.datasets.iter().cloned().collect(),
        out: args.out.clone(),
        history: args.history.clone(),
        hidden_dim: args.hidden_dim,
        dropout: args.dropout,
        lr: args.lr,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        patience: args.patience,
        ..RunConfig::default()
    };
    let cfg = shared.resolve(Some(&extra))?;
    let head = cfg.head_config();
    head.validate().usage()?;
    let sets = cfg.training_sets().usage()?;
    let datasets = sets
        .iter()
        .map(|(l, p)| load(p, *l))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = cfg.backend_spec(None).usage()?;
    let featurizer = cfg.featurizer(spec, None, cfg.seed()).usage()?;
    let mode = cfg.mode.unwrap_or(Mode::Mono);

    let model = classifier::train(&datasets, mode, &head, &featurizer).map_err(|e| match e {
        classifier::ClassifierError::UnsupportedLanguage(_)
        | classifier::ClassifierError::ModeMismatch(_) => Failure::Usage(e.into()),
        other => Failure::Runtime(other.into()),
    })?;
    featurizer.flush_cache_quietly();

    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("model.json"));
    model.save(&out).map_err(anyhow::Error::from)?;
    let history = cfg
        .history
        .clone()
        .unwrap_or_else(|| out.with_extension("history.json"));
    fs::write(
        &history,
        serde_json::to_string_pretty(&model.history).context("serializing history")? + "\n",
    )
    .with_context(|| format!("writing {}", history.display()))?;
    let best = &model.history[model.best_epoch];
    println!(
        "trained {} {} model on {} rows: best epoch {} val macro-F1 {:.4} train macro-F1 {:.4}",
        mode,
        head.task,
        datasets.iter().map(LabeledDataset::len).sum::<usize>(),
        model.best_epoch,
        best.val_macro_f1,
        best.train_macro_f1
    );
    println!("model: {}", out.display());
    println!("history: {}", history.display());
    Ok(())
}

trait FlushQuietly {
    fn flush_cache_quietly(&self);
}

impl FlushQuietly for classifier::Featurizer {
    fn flush_cache_quietly(&self) {
        if let Err(e) = self.embedder.flush_cache() {
            log::warn!("could not write embedding cache: {e}");
        }
    }
}

fn model_featurizer(
    cfg: &RunConfig,
    model: &TrainedModel,
) -> Result<classifier::Featurizer, Failure> {
    let spec = cfg.backend_spec(Some(&model.backend)).usage()?;
    cfg.featurizer(spec, Some(model.features.aux_dim), model.config.seed)
        .usage()
}

fn load_model(path: &Path) -> Result<TrainedModel, Failure> {
    TrainedModel::load(path).usage()
}

fn cmd_predict(shared: &Shared, model_path: &Path, input: &Path, out: &Path) -> CmdResult {
    let cfg = shared.resolve(None)?;
    let model = load_model(model_path)?;
    let lang = match (cfg.lang, model.languages.as_slice()) {
        (Some(l), _) => l,
        (None, [only]) => *only,
        (None, _) => {
            return Err(Failure::Usage(anyhow!(
                "model covers several languages; pass --lang"
            )))
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(if first_line(input).usage()?.contains('\t') {
            b'\t'
        } else {
            b','
        })
        .from_path(input)
        .with_context(|| format!("reading {}", input.display()))
        .usage()?;
    let headers = reader.headers().context("reading header").usage()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let text_col = col("text")
        .ok_or_else(|| Failure::Usage(anyhow!("{} has no text column", input.display())))?;
    let id_col = col("hasoc_id").or_else(|| col("_id"));
    let mut ids = Vec::new();
    let mut posts = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec
            .with_context(|| format!("{} row {}", input.display(), i + 1))
            .usage()?;
        ids.push(
            id_col
                .and_then(|c| rec.get(c))
                .map_or_else(|| (i + 1).to_string(), str::to_string),
        );
        posts.push(RawPost {
            text: rec.get(text_col).unwrap_or("").to_string(),
            language: lang,
        });
    }
    let featurizer = model_featurizer(&cfg, &model)?;
    let preds = classifier::predict_batch(&model, &posts, &featurizer).map_err(|e| match e {
        classifier::ClassifierError::BackendMismatch { .. } => Failure::Usage(e.into()),
        other => Failure::Runtime(other.into()),
    })?;
    featurizer.flush_cache_quietly();

    let mut w = csv::Writer::from_writer(create(out)?);
    let mut header = vec!["hasoc_id".to_string(), "label".to_string()];
    header.extend(model.labels.iter().map(|l| format!("p_{l}")));
    w.write_record(&header).context("writing output")?;
    for (id, p) in ids.iter().zip(&preds) {
        let mut rec = vec![id.clone(), p.label.clone()];
        rec.extend(p.probabilities.iter().map(|x| format!("{x:.6}")));
        w.write_record(&rec).context("writing output")?;
    }
    w.flush().context("writing output")?;
    eprintln!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

fn first_line(path: &Path) -> anyhow::Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().next().unwrap_or("").to_string())
}

fn cmd_evaluate(
    shared: &Shared,
    models: &[PathBuf],
    tests: &[(Language, PathBuf)],
    csv_out: Option<&Path>,
) -> CmdResult {
    let cfg = shared.resolve(None)?;
    let test_sets = tests
        .iter()
        .map(|(l, p)| Ok((*l, load(p, *l)?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let mut reports = Vec::new();
    for path in models {
        let model = load_model(path)?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        let featurizer = model_featurizer(&cfg, &model)?;
        for (lang, data) in &test_sets {
            if !model.languages.contains(lang) {
                log::info!("skipping {name} on {lang}: not trained on that language");
                continue;
            }
            if model.task() == Task::Task1B && *lang == Language::Mr {
                continue;
            }
            let report =
                classifier::evaluate(&model, data, &featurizer, &name).map_err(|e| match e {
                    classifier::ClassifierError::BackendMismatch { .. }
                    | classifier::ClassifierError::LabelOutsideVocabulary { .. } => {
                        Failure::Usage(e.into())
                    }
                    other => Failure::Runtime(other.into()),
                })?;
            reports.push(report);
        }
        featurizer.flush_cache_quietly();
    }
    if reports.is_empty() {
        return Err(Failure::Usage(anyhow!(
            "no model was trained on any of the given test languages"
        )));
    }
    let grid = metrics::report(&reports);
    print!("{}", grid.to_text());
    if let Some(p) = csv_out {
        fs::write(p, grid.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_stats(shared: &Shared, input: &Path) -> CmdResult {
    let cfg = shared.resolve(None)?;
    let data = load(input, cfg.lang.unwrap_or(Language::En))?;
    let stats = corpus::class_stats(&data);
    let mut out = io::stdout().lock();
    writeln!(out, "{stats}").context("writing stats")?;
    if data.provenance.duplicate_tweet_ids > 0 {
        writeln!(
            out,
            "duplicate tweet ids: {}",
            data.provenance.duplicate_tweet_ids
        )
        .context("writing stats")?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    let s = &cli.shared;
    match &cli.command {
        Command::Preprocess { input, out } => cmd_preprocess(s, input, out),
        Command::Segment { hashtag } => cmd_segment(s, hashtag),
        Command::Train(args) => cmd_train(s, args),
        Command::Predict { model, input, out } => cmd_predict(s, model, input, out),
        Command::Evaluate { model, test, csv } => cmd_evaluate(s, model, test, csv.as_deref()),
        Command::Stats { input } => cmd_stats(s, input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
