//! Feature fusion, the MLP head and its training loop.

mod features;
mod head;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorpusError, DatasetLanguage, LabeledDataset, Row, Task};
use crate::embedkit::{EmbedError, EmbeddingBackendSpec};
use crate::metrics::{self, EvalReport};
use crate::textprep::{Language, RawPost};

pub use features::{
    fuse, AuxVectors, FeatureFlags, FeatureSpec, Featurizer, FusedLayout, FusedVector, Segment,
    MASK_BITS,
};
pub use head::{
    adam_update, argmax, batch_gradients, batch_loss, forward, gradient_check, loss, predict_probs,
    softmax, train_step, AdamState, DropoutMask, Gradients, HeadConfig, HeadParams, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPSILON, MIN_PROB,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Share of the training data held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training rows")]
    EmptyDataset,
    #[error("row {row}: label {label} is outside the task vocabulary")]
    LabelOutsideVocabulary { row: usize, label: String },
    #[error("task 1b has no labels for {0} data")]
    UnsupportedLanguage(Language),
    #[error("mono mode takes exactly one dataset, got {0}")]
    ModeMismatch(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("non-finite activation")]
    NonFiniteActivation,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("model was trained with features {model:?}, featurizer provides {featurizer:?}")]
    BackendMismatch { model: String, featurizer: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("model file {path}: {reason}")]
    ModelFile { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mono,
    Multi,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Mono => "mono",
            Mode::Multi => "multi",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mono" | "monolingual" => Ok(Mode::Mono),
            "multi" | "multilingual" => Ok(Mode::Multi),
            other => Err(format!("unknown mode `{other}` (expected mono or multi)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
    pub train_macro_f1: f64,
    /// Optimizer steps taken so far.
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub mode: Mode,
    pub languages: Vec<Language>,
    pub labels: Vec<String>,
    pub config: HeadConfig,
    pub backend: EmbeddingBackendSpec,
    pub features: FeatureSpec,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub params: HeadParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub probabilities: Vec<f64>,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => return Err(format!("unsupported model version {v}")),
            None => return Err("missing version field".into()),
        }
        let model: TrainedModel = serde_json::from_value(value).map_err(|e| e.to_string())?;
        if model.labels != model.config.task.labels() {
            return Err("label vocabulary does not match the task".into());
        }
        if !model.params.is_finite() {
            return Err("non-finite parameters".into());
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| ClassifierError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let path = path.as_ref();
        let err = |reason: String| ClassifierError::ModelFile {
            path: path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_json(&text).map_err(err)
    }

    pub fn task(&self) -> Task {
        self.config.task
    }
}

fn gold_indices(
    rows: &[Row],
    task: Task,
    labels: &[String],
) -> Result<Vec<usize>, ClassifierError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let label = task.label_of(r).unwrap_or("<missing>");
            labels.iter().position(|l| l == label).ok_or_else(|| {
                ClassifierError::LabelOutsideVocabulary {
                    row: i + 1,
                    label: label.to_string(),
                }
            })
        })
        .collect()
}

/// Eval-mode loss and macro-F1 over a featurized set.
fn score(
    params: &HeadParams,
    xs: &[FusedVector],
    golds: &[usize],
    labels: &[String],
) -> Result<(f64, f64), ClassifierError> {
    if xs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut total = 0.0;
    let mut preds = Vec::with_capacity(xs.len());
    for (x, g) in xs.iter().zip(golds) {
        let p = predict_probs(params, &x.values)?;
        total += loss(&p, *g);
        preds.push(argmax(&p));
    }
    let name = |i: &usize| labels[*i].as_str();
    let g: Vec<&str> = golds.iter().map(name).collect();
    let p: Vec<&str> = preds.iter().map(name).collect();
    let m = metrics::confusion(&g, &p, labels).expect("indices are in range");
    Ok((total / xs.len() as f64, metrics::macro_f1(&m)))
}

fn check_task(datasets: &[LabeledDataset], task: Task) -> Result<(), ClassifierError> {
    if task != Task::Task1B {
        return Ok(());
    }
    for d in datasets {
        if let DatasetLanguage::Single(Language::Mr) = d.language {
            return Err(ClassifierError::UnsupportedLanguage(Language::Mr));
        }
        if let Some(r) = d.rows.iter().find(|r| r.language == Language::Mr) {
            return Err(ClassifierError::UnsupportedLanguage(r.language));
        }
    }
    Ok(())
}

/// Trains a head on frozen features.
///
/// MONO takes one dataset; MULTI concatenates all of them and shuffles with
/// the config seed. A stratified tenth is held out; each epoch visits the
/// rest in a fresh shuffled order. The parameters of the epoch with the best
/// validation macro-F1 (lower validation loss breaks ties) are kept, and
/// training stops after `patience` epochs without improvement.
pub fn train(
    datasets: &[LabeledDataset],
    mode: Mode,
    config: &HeadConfig,
    featurizer: &Featurizer,
) -> Result<TrainedModel, ClassifierError> {
    config.validate()?;
    match (mode, datasets.len()) {
        (Mode::Mono, 1) => {}
        (Mode::Mono, n) => return Err(ClassifierError::ModeMismatch(n)),
        (Mode::Multi, 0) => return Err(ClassifierError::EmptyDataset),
        (Mode::Multi, _) => {}
    }
    check_task(datasets, config.task)?;
    let mut data = corpus::combine(datasets);
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if mode == Mode::Multi {
        data.rows
            .shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    }
    let task = config.task;
    let labels = task.labels();
    gold_indices(&data.rows, task, &labels)?;

    let split = corpus::split(&data, task, VALIDATION_FRACTION, config.seed)?;
    let train_x = featurizer.featurize_rows(&split.train.rows)?;
    let train_y = gold_indices(&split.train.rows, task, &labels)?;
    let (val_x, val_y) = if split.val.is_empty() {
        (train_x.clone(), train_y.clone())
    } else {
        (
            featurizer.featurize_rows(&split.val.rows)?,
            gold_indices(&split.val.rows, task, &labels)?,
        )
    };

    let input_dim = featurizer.input_dim();
    let mut params = HeadParams::init(input_dim, config.hidden_dim, labels.len(), config.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, HeadParams)> = None;
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
            dropout_rng.set_stream(((epoch as u64) << 32) | b as u64);
            let batch: Vec<(&[f64], usize)> = chunk
                .iter()
                .map(|&i| (train_x[i].values.as_slice(), train_y[i]))
                .collect();
            loss_sum +=
                train_step(&mut params, &batch, config, &mut dropout_rng)? * chunk.len() as f64;
        }
        let (_, train_f1) = score(&params, &train_x, &train_y, &labels)?;
        let (val_loss, val_f1) = score(&params, &val_x, &val_y, &labels)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_x.len() as f64,
            val_loss,
            val_macro_f1: val_f1,
            train_macro_f1: train_f1,
            steps: params.adam.step,
        });
        log::info!(
            "epoch {epoch}: loss {:.4} val macro-F1 {val_f1:.4}",
            loss_sum / train_x.len() as f64
        );

        let improved = match &best {
            None => true,
            Some((f1, l, _, _)) => val_f1 > *f1 || (val_f1 == *f1 && val_loss < *l),
        };
        if improved {
            best = Some((val_f1, val_loss, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, _, best_epoch, params) = best.expect("at least one epoch runs");
    let languages = match data.language {
        DatasetLanguage::Single(l) => vec![l],
        DatasetLanguage::Multi => {
            let mut ls: Vec<Language> = data.rows.iter().map(|r| r.language).collect();
            ls.sort();
            ls.dedup();
            ls
        }
    };
    Ok(TrainedModel {
        version: MODEL_FORMAT_VERSION,
        mode,
        languages,
        labels,
        config: config.clone(),
        backend: featurizer.embedder.spec().clone(),
        features: featurizer.spec(),
        best_epoch,
        history,
        params,
    })
}

fn check_featurizer(model: &TrainedModel, featurizer: &Featurizer) -> Result<(), ClassifierError> {
    let spec = featurizer.spec();
    if spec != model.features {
        return Err(ClassifierError::BackendMismatch {
            model: format!("{:?}", model.features),
            featurizer: format!("{spec:?}"),
        });
    }
    Ok(())
}

fn predict_fused(
    model: &TrainedModel,
    xs: &[FusedVector],
) -> Result<Vec<Prediction>, ClassifierError> {
    xs.iter()
        .map(|x| {
            let probabilities = predict_probs(&model.params, &x.values)?;
            Ok(Prediction {
                label: model.labels[argmax(&probabilities)].clone(),
                probabilities,
            })
        })
        .collect()
}

pub fn predict(
    model: &TrainedModel,
    post: &RawPost,
    featurizer: &Featurizer,
) -> Result<Prediction, ClassifierError> {
    Ok(predict_batch(model, std::slice::from_ref(post), featurizer)?.remove(0))
}

pub fn predict_batch(
    model: &TrainedModel,
    posts: &[RawPost],
    featurizer: &Featurizer,
) -> Result<Vec<Prediction>, ClassifierError> {
    check_featurizer(model, featurizer)?;
    predict_fused(model, &featurizer.featurize_posts(posts)?)
}

/// Scores a model on a labelled dataset.
pub fn evaluate(
    model: &TrainedModel,
    dataset: &LabeledDataset,
    featurizer: &Featurizer,
    model_name: &str,
) -> Result<EvalReport, ClassifierError> {
    check_featurizer(model, featurizer)?;
    let task = model.task();
    let golds = gold_indices(&dataset.rows, task, &model.labels)?;
    let preds = predict_fused(model, &featurizer.featurize_rows(&dataset.rows)?)?;
    let gold_labels: Vec<&str> = golds.iter().map(|&g| model.labels[g].as_str()).collect();
    let pred_labels: Vec<&str> = preds.iter().map(|p| p.label.as_str()).collect();
    let m = metrics::confusion(&gold_labels, &pred_labels, &model.labels)
        .expect("labels come from the vocabulary");
    Ok(EvalReport::from_matrix(
        m,
        model_name,
        model.mode.to_string(),
        task.to_string(),
        dataset.language.to_string(),
    ))
}
