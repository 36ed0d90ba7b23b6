use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hasoc_core::classifier::{AuxVectors, FeatureFlags, Featurizer, HeadConfig, Mode};
use hasoc_core::corpus::Task;
use hasoc_core::embedkit::{BackendKind, Embedder, EmbeddingBackendSpec};
use hasoc_core::emojikit::{EmbeddingTable, EmojiRegistry};
use hasoc_core::hashseg::Lexicon;
use hasoc_core::textprep::Language;

pub const DEFAULT_TEXT_DIM: usize = 64;
pub const DEFAULT_AUX_DIM: usize = 32;

/// Experiment description read from `--config`. Every field can be
/// overridden by the command-line flag of the same name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub task: Option<Task>,
    pub mode: Option<Mode>,
    pub lang: Option<Language>,

    pub backend: Option<BackendKind>,
    pub endpoint: Option<String>,
    pub model_id: Option<String>,
    pub dim: Option<usize>,
    pub timeout_ms: Option<u64>,
    pub max_batch: Option<usize>,
    pub cache: Option<PathBuf>,

    pub aux_dim: Option<usize>,
    pub lexicon: Option<PathBuf>,
    pub emoji_registry: Option<PathBuf>,
    pub emoji_table: Option<PathBuf>,
    pub word_table: Option<PathBuf>,
    pub no_hashtags: Option<bool>,
    pub no_emoji_vectors: Option<bool>,
    pub no_emoji_descriptions: Option<bool>,

    pub hidden_dim: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,

    /// Training sets by language.
    pub datasets: BTreeMap<Language, PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )+
    };
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.cache,
            &mut cfg.lexicon,
            &mut cfg.emoji_registry,
            &mut cfg.emoji_table,
            &mut cfg.word_table,
            &mut cfg.out,
            &mut cfg.history,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        cfg.datasets.values_mut().for_each(rebase);
        Ok(cfg)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: &RunConfig) -> Self {
        overlay!(
            self,
            other,
            seed,
            task,
            mode,
            lang,
            backend,
            endpoint,
            model_id,
            dim,
            timeout_ms,
            max_batch,
            cache,
            aux_dim,
            lexicon,
            emoji_registry,
            emoji_table,
            word_table,
            no_hashtags,
            no_emoji_vectors,
            no_emoji_descriptions,
            hidden_dim,
            dropout,
            lr,
            batch_size,
            max_epochs,
            patience,
            out,
            history
        );
        for (k, v) in &other.datasets {
            self.datasets.insert(*k, v.clone());
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn head_config(&self) -> HeadConfig {
        let d = HeadConfig::default();
        HeadConfig {
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            dropout: self.dropout.unwrap_or(d.dropout),
            lr: self.lr.unwrap_or(d.lr),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            patience: self.patience.unwrap_or(d.patience),
            seed: self.seed(),
            task: self.task.unwrap_or(d.task),
        }
    }

    /// Backend spec from the flags, falling back to `base` (a trained
    /// model's backend) and then to a hash backend.
    pub fn backend_spec(
        &self,
        base: Option<&EmbeddingBackendSpec>,
    ) -> Result<EmbeddingBackendSpec> {
        let kind = self
            .backend
            .or(base.map(|b| b.kind))
            .unwrap_or(BackendKind::Hash);
        let mut spec = match (base, kind) {
            (Some(b), k) if b.kind == k => b.clone(),
            (_, BackendKind::Hash) => EmbeddingBackendSpec::hash(DEFAULT_TEXT_DIM, self.seed()),
            (_, BackendKind::Remote) => EmbeddingBackendSpec::remote(
                self.endpoint.clone().unwrap_or_default(),
                self.model_id.clone().unwrap_or_default(),
                DEFAULT_TEXT_DIM,
            ),
        };
        if let Some(d) = self.dim {
            spec.dim = d;
        }
        if kind == BackendKind::Remote {
            if let Some(e) = &self.endpoint {
                spec.endpoint = Some(e.clone());
            }
            if let Some(m) = &self.model_id {
                spec.model_id = Some(m.clone());
            }
        }
        if let Some(t) = self.timeout_ms {
            spec.timeout_ms = t;
        }
        if let Some(b) = self.max_batch {
            spec.max_batch = b;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => Ok(Lexicon::load(p)?),
            None => Ok(Lexicon::empty()),
        }
    }

    /// Featurizer for `spec`; `aux_seed` seeds the hashed auxiliary vectors
    /// used when no table is configured.
    pub fn featurizer(
        &self,
        spec: EmbeddingBackendSpec,
        aux_dim: Option<usize>,
        aux_seed: u64,
    ) -> Result<Featurizer> {
        let mut embedder = Embedder::new(spec)?;
        if let Some(c) = &self.cache {
            embedder = embedder.with_cache(c)?;
        }
        let aux_dim = self.aux_dim.or(aux_dim).unwrap_or(DEFAULT_AUX_DIM);
        let mut f = Featurizer::new(embedder, aux_dim, aux_seed);
        f.lexicon = self.lexicon()?;
        if let Some(p) = &self.emoji_registry {
            f.registry = EmojiRegistry::load(p)?;
        }
        if let Some(p) = &self.emoji_table {
            f.emoji_vectors = AuxVectors::Table(EmbeddingTable::load(p)?);
        }
        if let Some(p) = &self.word_table {
            f.word_vectors = AuxVectors::Table(EmbeddingTable::load(p)?);
        }
        if f.emoji_vectors.dim() != f.word_vectors.dim() {
            bail!(
                "emoji vectors have dimension {}, word vectors {}",
                f.emoji_vectors.dim(),
                f.word_vectors.dim()
            );
        }
        f.flags = FeatureFlags {
            hashtags: !self.no_hashtags.unwrap_or(false),
            emoji_vectors: !self.no_emoji_vectors.unwrap_or(false),
            emoji_descriptions: !self.no_emoji_descriptions.unwrap_or(false),
        };
        Ok(f)
    }

    /// Datasets to train on for the configured mode.
    pub fn training_sets(&self) -> Result<Vec<(Language, PathBuf)>> {
        if self.datasets.is_empty() {
            bail!("no datasets given (use --datasets <lang>=<path>)");
        }
        let sets: Vec<(Language, PathBuf)> = match (self.mode.unwrap_or(Mode::Mono), self.lang) {
            (Mode::Mono, Some(l)) => match self.datasets.get(&l) {
                Some(p) => vec![(l, p.clone())],
                None => bail!("no dataset for language {l}"),
            },
            (Mode::Mono, None) if self.datasets.len() == 1 => {
                self.datasets.iter().map(|(l, p)| (*l, p.clone())).collect()
            }
            (Mode::Mono, None) => bail!("mono mode needs --lang when several datasets are given"),
            (Mode::Multi, _) => self.datasets.iter().map(|(l, p)| (*l, p.clone())).collect(),
        };
        for (_, p) in &sets {
            if !p.is_file() {
                bail!("dataset {} does not exist", p.display());
            }
        }
        Ok(sets)
    }
}

/// `lang=path`
pub fn parse_lang_path(s: &str) -> std::result::Result<(Language, PathBuf), String> {
    let (lang, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected <lang>=<path>, got `{s}`"))?;
    let lang: Language = lang.parse().map_err(|e| format!("{e}"))?;
    Ok((lang, PathBuf::from(path)))
}
