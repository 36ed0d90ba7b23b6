use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::corpus::Row;
use crate::embedkit::{hash_embed, Embedder};
use crate::emojikit::{pool, EmbeddingTable, EmojiRegistry, PooledVector};
use crate::exec::{self, Execution};
use crate::hashseg::{segment, Lexicon};
use crate::textprep::{Preprocessor, RawPost};

pub const MASK_BITS: usize = 3;

/// Which auxiliary blocks are filled in; a disabled block is zero with its
/// mask bit cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub hashtags: bool,
    pub emoji_vectors: bool,
    pub emoji_descriptions: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags {
            hashtags: true,
            emoji_vectors: true,
            emoji_descriptions: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

/// Segment offsets of a fused vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedLayout {
    pub text: Segment,
    pub hashtag: Segment,
    pub emoji: Segment,
    pub description: Segment,
    pub mask: Segment,
}

impl FusedLayout {
    pub fn new(text_dim: usize, aux_dim: usize) -> Self {
        let seg = |offset, len| Segment { offset, len };
        FusedLayout {
            text: seg(0, text_dim),
            hashtag: seg(text_dim, aux_dim),
            emoji: seg(text_dim + aux_dim, aux_dim),
            description: seg(text_dim + 2 * aux_dim, aux_dim),
            mask: seg(text_dim + 3 * aux_dim, MASK_BITS),
        }
    }

    pub fn total(&self) -> usize {
        self.mask.offset + self.mask.len
    }
}

/// `[text | hashtag | emoji | description | mask bits]`
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub values: Vec<f64>,
    pub layout: FusedLayout,
}

impl FusedVector {
    pub fn slice(&self, s: Segment) -> &[f64] {
        &self.values[s.offset..s.offset + s.len]
    }
}

pub fn fuse(
    text: &[f64],
    hashtag: &PooledVector,
    emoji: &PooledVector,
    description: &PooledVector,
) -> Result<FusedVector, ClassifierError> {
    let aux = hashtag.values.len();
    for other in [emoji, description] {
        if other.values.len() != aux {
            return Err(ClassifierError::DimMismatch {
                expected: aux,
                found: other.values.len(),
            });
        }
    }
    let layout = FusedLayout::new(text.len(), aux);
    let mut values = Vec::with_capacity(layout.total());
    values.extend_from_slice(text);
    let blocks = [hashtag, emoji, description];
    for b in blocks {
        if b.present {
            values.extend_from_slice(&b.values);
        } else {
            values.extend(std::iter::repeat_n(0.0, aux));
        }
    }
    values.extend(blocks.iter().map(|b| if b.present { 1.0 } else { 0.0 }));
    Ok(FusedVector { values, layout })
}

/// Word or emoji vectors for the auxiliary blocks: a loaded table, or vectors
/// derived on the fly from a hash of each item.
#[derive(Debug, Clone)]
pub enum AuxVectors {
    Table(EmbeddingTable),
    Hashed { dim: usize, seed: u64 },
}

impl AuxVectors {
    pub fn dim(&self) -> usize {
        match self {
            AuxVectors::Table(t) => t.dim(),
            AuxVectors::Hashed { dim, .. } => *dim,
        }
    }

    pub fn pool(&self, items: &[String]) -> PooledVector {
        match self {
            AuxVectors::Table(t) => pool(items, t),
            AuxVectors::Hashed { dim, seed } => {
                let unique: BTreeSet<&str> = items
                    .iter()
                    .map(String::as_str)
                    .filter(|s| !s.trim().is_empty())
                    .collect();
                let entries = unique
                    .into_iter()
                    .map(|s| (s.to_string(), hash_embed(s, *dim, *seed).values));
                let table = EmbeddingTable::from_entries("hashed", *dim, entries)
                    .expect("hash vectors are finite and sized");
                pool(items, &table)
            }
        }
    }

    /// Short description stored with trained models.
    pub fn describe(&self) -> String {
        match self {
            AuxVectors::Table(t) => format!("table/{}/d{}", t.name(), t.dim()),
            AuxVectors::Hashed { dim, seed } => format!("hashed/d{dim}/s{seed}"),
        }
    }
}

/// Everything that turns a row into a fused vector.
#[derive(Debug)]
pub struct Featurizer {
    pub preprocessor: Preprocessor,
    pub lexicon: Lexicon,
    pub registry: EmojiRegistry,
    /// Pooled over the emojis and smileys of a post.
    pub emoji_vectors: AuxVectors,
    /// Pooled over hashtag segments and over emoji description words.
    pub word_vectors: AuxVectors,
    pub embedder: Embedder,
    pub flags: FeatureFlags,
    pub exec: Execution,
}

/// Identity of the feature pipeline, stored with trained models and checked
/// before prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub backend_id: String,
    pub text_dim: usize,
    pub aux_dim: usize,
    pub emoji_vectors: String,
    pub word_vectors: String,
    pub flags: FeatureFlags,
}

/// Intermediate per-row features before text embedding.
struct Parts {
    text: String,
    hashtag: PooledVector,
    emoji: PooledVector,
    description: PooledVector,
}

impl Featurizer {
    /// Hash-backed auxiliary vectors, empty lexicon and registry.
    pub fn new(embedder: Embedder, aux_dim: usize, seed: u64) -> Self {
        Featurizer {
            preprocessor: Preprocessor::default(),
            lexicon: Lexicon::empty(),
            registry: EmojiRegistry::default(),
            emoji_vectors: AuxVectors::Hashed { dim: aux_dim, seed },
            word_vectors: AuxVectors::Hashed {
                dim: aux_dim,
                seed: seed ^ 0x5eed,
            },
            embedder,
            flags: FeatureFlags::default(),
            exec: Execution::default(),
        }
    }

    pub fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            backend_id: self.embedder.id(),
            text_dim: self.embedder.dim(),
            aux_dim: self.word_vectors.dim(),
            emoji_vectors: self.emoji_vectors.describe(),
            word_vectors: self.word_vectors.describe(),
            flags: self.flags,
        }
    }

    pub fn input_dim(&self) -> usize {
        FusedLayout::new(self.embedder.dim(), self.word_vectors.dim()).total()
    }

    fn parts(&self, post: &RawPost) -> Parts {
        let processed = self.preprocessor.process(post);
        for w in &processed.warnings {
            log::debug!("{w}");
        }
        let entities = &processed.clean.entities;
        let aux = self.word_vectors.dim();

        let hashtag = if self.flags.hashtags {
            let words: Vec<String> = entities
                .hashtags
                .iter()
                .flat_map(|h| segment(h, &self.lexicon).tokens)
                .map(|w| w.to_lowercase())
                .collect();
            self.word_vectors.pool(&words)
        } else {
            PooledVector::absent(aux)
        };
        let emoji = if self.flags.emoji_vectors {
            let items: Vec<String> = entities
                .emojis
                .iter()
                .chain(&entities.smileys)
                .cloned()
                .collect();
            self.emoji_vectors.pool(&items)
        } else {
            PooledVector::absent(aux)
        };
        let description = if self.flags.emoji_descriptions {
            let words: Vec<String> = entities
                .emojis
                .iter()
                .filter_map(|e| self.registry.describe(e).ok())
                .flat_map(|d| d.split_whitespace().map(str::to_lowercase))
                .collect();
            self.word_vectors.pool(&words)
        } else {
            PooledVector::absent(aux)
        };
        Parts {
            text: processed.tokens.join(" "),
            hashtag,
            emoji,
            description,
        }
    }

    pub fn featurize_posts(&self, posts: &[RawPost]) -> Result<Vec<FusedVector>, ClassifierError> {
        if self.emoji_vectors.dim() != self.word_vectors.dim() {
            return Err(ClassifierError::DimMismatch {
                expected: self.word_vectors.dim(),
                found: self.emoji_vectors.dim(),
            });
        }
        let parts = exec::map(self.exec, posts, |p| self.parts(p));
        let texts: Vec<&str> = parts.iter().map(|p| p.text.as_str()).collect();
        let vectors = self.embedder.embed_batch(&texts)?;
        parts
            .iter()
            .zip(vectors)
            .map(|(p, v)| fuse(&v.values, &p.hashtag, &p.emoji, &p.description))
            .collect()
    }

    pub fn featurize_rows(&self, rows: &[Row]) -> Result<Vec<FusedVector>, ClassifierError> {
        let posts: Vec<RawPost> = rows
            .iter()
            .map(|r| RawPost {
                text: r.text.clone(),
                language: r.language,
            })
            .collect();
        self.featurize_posts(&posts)
    }
}
