//! Emoji descriptions, embedding tables and mean pooling.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::is_emoji_grapheme;

#[derive(Debug, Error)]
pub enum EmojiError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed registry line {line}: {reason}")]
    MalformedRegistry { line: usize, reason: String },
    #[error("no description for `{0}`")]
    NotFound(String),
    #[error("malformed embedding header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("malformed embedding row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

fn read(path: &Path) -> Result<String, EmojiError> {
    fs::read_to_string(path).map_err(|source| EmojiError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Emoji grapheme → textual description.
#[derive(Debug, Clone, Default)]
pub struct EmojiRegistry {
    descriptions: HashMap<String, String>,
}

impl EmojiRegistry {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmojiError> {
        Self::parse(&read(path.as_ref())?)
    }

    /// Two-column TSV, `emoji<TAB>description`. Later duplicates win.
    pub fn parse(text: &str) -> Result<Self, EmojiError> {
        let mut descriptions = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| EmojiError::MalformedRegistry {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (emoji, desc) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let desc = desc.trim();
            if desc.is_empty() {
                return Err(bad("empty description"));
            }
            if !is_emoji_grapheme(emoji) {
                return Err(bad("key is not an emoji"));
            }
            descriptions.insert(emoji.to_string(), desc.to_string());
        }
        Ok(EmojiRegistry { descriptions })
    }

    pub fn describe(&self, emoji: &str) -> Result<&str, EmojiError> {
        self.descriptions
            .get(emoji)
            .map(String::as_str)
            .ok_or_else(|| EmojiError::NotFound(emoji.to_string()))
    }

    pub fn len(&self) -> usize {
        self.descriptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptions.is_empty()
    }
}

/// Token → vector map in word2vec text format. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    name: String,
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        EmbeddingTable {
            name: name.into(),
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn from_entries<I>(
        name: impl Into<String>,
        dim: usize,
        entries: I,
    ) -> Result<Self, EmojiError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = Self::new(name, dim);
        for (i, (token, v)) in entries.into_iter().enumerate() {
            table.insert(token, v, i + 1)?;
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, v: Vec<f64>, line: usize) -> Result<(), EmojiError> {
        if v.len() != self.dim {
            return Err(EmojiError::DimensionMismatch {
                line,
                expected: self.dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmojiError::MalformedRow {
                line,
                reason: "non-finite value".into(),
            });
        }
        self.vectors.insert(token, v);
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmojiError> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&name, &read(path)?)
    }

    /// First line `<count> <dim>`, then `<token> <f_1> ... <f_dim>` rows.
    pub fn parse(name: &str, text: &str) -> Result<Self, EmojiError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| EmojiError::MalformedHeader("file is empty".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [count, dim] = fields[..] else {
            return Err(EmojiError::MalformedHeader(format!(
                "expected `<count> <dim>`, got `{header}`"
            )));
        };
        let count: usize = count
            .parse()
            .map_err(|_| EmojiError::MalformedHeader(format!("bad count `{count}`")))?;
        let dim: usize = dim
            .parse()
            .map_err(|_| EmojiError::MalformedHeader(format!("bad dim `{dim}`")))?;
        if dim == 0 {
            return Err(EmojiError::MalformedHeader("dim must be positive".into()));
        }

        let mut table = Self::new(name, dim);
        let mut rows = 0;
        for (i, line) in lines {
            let line_no = i + 1;
            let mut parts = line.split(' ').filter(|p| !p.is_empty());
            let token = parts
                .next()
                .expect("non-blank line has a first field")
                .to_string();
            let values = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| EmojiError::MalformedRow {
                        line: line_no,
                        reason: format!("bad float `{p}`"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            table.insert(token, values, line_no)?;
            rows += 1;
        }
        if rows != count {
            return Err(EmojiError::MalformedHeader(format!(
                "header declares {count} rows, file has {rows}"
            )));
        }
        Ok(table)
    }

    /// Writes the table in the same text format, rows sorted by token.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vectors.len(), self.dim)?;
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        for k in keys {
            write!(out, "{k}")?;
            for x in &self.vectors[k] {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub(crate) fn insert_unchecked(&mut self, token: String, v: Vec<f64>) {
        debug_assert_eq!(v.len(), self.dim);
        self.vectors.insert(token, v);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledVector {
    pub values: Vec<f64>,
    /// False when none of the items had a vector; `values` is then all zero.
    pub present: bool,
}

impl PooledVector {
    pub fn absent(dim: usize) -> Self {
        PooledVector {
            values: vec![0.0; dim],
            present: false,
        }
    }
}

/// Mean of the vectors of the items found in `table`; absent items are
/// skipped and the mean is taken over the found ones only.
///
/// Found vectors are summed in token order so the result does not depend on
/// the order of `items`, and each component is clamped to the range of its
/// inputs to absorb rounding in the division.
pub fn pool<S: AsRef<str>>(items: &[S], table: &EmbeddingTable) -> PooledVector {
    let mut found: Vec<(&str, &[f64])> = items
        .iter()
        .filter_map(|t| table.get(t.as_ref()).map(|v| (t.as_ref(), v)))
        .collect();
    if found.is_empty() {
        return PooledVector::absent(table.dim());
    }
    found.sort_by(|a, b| a.0.cmp(b.0));

    let n = found.len() as f64;
    let values = (0..table.dim())
        .map(|j| {
            let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
            for (_, v) in &found {
                sum += v[j];
                lo = lo.min(v[j]);
                hi = hi.max(v[j]);
            }
            (sum / n).clamp(lo, hi)
        })
        .collect();
    PooledVector {
        values,
        present: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::parse("t", "2 3\n🙏 1 2 3\n💁 3 0 -1\n").unwrap()
    }

    #[test]
    fn registry_lookup() {
        let r = EmojiRegistry::parse("🙏\tfolded hands\n💁\twoman tipping hand\n").unwrap();
        assert_eq!(r.describe("🙏").unwrap(), "folded hands");
        assert_eq!(r.describe("💁").unwrap(), "woman tipping hand");
        assert!(matches!(r.describe("😂"), Err(EmojiError::NotFound(_))));
    }

    #[test]
    fn registry_later_duplicates_win() {
        let r = EmojiRegistry::parse("🙏\tpray\n🙏\tfolded hands\n").unwrap();
        assert_eq!(r.describe("🙏").unwrap(), "folded hands");
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn registry_rejects_bad_lines() {
        assert!(matches!(
            EmojiRegistry::parse("🙏 folded hands"),
            Err(EmojiError::MalformedRegistry { line: 1, .. })
        ));
        assert!(matches!(
            EmojiRegistry::parse("🙏\tok\nabc\tletters"),
            Err(EmojiError::MalformedRegistry { line: 2, .. })
        ));
    }

    #[test]
    fn table_parse_and_errors() {
        let t = table();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert!(matches!(
            EmbeddingTable::parse("t", "1 3\na 1 2\n"),
            Err(EmojiError::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(
            EmbeddingTable::parse("t", "1 2\na NaN 2\n"),
            Err(EmojiError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("t", "3\n"),
            Err(EmojiError::MalformedHeader(_))
        ));
        assert!(matches!(
            EmbeddingTable::parse("t", "2 1\na 1\n"),
            Err(EmojiError::MalformedHeader(_))
        ));
    }

    #[test]
    fn table_round_trips_through_text() {
        let t = table();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = EmbeddingTable::parse("t", std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn pool_examples() {
        let t = table();
        let one = pool(&["🙏"], &t);
        assert_eq!(one.values, vec![1.0, 2.0, 3.0]);
        assert!(one.present);

        let two = pool(&["🙏", "💁"], &t);
        assert_eq!(two.values, vec![2.0, 1.0, 1.0]);

        let none = pool::<&str>(&[], &t);
        assert_eq!(none, PooledVector::absent(3));

        let skipped = pool(&["😂", "🙏"], &t);
        assert_eq!(skipped.values, vec![1.0, 2.0, 3.0]);
        assert!(!pool(&["😂"], &t).present);
    }
}
