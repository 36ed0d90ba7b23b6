//! Hashtag segmentation under a unigram language model.
//!
//! Candidates are ranked by likelihood, then by fewer tokens, then by the
//! lexicographically smallest token list. Likelihoods are compared exactly
//! (as products of integer counts over powers of the corpus total), so the
//! dynamic program and the exhaustive enumeration in
//! [`brute_force_segment`] always pick the same segmentation; the reported
//! `score` is the left-to-right `f64` sum of [`score_word`] over the tokens.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use num_bigint::BigUint;
use thiserror::Error;

pub const DEFAULT_MAX_WORD_LEN: usize = 20;

/// Longest input the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 22;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("cannot read lexicon {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed lexicon line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },
    #[error("lexicon has no entries")]
    EmptyLexicon,
    #[error("input of {len} characters exceeds the brute-force limit of {BRUTE_FORCE_MAX_LEN}")]
    InputTooLong { len: usize },
}

/// Unigram counts keyed by lowercase token.
#[derive(Debug, Clone)]
pub struct Lexicon {
    counts: HashMap<String, u64>,
    total: u64,
    pub max_word_len: usize,
}

fn fold(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

impl Lexicon {
    /// Lexicon with no entries; every word is out of vocabulary with the
    /// penalty computed against a total of 1.
    pub fn empty() -> Self {
        Lexicon {
            counts: HashMap::new(),
            total: 1,
            max_word_len: DEFAULT_MAX_WORD_LEN,
        }
    }

    pub fn from_counts<I, S>(entries: I) -> Result<Self, SegmentError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for (i, (token, count)) in entries.into_iter().enumerate() {
            let token = fold(token.as_ref());
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(SegmentError::MalformedLexicon {
                    line: i + 1,
                    reason: "token is empty or contains whitespace".into(),
                });
            }
            if count == 0 {
                return Err(SegmentError::MalformedLexicon {
                    line: i + 1,
                    reason: "count must be at least 1".into(),
                });
            }
            *counts.entry(token).or_default() += count;
        }
        if counts.is_empty() {
            return Err(SegmentError::EmptyLexicon);
        }
        let total = counts.values().sum();
        Ok(Lexicon {
            counts,
            total,
            max_word_len: DEFAULT_MAX_WORD_LEN,
        })
    }

    /// Reads `token<TAB>count` lines; `#` lines are comments.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SegmentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SegmentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, SegmentError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, count) =
                line.split_once('\t')
                    .ok_or_else(|| SegmentError::MalformedLexicon {
                        line: line_no,
                        reason: "missing tab".into(),
                    })?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| SegmentError::MalformedLexicon {
                    line: line_no,
                    reason: format!("bad count `{}`", count.trim()),
                })?;
            if count == 0 || token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(SegmentError::MalformedLexicon {
                    line: line_no,
                    reason: "empty token, whitespace in token, or zero count".into(),
                });
            }
            entries.push((token.to_string(), count));
        }
        Self::from_counts(entries)
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.counts.get(&fold(word)).copied()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Log-probability of one word: `ln(count/total)` in vocabulary, otherwise
/// `ln(1 / (total * 10^len))` with `len` in characters.
pub fn score_word(word: &str, lexicon: &Lexicon) -> f64 {
    let total = lexicon.total as f64;
    match lexicon.count(word) {
        Some(c) => (c as f64 / total).ln(),
        None => -(total.ln() + word.chars().count() as f64 * std::f64::consts::LN_10),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Tokens in the input's original casing.
    pub tokens: Vec<String>,
    /// Sum of [`score_word`] over `tokens`, accumulated left to right.
    pub score: f64,
}

impl Segmentation {
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Exact likelihood `product / (total^tokens * 10^oov_chars)`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Likelihood {
    product: BigUint,
    tokens: u32,
    oov_chars: u32,
}

impl Likelihood {
    fn one() -> Self {
        Likelihood {
            product: BigUint::from(1u32),
            tokens: 0,
            oov_chars: 0,
        }
    }

    fn extend(&self, word: &[char], lexicon: &Lexicon) -> Self {
        let word: String = word.iter().collect();
        match lexicon.count(&word) {
            Some(c) => Likelihood {
                product: &self.product * c,
                tokens: self.tokens + 1,
                oov_chars: self.oov_chars,
            },
            None => Likelihood {
                product: self.product.clone(),
                tokens: self.tokens + 1,
                oov_chars: self.oov_chars + word.chars().count() as u32,
            },
        }
    }

    fn cmp_with(&self, other: &Self, total: u64) -> Ordering {
        let t = BigUint::from(total);
        let ten = BigUint::from(10u32);
        let lhs = &self.product * t.pow(other.tokens) * ten.pow(other.oov_chars);
        let rhs = &other.product * t.pow(self.tokens) * ten.pow(self.oov_chars);
        lhs.cmp(&rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Lower,
    Upper,
    Letter,
    Digit,
    Other,
}

fn class_of(c: char) -> CharClass {
    if c.is_numeric() {
        CharClass::Digit
    } else if c.is_lowercase() {
        CharClass::Lower
    } else if c.is_uppercase() {
        CharClass::Upper
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else {
        CharClass::Other
    }
}

fn is_letter(c: CharClass) -> bool {
    matches!(c, CharClass::Lower | CharClass::Upper | CharClass::Letter)
}

/// `forced[i]` is true when a boundary must fall between chars `i-1` and `i`
/// (camel-case lower→upper, or a letter/digit transition).
fn forced_boundaries(chars: &[char]) -> Vec<bool> {
    let mut forced = vec![false; chars.len() + 1];
    for i in 1..chars.len() {
        let (a, b) = (class_of(chars[i - 1]), class_of(chars[i]));
        forced[i] = (a == CharClass::Lower && b == CharClass::Upper)
            || (is_letter(a) && b == CharClass::Digit)
            || (a == CharClass::Digit && is_letter(b));
    }
    forced
}

struct Candidates<'a> {
    chars: &'a [char],
    forced: Vec<bool>,
    max_word_len: usize,
}

impl<'a> Candidates<'a> {
    fn new(chars: &'a [char], max_word_len: usize) -> Self {
        Candidates {
            chars,
            forced: forced_boundaries(chars),
            max_word_len,
        }
    }

    /// A token `start..end` may not straddle a forced boundary, and must be
    /// at most `max_word_len` long unless it spans a whole forced chunk.
    fn allowed(&self, start: usize, end: usize) -> bool {
        if (start + 1..end).any(|i| self.forced[i]) {
            return false;
        }
        if end - start <= self.max_word_len {
            return true;
        }
        let starts_chunk = start == 0 || self.forced[start];
        let ends_chunk = end == self.chars.len() || self.forced[end];
        starts_chunk && ends_chunk
    }

    fn tokens(&self, bounds: &[usize]) -> Vec<String> {
        bounds
            .windows(2)
            .map(|w| self.chars[w[0]..w[1]].iter().collect())
            .collect()
    }
}

fn rank(a: (&Likelihood, &[String]), b: (&Likelihood, &[String]), total: u64) -> Ordering {
    // Greater is better.
    a.0.cmp_with(b.0, total)
        .then_with(|| b.0.tokens.cmp(&a.0.tokens))
        .then_with(|| b.1.cmp(a.1))
}

fn finish(tokens: Vec<String>, lexicon: &Lexicon) -> Segmentation {
    let score = tokens
        .iter()
        .fold(0.0, |acc, t| acc + score_word(t, lexicon));
    Segmentation { tokens, score }
}

/// Best segmentation of `raw` (hashtag without its `#`).
pub fn segment(raw: &str, lexicon: &Lexicon) -> Segmentation {
    let chars: Vec<char> = raw.chars().collect();
    if chars.is_empty() {
        return Segmentation {
            tokens: Vec::new(),
            score: 0.0,
        };
    }
    let cand = Candidates::new(&chars, lexicon.max_word_len.max(1));
    let n = chars.len();

    // best[j]: optimal segmentation of chars[..j] as (likelihood, bounds).
    let mut best: Vec<Option<(Likelihood, Vec<usize>)>> = vec![None; n + 1];
    best[0] = Some((Likelihood::one(), vec![0]));
    for end in 1..=n {
        // Tokens never straddle a forced boundary, so the last one before
        // `end` is the earliest admissible start.
        let floor = (1..end).rev().find(|&i| cand.forced[i]).unwrap_or(0);
        let near = end.saturating_sub(cand.max_word_len).max(floor);
        let starts = std::iter::once(floor)
            .filter(|&f| f < near)
            .chain(near..end);

        let mut winner: Option<(Likelihood, Vec<usize>)> = None;
        for start in starts {
            if !cand.allowed(start, end) {
                continue;
            }
            let Some((prefix_lk, prefix_bounds)) = &best[start] else {
                continue;
            };
            let lk = prefix_lk.extend(&chars[start..end], lexicon);
            let mut bounds = prefix_bounds.clone();
            bounds.push(end);
            let better = match &winner {
                None => true,
                Some((wl, wb)) => {
                    let order = lk
                        .cmp_with(wl, lexicon.total)
                        .then_with(|| wl.tokens.cmp(&lk.tokens))
                        .then_with(|| cand.tokens(wb).cmp(&cand.tokens(&bounds)));
                    order == Ordering::Greater
                }
            };
            if better {
                winner = Some((lk, bounds));
            }
        }
        best[end] = winner;
    }

    let (_, bounds) = best[n]
        .take()
        .expect("whole forced chunks are always candidates");
    finish(cand.tokens(&bounds), lexicon)
}

/// Exhaustive oracle: enumerates every boundary subset that honours the
/// forced boundaries and length rule, ranking with the same order as
/// [`segment`].
pub fn brute_force_segment(raw: &str, lexicon: &Lexicon) -> Result<Segmentation, SegmentError> {
    let chars: Vec<char> = raw.chars().collect();
    let n = chars.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(SegmentError::InputTooLong { len: n });
    }
    if n == 0 {
        return Ok(Segmentation {
            tokens: Vec::new(),
            score: 0.0,
        });
    }
    let cand = Candidates::new(&chars, lexicon.max_word_len.max(1));

    let mut winner: Option<(Likelihood, Vec<String>)> = None;
    'masks: for mask in 0u32..(1u32 << (n - 1)) {
        let mut bounds = vec![0];
        for i in 1..n {
            let cut = mask & (1 << (i - 1)) != 0;
            if cand.forced[i] && !cut {
                continue 'masks;
            }
            if cut {
                bounds.push(i);
            }
        }
        bounds.push(n);
        if bounds.windows(2).any(|w| !cand.allowed(w[0], w[1])) {
            continue;
        }
        let lk = bounds.windows(2).fold(Likelihood::one(), |lk, w| {
            lk.extend(&chars[w[0]..w[1]], lexicon)
        });
        let tokens = cand.tokens(&bounds);
        let better = match &winner {
            None => true,
            Some((wl, wt)) => rank((&lk, &tokens), (wl, wt), lexicon.total) == Ordering::Greater,
        };
        if better {
            winner = Some((lk, tokens));
        }
    }
    let (_, tokens) = winner.expect("the all-forced segmentation is always admissible");
    Ok(finish(tokens, lexicon))
}
