//! Tweet cleaning: entity extraction, tokenization, script detection and the
//! pluggable transliteration hook used for the Devanagari datasets.
//!
//! Entities are claimed in a fixed order (URLs, mentions, hashtags,
//! emojis/smileys, reserved words, numbers). Each pass only scans the text
//! that earlier passes left unclaimed, so a `#` inside a URL never starts a
//! hashtag.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

/// Symbols that split tokens in addition to whitespace.
pub const SPLIT_SYMBOLS: [char; 5] = [':', ',', ';', '-', '_'];

/// ASCII emoticons recognised as smileys.
pub const SMILEYS: [&str; 13] = [
    ":-)", ":-(", ":)", ":(", ":D", ":d", ";)", ":P", ":p", "xD", "XD", "xd", "Xd",
];

const RESERVED_WORDS: [&str; 3] = ["@RT", "RT", "FAV"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Hi,
    Mr,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::En, Language::Hi, Language::Mr];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Hi => "hi",
            Language::Mr => "mr",
        }
    }

    /// Hindi and Marathi are written in Devanagari.
    pub fn native_script(self) -> Script {
        match self {
            Language::En => Script::Latin,
            Language::Hi | Language::Mr => Script::Devanagari,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Language::En),
            "hi" | "hindi" => Ok(Language::Hi),
            "mr" | "marathi" => Ok(Language::Mr),
            other => Err(TextError::UnknownLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextError {
    #[error("post text is empty after trimming")]
    EmptyPost,
    #[error("unknown language `{0}` (expected en, hi or mr)")]
    UnknownLanguage(String),
    #[error("every character of the post belonged to an entity")]
    AllContentRemoved(Box<CleanPost>),
    #[error("transliterator `{name}` failed on `{token}`: {message}")]
    TransliteratorFailure {
        name: String,
        token: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub text: String,
    pub language: Language,
}

impl RawPost {
    pub fn new(text: impl Into<String>, language: Language) -> Result<Self, TextError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TextError::EmptyPost);
        }
        Ok(RawPost { text, language })
    }
}

/// Entities pulled out of a post, each list in left-to-right source order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostEntities {
    pub hashtags: Vec<String>,
    pub mentions: Vec<String>,
    pub urls: Vec<String>,
    pub emojis: Vec<String>,
    pub smileys: Vec<String>,
    pub reserved: Vec<String>,
    pub numbers: Vec<String>,
}

impl PostEntities {
    pub fn is_empty(&self) -> bool {
        self.hashtags.is_empty()
            && self.mentions.is_empty()
            && self.urls.is_empty()
            && self.emojis.is_empty()
            && self.smileys.is_empty()
            && self.reserved.is_empty()
            && self.numbers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanPost {
    pub tokens: Vec<String>,
    pub entities: PostEntities,
    pub source: RawPost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Url,
    Mention,
    Hashtag,
    Emoji,
    Smiley,
    Reserved,
    Number,
}

/// A claimed region of the source text. `range` is in bytes and covers the
/// raw matched text (markers such as `#` and `@` included); `value` is the
/// entity as reported in [`PostEntities`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpan {
    pub kind: EntityKind,
    pub range: Range<usize>,
    pub value: String,
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"https?://\S+").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@[A-Za-z0-9_]{1,15}").unwrap())
}

fn hashtag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Repeated leading markers (`##tag`) count as a single hashtag.
    RE.get_or_init(|| Regex::new(r"#+[^\s#]+").unwrap())
}

fn is_separator(c: char) -> bool {
    c.is_whitespace() || SPLIT_SYMBOLS.contains(&c)
}

fn is_emoji_base(c: char) -> bool {
    matches!(c as u32,
        0x1F300..=0x1FAFF | 0x2600..=0x27BF | 0x1F1E6..=0x1F1FF)
}

/// Emoji grapheme per the entity grammar: base codepoint in one of the emoji
/// blocks, or any cluster carrying a U+FE0F presentation selector.
pub fn is_emoji_grapheme(g: &str) -> bool {
    match g.chars().next() {
        Some(c) if is_emoji_base(c) => true,
        Some(_) => g.contains('\u{FE0F}'),
        None => false,
    }
}

fn is_digit(c: char) -> bool {
    c.is_ascii_digit() || ('\u{0966}'..='\u{096F}').contains(&c)
}

/// Regions of `0..len` not covered by `claimed` (which must be sorted and
/// non-overlapping).
fn gaps(len: usize, claimed: &[EntitySpan]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut cursor = 0;
    for span in claimed {
        if span.range.start > cursor {
            out.push(cursor..span.range.start);
        }
        cursor = cursor.max(span.range.end);
    }
    if cursor < len {
        out.push(cursor..len);
    }
    out
}

fn claim(claimed: &mut Vec<EntitySpan>, found: Vec<EntitySpan>) {
    claimed.extend(found);
    claimed.sort_by_key(|s| s.range.start);
}

/// Whether `range` (relative to `gap`) sits between separators or the edges
/// of the unclaimed region.
fn standalone(gap: &str, range: &Range<usize>) -> bool {
    let left = gap[..range.start]
        .chars()
        .next_back()
        .is_none_or(is_separator);
    let right = gap[range.end..].chars().next().is_none_or(is_separator);
    left && right
}

fn scan_regex(
    text: &str,
    claimed: &[EntitySpan],
    re: &Regex,
    mut accept: impl FnMut(&str, Range<usize>) -> Option<EntitySpan>,
) -> Vec<EntitySpan> {
    let mut found = Vec::new();
    for gap in gaps(text.len(), claimed) {
        let slice = &text[gap.clone()];
        for m in re.find_iter(slice) {
            if let Some(mut span) = accept(slice, m.range()) {
                span.range = (span.range.start + gap.start)..(span.range.end + gap.start);
                found.push(span);
            }
        }
    }
    found
}

fn scan_emojis_and_smileys(text: &str, claimed: &[EntitySpan]) -> Vec<EntitySpan> {
    let mut found = Vec::new();
    for gap in gaps(text.len(), claimed) {
        let slice = &text[gap.clone()];
        let mut taken: Vec<Range<usize>> = Vec::new();
        for (offset, g) in slice.grapheme_indices(true) {
            if is_emoji_grapheme(g) {
                let range = offset..offset + g.len();
                taken.push(range.clone());
                found.push(EntitySpan {
                    kind: EntityKind::Emoji,
                    range: (range.start + gap.start)..(range.end + gap.start),
                    value: g.to_string(),
                });
            }
        }
        let mut pos = 0;
        while pos < slice.len() {
            if let Some(t) = taken.iter().find(|t| t.start == pos) {
                pos = t.end;
                continue;
            }
            let rest = &slice[pos..];
            let hit = SMILEYS.iter().find(|s| {
                if !rest.starts_with(*s) {
                    return false;
                }
                let end = pos + s.len();
                if taken.iter().any(|t| t.start < end && pos < t.end) {
                    return false;
                }
                let right_ok = slice[end..]
                    .chars()
                    .next()
                    .is_none_or(|c| !c.is_alphanumeric());
                let left_ok = !s.starts_with(['x', 'X'])
                    || slice[..pos]
                        .chars()
                        .next_back()
                        .is_none_or(|c| !c.is_alphanumeric());
                right_ok && left_ok
            });
            match hit {
                Some(s) => {
                    found.push(EntitySpan {
                        kind: EntityKind::Smiley,
                        range: (pos + gap.start)..(pos + s.len() + gap.start),
                        value: s.to_string(),
                    });
                    pos += s.len();
                }
                None => pos += rest.chars().next().map_or(1, char::len_utf8),
            }
        }
    }
    found
}

fn scan_reserved(text: &str, claimed: &[EntitySpan]) -> Vec<EntitySpan> {
    let mut found = Vec::new();
    for gap in gaps(text.len(), claimed) {
        let slice = &text[gap.clone()];
        let mut pos = 0;
        while pos < slice.len() {
            let hit = RESERVED_WORDS
                .iter()
                .find(|w| slice[pos..].starts_with(*w) && standalone(slice, &(pos..pos + w.len())));
            match hit {
                Some(w) => {
                    found.push(EntitySpan {
                        kind: EntityKind::Reserved,
                        range: (pos + gap.start)..(pos + w.len() + gap.start),
                        value: w.trim_start_matches('@').to_string(),
                    });
                    pos += w.len();
                }
                None => pos += slice[pos..].chars().next().map_or(1, char::len_utf8),
            }
        }
    }
    found
}

fn scan_numbers(text: &str, claimed: &[EntitySpan]) -> Vec<EntitySpan> {
    let mut found = Vec::new();
    for gap in gaps(text.len(), claimed) {
        let slice = &text[gap.clone()];
        let chars: Vec<(usize, char)> = slice.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            if !is_digit(chars[i].1) {
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() && is_digit(chars[i].1) {
                i += 1;
            }
            let left_ok = start == 0 || !chars[start - 1].1.is_alphanumeric();
            let right_ok = i == chars.len() || !chars[i].1.is_alphanumeric();
            if left_ok && right_ok {
                let from = chars[start].0;
                let to = chars.get(i).map_or(slice.len(), |c| c.0);
                found.push(EntitySpan {
                    kind: EntityKind::Number,
                    range: (from + gap.start)..(to + gap.start),
                    value: slice[from..to].to_string(),
                });
            }
        }
    }
    found
}

/// All entity spans of `text`, sorted by start offset and non-overlapping.
pub fn entity_spans(text: &str) -> Vec<EntitySpan> {
    let mut claimed = Vec::new();

    let urls = scan_regex(text, &claimed, url_re(), |_, r| {
        Some(EntitySpan {
            kind: EntityKind::Url,
            value: String::new(),
            range: r,
        })
    });
    claim(&mut claimed, urls);

    let mentions = scan_regex(text, &claimed, mention_re(), |gap, r| {
        // A standalone `@RT` is the retweet marker, left for the reserved pass.
        if &gap[r.clone()] == "@RT" && standalone(gap, &r) {
            return None;
        }
        Some(EntitySpan {
            kind: EntityKind::Mention,
            value: String::new(),
            range: r,
        })
    });
    claim(&mut claimed, mentions);

    let hashtags = scan_regex(text, &claimed, hashtag_re(), |_, r| {
        Some(EntitySpan {
            kind: EntityKind::Hashtag,
            value: String::new(),
            range: r,
        })
    });
    claim(&mut claimed, hashtags);

    let emojis = scan_emojis_and_smileys(text, &claimed);
    claim(&mut claimed, emojis);

    let reserved = scan_reserved(text, &claimed);
    claim(&mut claimed, reserved);

    let numbers = scan_numbers(text, &claimed);
    claim(&mut claimed, numbers);

    for span in &mut claimed {
        let raw = &text[span.range.clone()];
        match span.kind {
            EntityKind::Url => span.value = raw.to_string(),
            EntityKind::Mention => span.value = raw[1..].to_string(),
            EntityKind::Hashtag => span.value = raw.trim_start_matches('#').to_string(),
            _ => {}
        }
    }
    claimed
}

pub fn extract_entities(text: &str) -> PostEntities {
    let mut entities = PostEntities::default();
    for span in entity_spans(text) {
        let list = match span.kind {
            EntityKind::Url => &mut entities.urls,
            EntityKind::Mention => &mut entities.mentions,
            EntityKind::Hashtag => &mut entities.hashtags,
            EntityKind::Emoji => &mut entities.emojis,
            EntityKind::Smiley => &mut entities.smileys,
            EntityKind::Reserved => &mut entities.reserved,
            EntityKind::Number => &mut entities.numbers,
        };
        list.push(span.value);
    }
    entities
}

/// Splits on Unicode whitespace and on `: , ; - _`, dropping empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(is_separator)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Removes every entity span and tokenizes what remains.
///
/// A post made only of entities still yields its [`CleanPost`] inside
/// [`TextError::AllContentRemoved`] so callers can keep the row.
pub fn clean(post: &RawPost) -> Result<CleanPost, TextError> {
    let spans = entity_spans(&post.text);
    let mut residue = String::with_capacity(post.text.len());
    let mut cursor = 0;
    for span in &spans {
        residue.push_str(&post.text[cursor..span.range.start]);
        residue.push(' ');
        cursor = span.range.end;
    }
    residue.push_str(&post.text[cursor..]);

    let mut entities = PostEntities::default();
    for span in spans {
        let list = match span.kind {
            EntityKind::Url => &mut entities.urls,
            EntityKind::Mention => &mut entities.mentions,
            EntityKind::Hashtag => &mut entities.hashtags,
            EntityKind::Emoji => &mut entities.emojis,
            EntityKind::Smiley => &mut entities.smileys,
            EntityKind::Reserved => &mut entities.reserved,
            EntityKind::Number => &mut entities.numbers,
        };
        list.push(span.value);
    }

    let cleaned = CleanPost {
        tokens: tokenize(&residue),
        entities,
        source: post.clone(),
    };
    if cleaned.tokens.is_empty() {
        Err(TextError::AllContentRemoved(Box::new(cleaned)))
    } else {
        Ok(cleaned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Script {
    Latin,
    Devanagari,
    Arabic,
    Emoji,
    Other,
}

/// Character offsets, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptSpan {
    pub start: usize,
    pub end: usize,
    pub script: Script,
}

/// Joiners, variation selectors and combining marks take the script of the
/// character they attach to.
fn is_inherited(c: char) -> bool {
    matches!(c as u32,
        0x200C | 0x200D | 0xFE00..=0xFE0F | 0x0300..=0x036F | 0x20D0..=0x20FF)
}

fn char_script(c: char) -> Script {
    match c as u32 {
        0x0900..=0x097F => Script::Devanagari,
        0x0600..=0x06FF | 0x0750..=0x077F => Script::Arabic,
        0x1F300..=0x1FAFF | 0x2600..=0x27BF | 0x1F1E6..=0x1F1FF => Script::Emoji,
        _ if c.is_ascii_alphabetic() => Script::Latin,
        0x00C0..=0x024F | 0x1E00..=0x1EFF if c.is_alphabetic() => Script::Latin,
        _ => Script::Other,
    }
}

fn scripts_of(text: &str) -> impl Iterator<Item = (usize, char, Option<Script>)> + '_ {
    let mut prev: Option<Script> = None;
    text.chars().enumerate().map(move |(i, c)| {
        if c.is_whitespace() {
            prev = None;
            return (i, c, None);
        }
        let script = if is_inherited(c) {
            prev.unwrap_or(Script::Other)
        } else {
            char_script(c)
        };
        prev = Some(script);
        (i, c, Some(script))
    })
}

/// Maximal same-script runs of non-whitespace characters.
pub fn detect_scripts(text: &str) -> Vec<ScriptSpan> {
    let mut spans: Vec<ScriptSpan> = Vec::new();
    let mut open: Option<ScriptSpan> = None;
    for (i, _, script) in scripts_of(text) {
        match (script, open.as_mut()) {
            (None, _) => {
                if let Some(span) = open.take() {
                    spans.push(span);
                }
            }
            (Some(s), Some(span)) if span.script == s => span.end = i + 1,
            (Some(s), _) => {
                if let Some(span) = open.take() {
                    spans.push(span);
                }
                open = Some(ScriptSpan {
                    start: i,
                    end: i + 1,
                    script: s,
                });
            }
        }
    }
    spans.extend(open);
    spans
}

/// The script most of the token's characters belong to; ties go to the
/// script seen first.
pub fn dominant_script(token: &str) -> Option<Script> {
    let mut counts: Vec<(Script, usize)> = Vec::new();
    for (_, _, script) in scripts_of(token) {
        let Some(script) = script else { continue };
        match counts.iter_mut().find(|(s, _)| *s == script) {
            Some((_, n)) => *n += 1,
            None => counts.push((script, 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max()?;
    counts.into_iter().find(|(_, n)| *n == best).map(|(s, _)| s)
}

pub fn filter_script(tokens: &[String], script: Script) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| dominant_script(t) == Some(script))
        .cloned()
        .collect()
}

/// Token-in, token-out script conversion toward a target language.
pub trait Transliterator: Send + Sync {
    fn name(&self) -> &str;

    fn transliterate(&self, token: &str, target: Language) -> Result<String, String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTransliterator;

impl Transliterator for IdentityTransliterator {
    fn name(&self) -> &str {
        "identity"
    }

    fn transliterate(&self, token: &str, _target: Language) -> Result<String, String> {
        Ok(token.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transliteration {
    pub tokens: Vec<String>,
    pub failure: Option<TextError>,
}

/// Applies `transliterator` to every token. If any token fails, the
/// original tokens are returned untouched along with the failure.
pub fn transliterate(
    tokens: &[String],
    target: Language,
    transliterator: &dyn Transliterator,
) -> Transliteration {
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        match transliterator.transliterate(token, target) {
            Ok(t) => out.push(t),
            Err(message) => {
                let failure = TextError::TransliteratorFailure {
                    name: transliterator.name().to_string(),
                    token: token.clone(),
                    message,
                };
                log::warn!("{failure}; keeping row untransliterated");
                return Transliteration {
                    tokens: tokens.to_vec(),
                    failure: Some(failure),
                };
            }
        }
    }
    Transliteration {
        tokens: out,
        failure: None,
    }
}

/// Language-aware token normalisation on top of [`clean`].
///
/// For Devanagari-script languages, Latin tokens are passed through the
/// transliterator and, with `script_filter` on, only tokens whose dominant
/// script is Devanagari are kept (this drops Arabic and leftover Latin runs).
#[derive(Clone)]
pub struct Preprocessor {
    pub transliterator: Arc<dyn Transliterator>,
    pub script_filter: bool,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            transliterator: Arc::new(IdentityTransliterator),
            script_filter: true,
        }
    }
}

impl fmt::Debug for Preprocessor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Preprocessor")
            .field("transliterator", &self.transliterator.name())
            .field("script_filter", &self.script_filter)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub clean: CleanPost,
    /// Final token stream fed to the text encoder.
    pub tokens: Vec<String>,
    pub warnings: Vec<TextError>,
}

impl Preprocessor {
    pub fn process(&self, post: &RawPost) -> Processed {
        let mut warnings = Vec::new();
        let clean = match clean(post) {
            Ok(c) => c,
            Err(TextError::AllContentRemoved(c)) => {
                warnings.push(TextError::AllContentRemoved(c.clone()));
                *c
            }
            Err(e) => unreachable!("clean only reports AllContentRemoved, got {e}"),
        };
        let tokens = match post.language.native_script() {
            Script::Devanagari => {
                let (latin, positions): (Vec<String>, Vec<usize>) = clean
                    .tokens
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| dominant_script(t) == Some(Script::Latin))
                    .map(|(i, t)| (t.clone(), i))
                    .unzip();
                let mut tokens = clean.tokens.clone();
                let result = transliterate(&latin, post.language, self.transliterator.as_ref());
                for (pos, t) in positions.into_iter().zip(result.tokens) {
                    tokens[pos] = t;
                }
                warnings.extend(result.failure);
                if self.script_filter {
                    filter_script(&tokens, Script::Devanagari)
                } else {
                    tokens
                }
            }
            _ => clean.tokens.clone(),
        };
        Processed {
            clean,
            tokens,
            warnings,
        }
    }
}
