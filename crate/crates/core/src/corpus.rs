//! HASOC-style dataset ingestion, class statistics, stratified splits,
//! multilingual concatenation and similarity-based resampling.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::textprep::Language;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8 (byte {offset})")]
    EncodingError { path: String, offset: usize },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {reason}")]
    BadLabel { row: usize, reason: String },
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("class {0} has no rows")]
    DegenerateClass(String),
    #[error("task 1B labels are missing for {0} rows")]
    MissingTask2(usize),
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task1 {
    #[serde(rename = "NOT")]
    Not,
    #[serde(rename = "HOF")]
    Hof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task2 {
    #[serde(rename = "NONE")]
    None,
    #[serde(rename = "HATE")]
    Hate,
    #[serde(rename = "OFFN")]
    Offn,
    #[serde(rename = "PRFN")]
    Prfn,
}

impl Task1 {
    pub const ALL: [Task1; 2] = [Task1::Not, Task1::Hof];

    pub fn as_str(self) -> &'static str {
        match self {
            Task1::Not => "NOT",
            Task1::Hof => "HOF",
        }
    }
}

impl Task2 {
    pub const ALL: [Task2; 4] = [Task2::None, Task2::Hate, Task2::Offn, Task2::Prfn];

    pub fn as_str(self) -> &'static str {
        match self {
            Task2::None => "NONE",
            Task2::Hate => "HATE",
            Task2::Offn => "OFFN",
            Task2::Prfn => "PRFN",
        }
    }
}

impl FromStr for Task1 {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "NOT" => Ok(Task1::Not),
            "HOF" => Ok(Task1::Hof),
            other => Err(format!("task_1 `{other}` is not HOF or NOT")),
        }
    }
}

impl FromStr for Task2 {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "NONE" => Ok(Task2::None),
            "HATE" => Ok(Task2::Hate),
            "OFFN" => Ok(Task2::Offn),
            "PRFN" => Ok(Task2::Prfn),
            other => Err(format!(
                "task_2 `{other}` is not one of HATE, OFFN, PRFN, NONE"
            )),
        }
    }
}

/// Which label column a classifier is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "1a")]
    Task1A,
    #[serde(rename = "1b")]
    Task1B,
}

impl Task {
    /// Label vocabulary in a fixed order.
    pub fn labels(self) -> Vec<String> {
        match self {
            Task::Task1A => Task1::ALL.iter().map(|l| l.as_str().to_string()).collect(),
            Task::Task1B => Task2::ALL.iter().map(|l| l.as_str().to_string()).collect(),
        }
    }

    pub fn label_of(self, row: &Row) -> Option<&'static str> {
        match self {
            Task::Task1A => Some(row.task_1.as_str()),
            Task::Task1B => row.task_2.map(Task2::as_str),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Task1A => "1a",
            Task::Task1B => "1b",
        })
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1a" | "task1a" | "a" => Ok(Task::Task1A),
            "1b" | "task1b" | "b" => Ok(Task::Task1B),
            other => Err(format!("unknown task `{other}` (expected 1a or 1b)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub hasoc_id: String,
    pub tweet_id: String,
    pub text: String,
    pub task_1: Task1,
    /// Absent for datasets without the fine-grained task (Marathi).
    pub task_2: Option<Task2>,
    /// Language of the source file; kept per row so combined datasets can
    /// still be preprocessed language by language.
    pub language: Language,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetLanguage {
    Single(Language),
    Multi,
}

impl fmt::Display for DatasetLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetLanguage::Single(l) => write!(f, "{l}"),
            DatasetLanguage::Multi => f.write_str("multi"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<PathBuf>,
    /// Field delimiter detected per source (`,` or `\t`).
    pub delimiters: Vec<char>,
    pub duplicate_tweet_ids: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub language: DatasetLanguage,
    pub rows: Vec<Row>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(language: Language, rows: Vec<Row>) -> Self {
        LabeledDataset {
            language: DatasetLanguage::Single(language),
            rows,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn derived(&self, rows: Vec<Row>) -> Self {
        LabeledDataset {
            language: self.language,
            rows,
            provenance: self.provenance.clone(),
        }
    }
}

/// Accepted header names for each logical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnAliases {
    pub hasoc_id: Vec<String>,
    pub tweet_id: Vec<String>,
    pub text: Vec<String>,
    pub task_1: Vec<String>,
    pub task_2: Vec<String>,
}

impl Default for ColumnAliases {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        ColumnAliases {
            hasoc_id: v(&["hasoc_id", "_id", "id"]),
            tweet_id: v(&["tweet_id"]),
            text: v(&["text", "tweet"]),
            task_1: v(&["task_1", "task1", "label"]),
            task_2: v(&["task_2", "task2"]),
        }
    }
}

fn find_column(headers: &csv::StringRecord, names: &[String]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| n.eq_ignore_ascii_case(h.trim())))
}

fn read_utf8(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| CorpusError::EncodingError {
        path: path.display().to_string(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    Ok(text
        .strip_prefix('\u{FEFF}')
        .map(str::to_string)
        .unwrap_or(text))
}

/// Tab if the header line contains one, comma otherwise.
fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    language: Language,
) -> Result<LabeledDataset, CorpusError> {
    load_dataset_with(path, language, &ColumnAliases::default())
}

/// Reads a HASOC CSV/TSV. A file with no content yields an empty dataset.
pub fn load_dataset_with(
    path: impl AsRef<Path>,
    language: Language,
    aliases: &ColumnAliases,
) -> Result<LabeledDataset, CorpusError> {
    let path = path.as_ref();
    let text = read_utf8(path)?;
    let delimiter = detect_delimiter(&text);
    let mut provenance = Provenance {
        sources: vec![path.to_path_buf()],
        delimiters: vec![delimiter as char],
        duplicate_tweet_ids: 0,
    };
    if text.trim().is_empty() {
        return Ok(LabeledDataset {
            language: DatasetLanguage::Single(language),
            rows: Vec::new(),
            provenance,
        });
    }
    let rows = parse_rows(&text, delimiter, language, aliases)?;

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in &rows {
        *seen.entry(r.tweet_id.as_str()).or_default() += 1;
    }
    provenance.duplicate_tweet_ids = seen.values().filter(|&&n| n > 1).count();
    if provenance.duplicate_tweet_ids > 0 {
        log::warn!(
            "{}: {} tweet ids occur more than once",
            path.display(),
            provenance.duplicate_tweet_ids
        );
    }
    Ok(LabeledDataset {
        language: DatasetLanguage::Single(language),
        rows,
        provenance,
    })
}

fn parse_rows(
    text: &str,
    delimiter: u8,
    language: Language,
    aliases: &ColumnAliases,
) -> Result<Vec<Row>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |names: &[String], logical: &str| {
        find_column(&headers, names).ok_or_else(|| CorpusError::MissingColumn(logical.to_string()))
    };
    let id_col = col(&aliases.hasoc_id, "hasoc_id")?;
    let tweet_col = col(&aliases.tweet_id, "tweet_id")?;
    let text_col = col(&aliases.text, "text")?;
    let t1_col = col(&aliases.task_1, "task_1")?;
    let t2_col = find_column(&headers, &aliases.task_2);

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Row numbers count data rows from 1, header excluded.
        let row_no = i + 1;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("").trim().to_string();
        let hasoc_id = field(id_col);
        let tweet_id = field(tweet_col);
        if hasoc_id.is_empty() || tweet_id.is_empty() {
            return Err(CorpusError::BadRow {
                row: row_no,
                reason: "empty id".into(),
            });
        }
        let task_1: Task1 = field(t1_col)
            .parse()
            .map_err(|reason| CorpusError::BadLabel {
                row: row_no,
                reason,
            })?;
        let task_2 = match t2_col.map(field).filter(|s| !s.is_empty() && s != "-") {
            None => None,
            Some(s) => Some(s.parse::<Task2>().map_err(|reason| CorpusError::BadLabel {
                row: row_no,
                reason,
            })?),
        };
        let consistent = match (task_1, task_2) {
            (Task1::Not, Some(t)) => t == Task2::None,
            (Task1::Hof, Some(t)) => t != Task2::None,
            (_, None) => true,
        };
        if !consistent {
            return Err(CorpusError::BadLabel {
                row: row_no,
                reason: format!(
                    "task_1 {} conflicts with task_2 {}",
                    task_1.as_str(),
                    task_2.unwrap().as_str()
                ),
            });
        }
        rows.push(Row {
            hasoc_id,
            tweet_id,
            text: record.get(text_col).unwrap_or("").to_string(),
            task_1,
            task_2,
            language,
        });
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 5] = ["hasoc_id", "tweet_id", "text", "task_1", "task_2"];

/// Writes rows in the canonical comma-separated layout.
pub fn write_dataset(dataset: &LabeledDataset, out: impl Write) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &dataset.rows {
        w.write_record([
            r.hasoc_id.as_str(),
            r.tweet_id.as_str(),
            r.text.as_str(),
            r.task_1.as_str(),
            r.task_2.map_or("", Task2::as_str),
        ])?;
    }
    w.flush().map_err(|e| CorpusError::Io {
        path: "<output>".into(),
        source: e,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub hof: usize,
    pub not: usize,
    pub hate: usize,
    pub offn: usize,
    pub prfn: usize,
    pub none: usize,
    /// Rows without a task_2 label.
    pub task2_missing: usize,
    pub total: usize,
}

impl ClassStats {
    pub fn has_task2(&self) -> bool {
        self.total > 0 && self.task2_missing < self.total
    }
}

impl fmt::Display for ClassStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "HOF {} / NOT {}", self.hof, self.not)?;
        if self.has_task2() {
            writeln!(
                f,
                "HATE {} / OFFN {} / PRFN {} / NONE {}",
                self.hate, self.offn, self.prfn, self.none
            )?;
        } else {
            writeln!(f, "HATE - / OFFN - / PRFN - / NONE -")?;
        }
        write!(f, "TOTAL {}", self.total)
    }
}

pub fn class_stats(dataset: &LabeledDataset) -> ClassStats {
    let mut s = ClassStats {
        total: dataset.len(),
        ..ClassStats::default()
    };
    for r in &dataset.rows {
        match r.task_1 {
            Task1::Hof => s.hof += 1,
            Task1::Not => s.not += 1,
        }
        match r.task_2 {
            Some(Task2::Hate) => s.hate += 1,
            Some(Task2::Offn) => s.offn += 1,
            Some(Task2::Prfn) => s.prfn += 1,
            Some(Task2::None) => s.none += 1,
            None => s.task2_missing += 1,
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    /// False when some label had fewer than two rows and the split fell back
    /// to an unstratified one.
    pub stratified: bool,
}

/// Indices of a stratified validation split over `labels`.
///
/// The validation size is `round(n * fraction)` (at least one row, at most
/// `n - 1`, when `n >= 2`) and is shared among labels by largest remainder,
/// so every label lands within one row of its proportional share.
pub fn split_indices<L: Ord + Clone>(
    labels: &[L],
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, bool) {
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val_n = (n as f64 * val_fraction).round() as usize;
    if n >= 2 {
        val_n = val_n.clamp(1, n - 1);
    } else {
        val_n = 0;
    }

    let mut groups: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.clone()).or_default().push(i);
    }
    let stratified = groups.values().all(|g| g.len() >= 2);
    if !stratified {
        log::warn!("a label has fewer than 2 rows; falling back to an unstratified split");
        groups = BTreeMap::new();
        groups.insert(
            labels.first().cloned().unwrap_or_else(|| unreachable!()),
            (0..n).collect(),
        );
    }

    let quotas: Vec<(f64, usize)> = groups
        .values()
        .map(|g| {
            let exact = g.len() as f64 * val_n as f64 / n.max(1) as f64;
            (exact, exact.floor() as usize)
        })
        .collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.1).collect();
    let mut short = val_n - take.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a].0 - quotas[a].1 as f64;
        let rb = quotas[b].0 - quotas[b].1 as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &g in order.iter().cycle() {
        if short == 0 {
            break;
        }
        if take[g] < groups.values().nth(g).unwrap().len() {
            take[g] += 1;
            short -= 1;
        }
    }

    let mut val = Vec::with_capacity(val_n);
    for (members, k) in groups.values().zip(take) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        val.extend_from_slice(&shuffled[..k]);
    }
    val.sort_unstable();
    let mut in_val = vec![false; n];
    for &i in &val {
        in_val[i] = true;
    }
    let train = (0..n).filter(|&i| !in_val[i]).collect();
    (train, val, stratified)
}

/// Stratified train/validation split on the task's label. Rows without a
/// label for the task are stratified as their own group.
pub fn split(
    dataset: &LabeledDataset,
    task: Task,
    val_fraction: f64,
    seed: u64,
) -> Result<Split, CorpusError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(CorpusError::BadFraction(val_fraction));
    }
    let labels: Vec<Option<&str>> = dataset.rows.iter().map(|r| task.label_of(r)).collect();
    let (train, val, stratified) = split_indices(&labels, val_fraction, seed);
    let pick =
        |idx: &[usize]| dataset.derived(idx.iter().map(|&i| dataset.rows[i].clone()).collect());
    Ok(Split {
        train: pick(&train),
        val: pick(&val),
        stratified,
    })
}

/// Concatenates datasets in order; the result is tagged multilingual unless
/// there is exactly one input.
pub fn combine(datasets: &[LabeledDataset]) -> LabeledDataset {
    if let [only] = datasets {
        return only.clone();
    }
    let mut provenance = Provenance::default();
    let mut rows = Vec::new();
    for d in datasets {
        rows.extend(d.rows.iter().cloned());
        provenance
            .sources
            .extend(d.provenance.sources.iter().cloned());
        provenance
            .delimiters
            .extend(d.provenance.delimiters.iter().copied());
        provenance.duplicate_tweet_ids += d.provenance.duplicate_tweet_ids;
    }
    LabeledDataset {
        language: DatasetLanguage::Multi,
        rows,
        provenance,
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Similarity-based oversampling and undersampling.
///
/// Every class of the task vocabulary is brought to the mean class size
/// (rounded). Smaller classes are grown by duplicating members in order of
/// decreasing cosine similarity to the class centroid, cycling as needed.
/// Larger classes shrink by repeatedly dropping one member of the most
/// similar remaining within-class pair (the later row of the pair). Kept
/// rows stay in their original order; duplicates are appended per class.
pub fn soup_resample<F>(
    dataset: &LabeledDataset,
    task: Task,
    embed: F,
    seed: u64,
) -> Result<LabeledDataset, CorpusError>
where
    F: Fn(&Row) -> Vec<f64> + Sync + Send,
{
    soup_resample_with(dataset, task, embed, seed, Execution::default())
}

pub fn soup_resample_with<F>(
    dataset: &LabeledDataset,
    task: Task,
    embed: F,
    seed: u64,
    exec: Execution,
) -> Result<LabeledDataset, CorpusError>
where
    F: Fn(&Row) -> Vec<f64> + Sync + Send,
{
    let missing = dataset
        .rows
        .iter()
        .filter(|r| task.label_of(r).is_none())
        .count();
    if missing > 0 {
        return Err(CorpusError::MissingTask2(missing));
    }
    let vocab = task.labels();
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); vocab.len()];
    for (i, r) in dataset.rows.iter().enumerate() {
        let l = task.label_of(r).expect("checked above");
        classes[vocab
            .iter()
            .position(|v| v == l)
            .expect("task labels are closed")]
        .push(i);
    }
    if let Some(empty) = classes.iter().position(Vec::is_empty) {
        return Err(CorpusError::DegenerateClass(vocab[empty].clone()));
    }
    let target = (dataset.len() as f64 / classes.len() as f64).round() as usize;
    let vectors: Vec<Vec<f64>> = exec::map(exec, &dataset.rows, |r| normalized(&embed(r)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut keep = vec![true; dataset.len()];
    let mut extra: Vec<usize> = Vec::new();
    for members in &classes {
        if members.len() < target {
            let dim = vectors[members[0]].len();
            let mut centroid = vec![0.0; dim];
            for &i in members {
                for (c, x) in centroid.iter_mut().zip(&vectors[i]) {
                    *c += x;
                }
            }
            let centroid = normalized(&centroid);
            let mut order = members.clone();
            order.shuffle(&mut rng);
            order.sort_by(|&a, &b| {
                dot(&vectors[b], &centroid)
                    .partial_cmp(&dot(&vectors[a], &centroid))
                    .unwrap()
            });
            extra.extend(order.iter().cycle().take(target - members.len()));
        } else if members.len() > target {
            for i in redundant_members(members, &vectors, members.len() - target, exec) {
                keep[i] = false;
            }
        }
    }

    let mut rows: Vec<Row> = (0..dataset.len())
        .filter(|&i| keep[i])
        .map(|i| dataset.rows[i].clone())
        .collect();
    rows.extend(extra.into_iter().map(|i| dataset.rows[i].clone()));
    Ok(dataset.derived(rows))
}

/// Members removed, in removal order, when shrinking a class by `count`.
fn redundant_members(
    members: &[usize],
    vectors: &[Vec<f64>],
    count: usize,
    exec: Execution,
) -> Vec<usize> {
    let m = members.len();
    let sim = |a: usize, b: usize| dot(&vectors[members[a]], &vectors[members[b]]);
    let nearest = |a: usize, alive: &[bool]| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (b, &live) in alive.iter().enumerate() {
            if b != a && live {
                let s = sim(a, b);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((b, s));
                }
            }
        }
        best
    };
    let mut alive = vec![true; m];
    let positions: Vec<usize> = (0..m).collect();
    let mut nn: Vec<Option<(usize, f64)>> = exec::map(exec, &positions, |&a| nearest(a, &alive));

    let mut removed = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..m {
            if let (true, Some((b, s))) = (alive[a], nn[a]) {
                if best.is_none_or(|(_, _, bs)| s > bs) {
                    best = Some((a, b, s));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        let victim = a.max(b);
        alive[victim] = false;
        removed.push(members[victim]);
        for x in 0..m {
            if alive[x] && nn[x].is_some_and(|(y, _)| y == victim) {
                nn[x] = nearest(x, &alive);
            }
        }
        nn[victim] = None;
    }
    removed
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(id: usize, t1: Task1, t2: Option<Task2>) -> Row {
        Row {
            hasoc_id: format!("h{id}"),
            tweet_id: format!("{id}"),
            text: format!("text {id}"),
            task_1: t1,
            task_2: t2,
            language: Language::En,
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_row_fixture() {
        let f = write_tmp(
            "_id,tweet_id,text,task_1,task_2,extra\n\
             h1,1,\"hello, world\",NOT,NONE,x\n\
             h2,2,#IPL2019Final rocks,HOF,PRFN,y\n\
             h3,3,\"quoted \"\"word\"\"\",HOF,HATE,z\n",
        );
        let d = load_dataset(f.path(), Language::En).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.rows[0].text, "hello, world");
        assert_eq!(d.rows[1].task_2, Some(Task2::Prfn));
        assert_eq!(d.rows[2].text, "quoted \"word\"");
        assert_eq!(d.provenance.delimiters, vec![',']);
    }

    #[test]
    fn detects_tabs_and_optional_task2() {
        let f = write_tmp("hasoc_id\ttweet_id\ttext\ttask_1\nm1\t10\tपोस्ट\tHOF\n");
        let d = load_dataset(f.path(), Language::Mr).unwrap();
        assert_eq!(d.rows[0].task_2, None);
        assert_eq!(d.provenance.delimiters, vec!['\t']);
    }

    #[test]
    fn load_errors() {
        let f = write_tmp("hasoc_id,tweet_id,text,task_1\nh1,1,x,MAYBE\n");
        assert!(matches!(
            load_dataset(f.path(), Language::En),
            Err(CorpusError::BadLabel { row: 1, .. })
        ));
        let f = write_tmp("hasoc_id,tweet_id,task_1\nh1,1,NOT\n");
        assert!(
            matches!(load_dataset(f.path(), Language::En), Err(CorpusError::MissingColumn(c)) if c == "text")
        );
        let f = write_tmp("hasoc_id,tweet_id,text,task_1,task_2\nh1,1,x,NOT,HATE\n");
        assert!(matches!(
            load_dataset(f.path(), Language::En),
            Err(CorpusError::BadLabel { .. })
        ));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"hasoc_id,tweet_id,text,task_1\nh1,1,\xff\xfe,NOT\n")
            .unwrap();
        assert!(matches!(
            load_dataset(f.path(), Language::En),
            Err(CorpusError::EncodingError { .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let f = write_tmp("");
        let d = load_dataset(f.path(), Language::Hi).unwrap();
        assert!(d.is_empty());
        assert_eq!(class_stats(&d), ClassStats::default());
    }

    #[test]
    fn duplicate_tweet_ids_are_counted() {
        let f = write_tmp("hasoc_id,tweet_id,text,task_1\nh1,1,a,NOT\nh2,1,b,HOF\n");
        let d = load_dataset(f.path(), Language::En).unwrap();
        assert_eq!(d.provenance.duplicate_tweet_ids, 1);
    }

    #[test]
    fn stats_count_every_cell() {
        let rows = vec![
            row(1, Task1::Hof, Some(Task2::Hate)),
            row(2, Task1::Hof, Some(Task2::Prfn)),
            row(3, Task1::Not, Some(Task2::None)),
            row(4, Task1::Not, None),
        ];
        let s = class_stats(&LabeledDataset::new(Language::En, rows));
        assert_eq!(
            (
                s.hof,
                s.not,
                s.hate,
                s.prfn,
                s.none,
                s.task2_missing,
                s.total
            ),
            (2, 2, 1, 1, 1, 1, 4)
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let rows: Vec<Row> = (0..100)
            .map(|i| row(i, if i % 3 == 0 { Task1::Hof } else { Task1::Not }, None))
            .collect();
        let d = LabeledDataset::new(Language::En, rows);
        let s = split(&d, Task::Task1A, 0.2, 5).unwrap();
        assert_eq!((s.train.len(), s.val.len()), (80, 20));
        assert!(s.stratified);
        let hof_val = s.val.rows.iter().filter(|r| r.task_1 == Task1::Hof).count() as f64;
        assert!((hof_val - 34.0 * 0.2).abs() <= 1.0);
        assert_eq!(split(&d, Task::Task1A, 0.2, 5).unwrap(), s);
        assert_ne!(split(&d, Task::Task1A, 0.2, 6).unwrap().val, s.val);
    }

    #[test]
    fn split_falls_back_when_a_class_is_tiny() {
        let mut rows: Vec<Row> = (0..9).map(|i| row(i, Task1::Not, None)).collect();
        rows.push(row(9, Task1::Hof, None));
        let s = split(
            &LabeledDataset::new(Language::En, rows),
            Task::Task1A,
            0.2,
            1,
        )
        .unwrap();
        assert!(!s.stratified);
        assert_eq!(s.train.len() + s.val.len(), 10);
        assert_eq!(s.val.len(), 2);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = LabeledDataset::new(Language::En, vec![]);
        assert!(matches!(
            split(&d, Task::Task1A, 1.0, 0),
            Err(CorpusError::BadFraction(_))
        ));
    }

    #[test]
    fn combine_concatenates() {
        let a = LabeledDataset::new(
            Language::En,
            vec![row(1, Task1::Hof, None), row(2, Task1::Not, None)],
        );
        let b = LabeledDataset::new(
            Language::Hi,
            vec![row(3, Task1::Hof, None), row(4, Task1::Not, None)],
        );
        assert_eq!(combine(std::slice::from_ref(&a)), a);
        let c = combine(&[a, b]);
        assert_eq!(c.language, DatasetLanguage::Multi);
        let ids: Vec<&str> = c.rows.iter().map(|r| r.tweet_id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3", "4"]);
    }

    #[test]
    fn write_then_load_preserves_rows() {
        let d = LabeledDataset::new(
            Language::En,
            vec![
                row(1, Task1::Hof, Some(Task2::Offn)),
                row(2, Task1::Not, None),
            ],
        );
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let f = write_tmp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(load_dataset(f.path(), Language::En).unwrap().rows, d.rows);
    }

    fn counts(d: &LabeledDataset) -> (usize, usize) {
        let s = class_stats(d);
        (s.hof, s.not)
    }

    #[test]
    fn soup_balances_to_mean() {
        let mut rows: Vec<Row> = (0..8).map(|i| row(i, Task1::Not, None)).collect();
        rows.extend((8..12).map(|i| row(i, Task1::Hof, None)));
        let d = LabeledDataset::new(Language::En, rows);
        let embed = |r: &Row| {
            let i: f64 = r.tweet_id.parse().unwrap();
            vec![i.cos(), i.sin()]
        };
        let out = soup_resample(&d, Task::Task1A, embed, 3).unwrap();
        assert_eq!(counts(&out), (6, 6));
        assert_eq!(out, soup_resample(&d, Task::Task1A, embed, 3).unwrap());
    }

    #[test]
    fn soup_leaves_balanced_input_alone() {
        let rows: Vec<Row> = (0..6)
            .map(|i| row(i, if i % 2 == 0 { Task1::Hof } else { Task1::Not }, None))
            .collect();
        let d = LabeledDataset::new(Language::En, rows);
        let out = soup_resample(&d, Task::Task1A, |_| vec![1.0, 0.0], 0).unwrap();
        assert_eq!(out.rows, d.rows);
    }

    #[test]
    fn soup_rejects_missing_class() {
        let d = LabeledDataset::new(Language::En, vec![row(1, Task1::Hof, None)]);
        assert!(matches!(
            soup_resample(&d, Task::Task1A, |_| vec![1.0], 0),
            Err(CorpusError::DegenerateClass(c)) if c == "NOT"
        ));
    }
}
