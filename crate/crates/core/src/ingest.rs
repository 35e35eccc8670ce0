//! JSONL dump parsing, corpus assembly, conversation-level splits, and
//! balanced binary datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{Category, Comment, ConversationTree, TreeError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("dump contains no records")]
    EmptyDump,
    #[error("no comments tagged '{0}'")]
    NoPositives(Category),
    #[error("no comments tagged with a category other than '{0}'")]
    NoNegatives(Category),
    #[error("need at least 3 conversations to split, got {0}")]
    TooFewConversations(usize),
    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    InvalidSplit([f64; 3]),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("example refers to unknown conversation '{0}'")]
    UnknownConversation(String),
    #[error("conversation '{conversation}': {source}")]
    Tree {
        conversation: String,
        #[source]
        source: TreeError,
    },
}

impl IngestError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Wire form of one comment; field names are fixed by the dump format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpRecord {
    pub id: String,
    pub parent_id: Option<String>,
    pub conversation_id: String,
    pub timestamp: i64,
    pub author: String,
    pub text: String,
    pub categories: Vec<String>,
    pub score: Option<i64>,
}

impl DumpRecord {
    pub fn into_comment(self) -> Result<Comment, String> {
        let c = Comment {
            categories: self.categories.iter().map(|s| Category::parse_lenient(s)).collect(),
            id: self.id,
            parent_id: self.parent_id,
            conversation_id: self.conversation_id,
            timestamp: self.timestamp,
            author: self.author,
            text: self.text,
            score: self.score,
        };
        if c.conversation_id.is_empty() {
            return Err("empty conversation_id".into());
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

impl From<&Comment> for DumpRecord {
    fn from(c: &Comment) -> Self {
        DumpRecord {
            id: c.id.clone(),
            parent_id: c.parent_id.clone(),
            conversation_id: c.conversation_id.clone(),
            timestamp: c.timestamp,
            author: c.author.clone(),
            text: c.text.clone(),
            categories: c.categories.iter().map(|c| c.as_str().to_owned()).collect(),
            score: c.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
}

/// Comments grouped by conversation, plus the lines that failed to parse.
#[derive(Debug, Clone, Default)]
pub struct ParsedDump {
    pub conversations: BTreeMap<String, Vec<Comment>>,
    pub errors: Vec<RecordError>,
}

impl ParsedDump {
    pub fn n_comments(&self) -> usize {
        self.conversations.values().map(Vec::len).sum()
    }
}

/// Parse a JSONL dump, failing on the first malformed line.
pub fn parse_dump(path: &Path) -> Result<ParsedDump, IngestError> {
    let parsed = parse_dump_lenient(path)?;
    if let Some(e) = parsed.errors.first() {
        return Err(IngestError::MalformedRecord {
            line: e.line,
            reason: e.reason.clone(),
        });
    }
    Ok(parsed)
}

/// Parse a JSONL dump, collecting malformed lines instead of stopping.
/// Blank lines are skipped; line numbers are 1-based.
pub fn parse_dump_lenient(path: &Path) -> Result<ParsedDump, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    parse_dump_reader(BufReader::new(file)).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::io(path, source),
        other => other,
    })
}

pub fn parse_dump_reader<R: BufRead>(reader: R) -> Result<ParsedDump, IngestError> {
    let mut out = ParsedDump::default();
    let mut records = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(Path::new("<reader>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        let parsed = serde_json::from_str::<DumpRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(DumpRecord::into_comment);
        match parsed {
            Ok(c) => out.conversations.entry(c.conversation_id.clone()).or_default().push(c),
            Err(reason) => out.errors.push(RecordError { line: i + 1, reason }),
        }
    }
    if records == 0 {
        return Err(IngestError::EmptyDump);
    }
    for comments in out.conversations.values_mut() {
        comments.sort_by(|a, b| a.id.cmp(&b.id));
    }
    Ok(out)
}

pub fn write_dump<'a>(path: &Path, trees: impl IntoIterator<Item = &'a ConversationTree>) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in trees {
        for c in t.comments() {
            let line = serde_json::to_string(&DumpRecord::from(c)).expect("records always serialise");
            writeln!(w, "{line}").map_err(|e| IngestError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

/// All conversations of a dump as validated trees, keyed by conversation id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    trees: BTreeMap<String, ConversationTree>,
}

impl Corpus {
    pub fn from_trees(trees: impl IntoIterator<Item = ConversationTree>) -> Self {
        Corpus {
            trees: trees
                .into_iter()
                .map(|t| (t.conversation_id().to_owned(), t))
                .collect(),
        }
    }

    /// Build every conversation; conversations that fail validation are
    /// returned alongside rather than aborting the whole corpus.
    pub fn build(parsed: ParsedDump) -> (Corpus, Vec<(String, TreeError)>) {
        let mut trees = BTreeMap::new();
        let mut failures = Vec::new();
        for (conv, comments) in parsed.conversations {
            match ConversationTree::build(comments) {
                Ok(t) => {
                    trees.insert(conv, t);
                }
                Err(e) => failures.push((conv, e)),
            }
        }
        (Corpus { trees }, failures)
    }

    /// Strict variant: any invalid conversation is an error.
    pub fn build_strict(parsed: ParsedDump) -> Result<Corpus, IngestError> {
        let (corpus, failures) = Corpus::build(parsed);
        match failures.into_iter().next() {
            Some((conversation, source)) => Err(IngestError::Tree { conversation, source }),
            None => Ok(corpus),
        }
    }

    pub fn load(path: &Path) -> Result<Corpus, IngestError> {
        Corpus::build_strict(parse_dump(path)?)
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn n_comments(&self) -> usize {
        self.trees.values().map(ConversationTree::len).sum()
    }

    pub fn get(&self, conversation_id: &str) -> Option<&ConversationTree> {
        self.trees.get(conversation_id)
    }

    pub fn tree(&self, conversation_id: &str) -> Result<&ConversationTree, IngestError> {
        self.get(conversation_id)
            .ok_or_else(|| IngestError::UnknownConversation(conversation_id.to_owned()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.trees.keys().map(String::as_str)
    }

    pub fn trees(&self) -> impl Iterator<Item = &ConversationTree> {
        self.trees.values()
    }

    /// Sub-corpus restricted to `ids` (unknown ids are ignored).
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Corpus {
        Corpus {
            trees: ids
                .into_iter()
                .filter_map(|id| self.trees.get(id).map(|t| (id.clone(), t.clone())))
                .collect(),
        }
    }

    /// Number of comments carrying each known category.
    pub fn category_counts(&self) -> BTreeMap<Category, usize> {
        let mut out = BTreeMap::new();
        for c in self.trees.values().flat_map(|t| t.comments()) {
            for cat in &c.categories {
                *out.entry(*cat).or_insert(0) += 1;
            }
        }
        out
    }
}

/// One (conversation, target, label) training or evaluation item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub conversation_id: String,
    pub target_id: String,
    pub label: u8,
    /// Category the label refers to; absent for synthetic corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledExample>, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = serde_json::from_str(&line).map_err(|e| IngestError::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if ex.label > 1 {
            return Err(IngestError::MalformedRecord {
                line: i + 1,
                reason: format!("label must be 0 or 1, got {}", ex.label),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, examples: &[LabeledExample]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("examples always serialise");
        writeln!(w, "{line}").map_err(|e| IngestError::io(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

/// Check that every example resolves to a comment in `corpus`.
pub fn validate_examples(corpus: &Corpus, examples: &[LabeledExample]) -> Result<(), IngestError> {
    for ex in examples {
        let tree = corpus.tree(&ex.conversation_id)?;
        tree.index_of(&ex.target_id).map_err(|source| IngestError::Tree {
            conversation: ex.conversation_id.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Balanced positive/negative examples for one category.
///
/// Positives are comments tagged `category`; negatives are comments carrying
/// some other recognised tag and not `category` itself. Untagged comments are
/// never used. When one side is larger it is subsampled to the size of the
/// other, and the result is shuffled; everything is driven by `seed`.
pub fn build_binary_dataset<'a>(
    trees: impl IntoIterator<Item = &'a ConversationTree>,
    category: Category,
    seed: u64,
) -> Result<Vec<LabeledExample>, IngestError> {
    if category == Category::Unknown {
        return Err(IngestError::InvalidConfig("cannot build a dataset for 'unknown'".into()));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for t in trees {
        for c in t.comments() {
            let item = (c.conversation_id.clone(), c.id.clone());
            if c.categories.contains(&category) {
                pos.push(item);
            } else if c.is_tagged() {
                neg.push(item);
            }
        }
    }
    if pos.is_empty() {
        return Err(IngestError::NoPositives(category));
    }
    if neg.is_empty() {
        return Err(IngestError::NoNegatives(category));
    }
    pos.sort();
    neg.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pos.len().min(neg.len());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out: Vec<LabeledExample> = pos
        .into_iter()
        .take(n)
        .map(|p| (p, 1u8))
        .chain(neg.into_iter().take(n).map(|q| (q, 0u8)))
        .map(|((conversation_id, target_id), label)| LabeledExample {
            conversation_id,
            target_id,
            label,
            category: Some(category),
        })
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self, IngestError> {
        let sum: f64 = ratios.iter().sum();
        if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(IngestError::InvalidSplit(ratios));
        }
        Ok(SplitSpec { ratios, seed })
    }

    /// 80:10:10
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            ratios: [0.8, 0.1, 0.1],
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffle conversation ids with the spec seed and cut them by ratio.
/// Train and validation sizes are rounded; test takes the remainder.
pub fn split_conversations<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    spec: &SplitSpec,
) -> Result<Split, IngestError> {
    let spec = SplitSpec::new(spec.ratios, spec.seed)?;
    let mut ids: Vec<String> = ids.into_iter().map(str::to_owned).collect::<BTreeSet<_>>().into_iter().collect();
    let n = ids.len();
    if n < 3 {
        return Err(IngestError::TooFewConversations(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);
    let n_train = ((spec.ratios[0] * n as f64).round() as usize).min(n);
    let n_val = ((spec.ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Ok(Split {
        train: ids,
        validation,
        test,
    })
}

/// Select the examples whose conversation is in `ids`.
pub fn examples_in(examples: &[LabeledExample], ids: &[String]) -> Vec<LabeledExample> {
    let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    examples
        .iter()
        .filter(|e| set.contains(e.conversation_id.as_str()))
        .cloned()
        .collect()
}
