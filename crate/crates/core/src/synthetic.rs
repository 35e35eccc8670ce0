//! Planted-signal corpora.
//!
//! Each conversation gets one target. For positives a signal token is planted
//! in one comment of the target's signal-zone window; negatives carry no
//! signal anywhere in the tree. The target's own text never contains it, so
//! the label is unrecoverable from the target alone.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::tokenize;
use crate::ingest::{Corpus, IngestError, LabeledExample};
use crate::kernel::{KernelShape, WindowKind, DEFAULT_WINDOW_SIZE};
use crate::tree::{Comment, ConversationTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_trees: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability that a new comment replies to a uniformly chosen earlier
    /// comment; otherwise it replies to the most recent one.
    pub branching_bias: f64,
    pub signal_zone: WindowKind,
    pub signal_token: String,
    pub label_noise: f64,
    pub window_size: usize,
    pub vocab_size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_trees: 100,
            min_nodes: 6,
            max_nodes: 30,
            branching_bias: 0.6,
            signal_zone: WindowKind::Ancestor,
            signal_token: "zyzzyva".into(),
            label_noise: 0.0,
            window_size: DEFAULT_WINDOW_SIZE,
            // a small vocabulary keeps filler words common, so a model cannot
            // memorise trees by their rare words
            vocab_size: 20,
            min_words: 3,
            max_words: 8,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::InvalidConfig(m.to_owned()));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if self.min_nodes < 2 || self.max_nodes < self.min_nodes {
            return bad("node range must satisfy 2 <= min_nodes <= max_nodes");
        }
        if !(0.0..=1.0).contains(&self.branching_bias) {
            return bad("branching_bias must lie in [0, 1]");
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad("label_noise must lie in [0, 0.5)");
        }
        if self.min_words == 0 || self.max_words < self.min_words {
            return bad("word range must satisfy 1 <= min_words <= max_words");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        KernelShape::new(self.signal_zone.family(), self.window_size)
            .map_err(|e| IngestError::InvalidConfig(e.to_string()))?;
        let toks = tokenize(&self.signal_token);
        if toks.len() != 1 || toks[0] != self.signal_token {
            return bad("signal_token must be a single lowercase alphanumeric token");
        }
        if vocabulary(self.vocab_size).contains(&self.signal_token) {
            return bad("signal_token collides with the filler vocabulary");
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 20] = [
    "ba", "ko", "mi", "tu", "re", "sa", "lo", "ni", "pe", "da", "fu", "gi", "ha", "je", "ku", "ma", "no", "pi", "ro", "te",
];

/// Deterministic pronounceable filler words (two or three syllables).
pub fn vocabulary(size: usize) -> Vec<String> {
    (0..size)
        .map(|i| {
            let n = SYLLABLES.len();
            let mut w = String::new();
            w.push_str(SYLLABLES[i % n]);
            w.push_str(SYLLABLES[(i / n) % n]);
            if i >= n * n {
                w.push_str(SYLLABLES[(i / (n * n)) % n]);
            }
            w
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub examples: Vec<LabeledExample>,
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpus, IngestError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = vocabulary(cfg.vocab_size);
    let zone_shape = KernelShape::new(cfg.signal_zone.family(), cfg.window_size)
        .map_err(|e| IngestError::InvalidConfig(e.to_string()))?;

    let mut labels: Vec<u8> = (0..cfg.n_trees).map(|i| u8::from(i < cfg.n_trees / 2)).collect();
    labels.shuffle(&mut rng);

    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut examples = Vec::with_capacity(cfg.n_trees);
    for (i, &label) in labels.iter().enumerate() {
        let conv = format!("syn-{i:05}");
        let (mut comments, target, zone) = loop {
            let comments = grow_tree(cfg, &conv, &vocab, &mut rng);
            let tree = ConversationTree::build(comments.clone()).expect("generator emits valid trees");
            let candidates: Vec<(usize, Vec<usize>)> = (0..tree.len())
                .filter_map(|n| {
                    let mut zone = cfg.signal_zone.candidates(&tree, n);
                    zone.truncate(zone_shape.window_size);
                    (!zone.is_empty()).then_some((n, zone))
                })
                .collect();
            if let Some((n, zone)) = candidates.choose(&mut rng).cloned() {
                // map tree indices back to generation order
                let target = position(&comments, tree.id_of(n));
                let zone: Vec<usize> = zone.iter().map(|&z| position(&comments, tree.id_of(z))).collect();
                break (comments, target, zone);
            }
        };
        let flip = cfg.label_noise > 0.0 && rng.random_bool(cfg.label_noise);
        let planted = (label == 1) != flip;
        if planted {
            let carrier = *zone.choose(&mut rng).expect("zone is non-empty");
            let c = &mut comments[carrier];
            let mut words: Vec<&str> = c.text.split(' ').collect();
            let at = rng.random_range(0..=words.len());
            words.insert(at, &cfg.signal_token);
            c.text = words.join(" ");
        }
        examples.push(LabeledExample {
            conversation_id: conv,
            target_id: comments[target].id.clone(),
            label,
            category: None,
        });
        trees.push(ConversationTree::build(comments).expect("planting keeps the tree valid"));
    }
    Ok(SyntheticCorpus {
        corpus: Corpus::from_trees(trees),
        examples,
    })
}

fn position(comments: &[Comment], id: &str) -> usize {
    comments.iter().position(|c| c.id == id).expect("id from this tree")
}

fn grow_tree(cfg: &SyntheticConfig, conv: &str, vocab: &[String], rng: &mut ChaCha8Rng) -> Vec<Comment> {
    let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
    let mut out: Vec<Comment> = Vec::with_capacity(n);
    let mut t = 0i64;
    for j in 0..n {
        let parent = match j {
            0 => None,
            _ if rng.random_bool(cfg.branching_bias) => Some(rng.random_range(0..j)),
            _ => Some(j - 1),
        };
        t += rng.random_range(0..=30);
        let n_words = rng.random_range(cfg.min_words..=cfg.max_words);
        let text: Vec<&str> = (0..n_words).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        let mut c = Comment::new(
            format!("{conv}-{j:03}"),
            parent.map(|p| out[p].id.as_str()),
            conv,
            t,
            text.join(" "),
        );
        c.author = format!("user{}", rng.random_range(0..50));
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_dump, write_dump, write_labels};
    use crate::kernel::extract_windows;

    fn has_signal(text: &str, token: &str) -> bool {
        tokenize(text).iter().any(|t| t == token)
    }

    fn check_postcondition(cfg: &SyntheticConfig) {
        let syn = gen_synthetic(cfg).unwrap();
        let shape = KernelShape::new(cfg.signal_zone.family(), cfg.window_size).unwrap();
        let kind_idx = shape.family.kinds().iter().position(|k| *k == cfg.signal_zone).unwrap();
        assert_eq!(syn.examples.len(), cfg.n_trees);
        let pos = syn.examples.iter().filter(|e| e.label == 1).count();
        assert!((pos as i64 - (cfg.n_trees / 2) as i64).abs() <= 1);
        for ex in &syn.examples {
            let tree = syn.corpus.tree(&ex.conversation_id).unwrap();
            let ws = extract_windows(tree, &ex.target_id, &shape).unwrap();
            let zone = &ws.windows[kind_idx];
            assert!(!zone.is_empty());
            let in_zone = zone
                .member_ids
                .iter()
                .any(|id| has_signal(&tree.get(id).unwrap().text, &cfg.signal_token));
            assert_eq!(in_zone, ex.label == 1, "{}", ex.conversation_id);
            assert!(!has_signal(&tree.get(&ex.target_id).unwrap().text, &cfg.signal_token));
            let anywhere = tree.comments().iter().any(|c| has_signal(&c.text, &cfg.signal_token));
            assert_eq!(anywhere, ex.label == 1);
        }
    }

    #[test]
    fn planted_signal_sits_in_the_zone() {
        for zone in WindowKind::ALL {
            check_postcondition(&SyntheticConfig {
                n_trees: 100,
                signal_zone: zone,
                seed: 17,
                ..Default::default()
            });
        }
    }

    #[test]
    fn noise_flips_some_labels_but_keeps_balance() {
        let cfg = SyntheticConfig {
            n_trees: 400,
            label_noise: 0.2,
            seed: 5,
            ..Default::default()
        };
        let syn = gen_synthetic(&cfg).unwrap();
        assert_eq!(syn.examples.iter().filter(|e| e.label == 1).count(), 200);
        let mismatched = syn
            .examples
            .iter()
            .filter(|ex| {
                let tree = syn.corpus.tree(&ex.conversation_id).unwrap();
                let planted = tree.comments().iter().any(|c| has_signal(&c.text, "zyzzyva"));
                planted != (ex.label == 1)
            })
            .count();
        assert!(mismatched > 40 && mismatched < 120, "{mismatched}");
    }

    #[test]
    fn byte_identical_for_same_seed() {
        let cfg = SyntheticConfig {
            n_trees: 30,
            seed: 99,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let mut blobs = Vec::new();
        for run in 0..2 {
            let syn = gen_synthetic(&cfg).unwrap();
            let d = dir.path().join(format!("d{run}.jsonl"));
            let l = dir.path().join(format!("l{run}.jsonl"));
            write_dump(&d, syn.corpus.trees()).unwrap();
            write_labels(&l, &syn.examples).unwrap();
            blobs.push((std::fs::read(&d).unwrap(), std::fs::read(&l).unwrap()));
        }
        assert_eq!(blobs[0], blobs[1]);
        let reparsed = parse_dump(&dir.path().join("d0.jsonl")).unwrap();
        assert_eq!(reparsed.conversations.len(), 30);
    }

    #[test]
    fn config_validation() {
        let ok = SyntheticConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SyntheticConfig { min_nodes: 1, ..ok.clone() },
            SyntheticConfig { label_noise: 0.5, ..ok.clone() },
            SyntheticConfig { signal_token: "two words".into(), ..ok.clone() },
            SyntheticConfig { signal_token: "baba".into(), ..ok.clone() },
            SyntheticConfig { window_size: 0, ..ok.clone() },
            SyntheticConfig { n_trees: 0, ..ok.clone() },
        ] {
            assert!(matches!(gen_synthetic(&bad), Err(IngestError::InvalidConfig(_))), "{bad:?}");
        }
    }

    #[test]
    fn vocabulary_is_distinct() {
        let v = vocabulary(1000);
        let set: std::collections::BTreeSet<_> = v.iter().collect();
        assert_eq!(set.len(), v.len());
    }
}
