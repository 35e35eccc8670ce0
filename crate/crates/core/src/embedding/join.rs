use std::fmt;

use serde::{Deserialize, Serialize};

pub const BEGIN_MARKER: &str = "[CLS]";
pub const SEP_MARKER: &str = "[SEP]";
pub const DEFAULT_TOKENS_PER_COMMENT: usize = 64;

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Begin,
    Sep,
    Word(String),
}

impl Token {
    pub fn as_str(&self) -> &str {
        match self {
            Token::Begin => BEGIN_MARKER,
            Token::Sep => SEP_MARKER,
            Token::Word(w) => w,
        }
    }
}

/// Target plus window members, flattened into one marker-delimited sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinedSequence {
    pub tokens: Vec<Token>,
    /// Tokens dropped by the per-comment and total-length caps.
    pub truncated: usize,
}

impl JoinedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-separated rendering with literal marker strings, as sent over the wire.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(t.as_str());
        }
        out
    }
}

impl fmt::Display for JoinedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinConfig {
    pub tokens_per_comment: usize,
    pub max_len: usize,
}

impl JoinConfig {
    pub fn new(max_len: usize) -> Self {
        JoinConfig {
            tokens_per_comment: DEFAULT_TOKENS_PER_COMMENT,
            max_len,
        }
    }
}

/// `[CLS] target [SEP] m1 [SEP] ... mL [SEP]`, each comment capped at
/// `tokens_per_comment` and the whole sequence tail-truncated to `max_len`.
pub fn join_texts<S: AsRef<str>>(target: &str, window: &[S], cfg: &JoinConfig) -> JoinedSequence {
    let mut tokens = vec![Token::Begin];
    let mut truncated = 0;
    let mut push_comment = |tokens: &mut Vec<Token>, text: &str| {
        let words = tokenize(text);
        truncated += words.len().saturating_sub(cfg.tokens_per_comment);
        tokens.extend(words.into_iter().take(cfg.tokens_per_comment).map(Token::Word));
        tokens.push(Token::Sep);
    };
    push_comment(&mut tokens, target);
    for m in window {
        push_comment(&mut tokens, m.as_ref());
    }
    if tokens.len() > cfg.max_len {
        truncated += tokens.len() - cfg.max_len;
        tokens.truncate(cfg.max_len);
        log::debug!("joined sequence tail-truncated to {} tokens", cfg.max_len);
    }
    JoinedSequence { tokens, truncated }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Hello, World! x2"), ["hello", "world", "x2"]);
        assert!(tokenize("  ..!").is_empty());
        assert_eq!(tokenize("Ünïcode-ok"), ["ünïcode", "ok"]);
    }

    #[test]
    fn join_layout() {
        let cfg = JoinConfig::new(512);
        let j = join_texts("x", &["a", "b"], &cfg);
        assert_eq!(j.render(), "[CLS] x [SEP] a [SEP] b [SEP]");
        assert_eq!(j.truncated, 0);

        let j = join_texts::<&str>("x", &[], &cfg);
        assert_eq!(j.render(), "[CLS] x [SEP]");
    }

    #[test]
    fn per_comment_cap_keeps_exactly_t_tokens() {
        let cfg = JoinConfig { tokens_per_comment: 4, max_len: 512 };
        let long: String = (0..10).map(|i| format!("w{i} ")).collect();
        let j = join_texts(&long, &["short"], &cfg);
        let words: Vec<&str> = j
            .tokens
            .iter()
            .filter_map(|t| match t {
                Token::Word(w) => Some(w.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(words, ["w0", "w1", "w2", "w3", "short"]);
        assert_eq!(j.truncated, 6);
    }

    #[test]
    fn total_length_is_tail_truncated() {
        let cfg = JoinConfig { tokens_per_comment: 64, max_len: 5 };
        let j = join_texts("a b c", &["d e"], &cfg);
        assert_eq!(j.len(), 5);
        assert_eq!(j.render(), "[CLS] a b c [SEP]");
        assert_eq!(j.truncated, 3);
    }
}
