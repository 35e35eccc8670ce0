//! Comments and validated conversation trees.
//!
//! A [`ConversationTree`] stores its comments in `(timestamp, id)` order, so a
//! node's index doubles as its chronological rank. Every ordered traversal
//! below is therefore a sort over plain indices.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Moderation tags a comment can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Insightful,
    Informative,
    Interesting,
    Funny,
    OffTopic,
    Flamebait,
    Troll,
    Redundant,
    Unknown,
}

impl Category {
    pub const KNOWN: [Category; 8] = [
        Category::Insightful,
        Category::Informative,
        Category::Interesting,
        Category::Funny,
        Category::OffTopic,
        Category::Flamebait,
        Category::Troll,
        Category::Redundant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Insightful => "insightful",
            Category::Informative => "informative",
            Category::Interesting => "interesting",
            Category::Funny => "funny",
            Category::OffTopic => "off-topic",
            Category::Flamebait => "flamebait",
            Category::Troll => "troll",
            Category::Redundant => "redundant",
            Category::Unknown => "unknown",
        }
    }

    /// Lenient parse used by ingestion: unrecognised tags map to `Unknown`.
    pub fn parse_lenient(raw: &str) -> Category {
        raw.parse().unwrap_or(Category::Unknown)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Ok(match norm.as_str() {
            "insightful" => Category::Insightful,
            "informative" => Category::Informative,
            "interesting" => Category::Interesting,
            "funny" => Category::Funny,
            "offtopic" => Category::OffTopic,
            "flamebait" => Category::Flamebait,
            "troll" => Category::Troll,
            "redundant" => Category::Redundant,
            "unknown" | "none" => Category::Unknown,
            _ => return Err(format!("unknown category '{s}'")),
        })
    }
}

/// One forum post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub parent_id: Option<String>,
    pub conversation_id: String,
    pub timestamp: i64,
    pub author: String,
    pub text: String,
    pub categories: BTreeSet<Category>,
    pub score: Option<i64>,
}

impl Comment {
    /// Minimal constructor used heavily by tests and generators.
    pub fn new(
        id: impl Into<String>,
        parent_id: Option<&str>,
        conversation_id: impl Into<String>,
        timestamp: i64,
        text: impl Into<String>,
    ) -> Self {
        Comment {
            id: id.into(),
            parent_id: parent_id.map(str::to_owned),
            conversation_id: conversation_id.into(),
            timestamp,
            author: String::new(),
            text: text.into(),
            categories: BTreeSet::new(),
            score: None,
        }
    }

    pub fn with_categories(mut self, cats: impl IntoIterator<Item = Category>) -> Self {
        self.categories = cats.into_iter().collect();
        self
    }

    /// True if the comment carries at least one recognised moderation tag.
    pub fn is_tagged(&self) -> bool {
        self.categories.iter().any(|c| *c != Category::Unknown)
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.id.is_empty() {
            return Err(TreeError::InvalidComment {
                id: self.id.clone(),
                reason: "empty id".into(),
            });
        }
        if let Some(s) = self.score {
            if !(1..=5).contains(&s) {
                return Err(TreeError::InvalidComment {
                    id: self.id.clone(),
                    reason: format!("score {s} outside [1,5]"),
                });
            }
        }
        if self.parent_id.as_deref() == Some(self.id.as_str()) {
            return Err(TreeError::CycleDetected(vec![self.id.clone()]));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("no root comment (every comment has a parent)")]
    NoRoot,
    #[error("multiple root comments: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("comment '{id}' references missing parent '{parent}'")]
    DanglingParent { id: String, parent: String },
    #[error("parent links form a cycle through {0:?}")]
    CycleDetected(Vec<String>),
    #[error("duplicate comment id '{0}'")]
    DuplicateId(String),
    #[error("comments span several conversations: {0:?}")]
    MixedConversations(Vec<String>),
    #[error("invalid comment '{id}': {reason}")]
    InvalidComment { id: String, reason: String },
    #[error("unknown comment id '{0}'")]
    UnknownId(String),
}

/// A validated, immutable rooted tree over the comments of one conversation.
#[derive(Debug, Clone)]
pub struct ConversationTree {
    conversation_id: String,
    comments: Vec<Comment>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    root: usize,
}

impl ConversationTree {
    /// Validate `comments` and assemble the tree.
    ///
    /// Checks run in a fixed order: per-comment validity, shared conversation,
    /// duplicate ids, dangling parents, cycles, then root count. A set of
    /// comments whose parents all resolve but which has no root necessarily
    /// contains a cycle, so it is reported as `CycleDetected`.
    pub fn build(mut comments: Vec<Comment>) -> Result<Self, TreeError> {
        if comments.is_empty() {
            return Err(TreeError::NoRoot);
        }
        for c in &comments {
            c.validate()?;
        }
        let convs: BTreeSet<&str> = comments.iter().map(|c| c.conversation_id.as_str()).collect();
        if convs.len() > 1 {
            return Err(TreeError::MixedConversations(
                convs.into_iter().map(str::to_owned).collect(),
            ));
        }
        let conversation_id = comments[0].conversation_id.clone();

        comments.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));

        let mut index = HashMap::with_capacity(comments.len());
        for (i, c) in comments.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(TreeError::DuplicateId(c.id.clone()));
            }
        }

        let mut parent = Vec::with_capacity(comments.len());
        for c in &comments {
            match &c.parent_id {
                None => parent.push(None),
                Some(p) => match index.get(p) {
                    Some(&pi) => parent.push(Some(pi)),
                    None => {
                        return Err(TreeError::DanglingParent {
                            id: c.id.clone(),
                            parent: p.clone(),
                        })
                    }
                },
            }
        }

        // Parent-chain walk with three-colour marking; each node is finalised once.
        const UNSEEN: u8 = 0;
        const ON_PATH: u8 = 1;
        const DONE: u8 = 2;
        let mut state = vec![UNSEEN; comments.len()];
        let mut path: Vec<usize> = Vec::new();
        for start in 0..comments.len() {
            let mut cur = Some(start);
            path.clear();
            while let Some(n) = cur {
                match state[n] {
                    DONE => break,
                    ON_PATH => {
                        let pos = path.iter().position(|&p| p == n).unwrap_or(0);
                        let mut ids: Vec<String> =
                            path[pos..].iter().map(|&i| comments[i].id.clone()).collect();
                        ids.sort();
                        return Err(TreeError::CycleDetected(ids));
                    }
                    _ => {
                        state[n] = ON_PATH;
                        path.push(n);
                        cur = parent[n];
                    }
                }
            }
            for &n in &path {
                state[n] = DONE;
            }
        }

        let roots: Vec<usize> = (0..comments.len()).filter(|&i| parent[i].is_none()).collect();
        let root = match roots.as_slice() {
            [] => return Err(TreeError::NoRoot),
            [r] => *r,
            many => {
                return Err(TreeError::MultipleRoots(
                    many.iter().map(|&i| comments[i].id.clone()).collect(),
                ))
            }
        };

        // Indices are visited in chronological order, so child lists come out sorted.
        let mut children = vec![Vec::new(); comments.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }

        let mut depth = vec![0usize; comments.len()];
        let mut queue = VecDeque::from([root]);
        while let Some(n) = queue.pop_front() {
            for &c in &children[n] {
                depth[c] = depth[n] + 1;
                queue.push_back(c);
            }
        }

        Ok(ConversationTree {
            conversation_id,
            comments,
            index,
            parent,
            children,
            depth,
            root,
        })
    }

    pub fn conversation_id(&self) -> &str {
        &self.conversation_id
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn root_id(&self) -> &str {
        &self.comments[self.root].id
    }

    pub fn root_index(&self) -> usize {
        self.root
    }

    /// Comments in `(timestamp, id)` order.
    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn get(&self, id: &str) -> Option<&Comment> {
        self.index.get(id).map(|&i| &self.comments[i])
    }

    pub fn index_of(&self, id: &str) -> Result<usize, TreeError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| TreeError::UnknownId(id.to_owned()))
    }

    pub fn comment(&self, idx: usize) -> &Comment {
        &self.comments[idx]
    }

    pub fn id_of(&self, idx: usize) -> &str {
        &self.comments[idx].id
    }

    pub fn parent_index(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    pub fn child_indices(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn depth_of(&self, idx: usize) -> usize {
        self.depth[idx]
    }

    /// Map of id to ordered child ids, for every node (leaves map to an empty list).
    pub fn children_index(&self) -> HashMap<&str, Vec<&str>> {
        (0..self.len())
            .map(|i| (self.id_of(i), self.ids(&self.children[i])))
            .collect()
    }

    fn ids(&self, idxs: &[usize]) -> Vec<&str> {
        idxs.iter().map(|&i| self.id_of(i)).collect()
    }

    /// Parent-first chain ending at the root.
    pub fn ancestor_indices(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.depth[idx]);
        let mut cur = self.parent[idx];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p];
        }
        out
    }

    pub fn sibling_indices(&self, idx: usize) -> Vec<usize> {
        match self.parent[idx] {
            None => Vec::new(),
            Some(p) => self.children[p].iter().copied().filter(|&c| c != idx).collect(),
        }
    }

    /// Nodes at undirected distance exactly `k`, chronologically ordered.
    pub fn k_hop_indices(&self, idx: usize, k: usize) -> Vec<usize> {
        if k == 0 {
            return vec![idx];
        }
        // In a tree each node is reached through exactly one neighbour, so the
        // frontier only needs to remember where it came from.
        let mut frontier: Vec<(usize, Option<usize>)> = vec![(idx, None)];
        for _ in 0..k {
            let mut next = Vec::new();
            for &(n, from) in &frontier {
                let up = self.parent[n].into_iter();
                let down = self.children[n].iter().copied();
                for m in up.chain(down) {
                    if Some(m) != from {
                        next.push((m, Some(n)));
                    }
                }
            }
            if next.is_empty() {
                return Vec::new();
            }
            frontier = next;
        }
        let mut out: Vec<usize> = frontier.into_iter().map(|(n, _)| n).collect();
        out.sort_unstable();
        out
    }

    pub fn ancestors(&self, id: &str) -> Result<Vec<&str>, TreeError> {
        let i = self.index_of(id)?;
        Ok(self.ids(&self.ancestor_indices(i)))
    }

    pub fn siblings(&self, id: &str) -> Result<Vec<&str>, TreeError> {
        let i = self.index_of(id)?;
        Ok(self.ids(&self.sibling_indices(i)))
    }

    pub fn children(&self, id: &str) -> Result<Vec<&str>, TreeError> {
        let i = self.index_of(id)?;
        Ok(self.ids(&self.children[i]))
    }

    /// All nodes at undirected distance exactly `k` (`k >= 1`).
    pub fn k_hop(&self, id: &str, k: usize) -> Result<Vec<&str>, TreeError> {
        let i = self.index_of(id)?;
        Ok(self.ids(&self.k_hop_indices(i, k.max(1))))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// r(0); a(1,r); b(2,r); c(3,a); d(4,a); e(5,a); f(6,c)
    pub fn t0_comments() -> Vec<Comment> {
        [
            ("r", None, 0),
            ("a", Some("r"), 1),
            ("b", Some("r"), 2),
            ("c", Some("a"), 3),
            ("d", Some("a"), 4),
            ("e", Some("a"), 5),
            ("f", Some("c"), 6),
        ]
        .into_iter()
        .map(|(id, p, t)| Comment::new(id, p, "t0", t, format!("text of {id}")))
        .collect()
    }

    pub fn t0() -> ConversationTree {
        ConversationTree::build(t0_comments()).unwrap()
    }
}
