//! Context windows carved out of a conversation tree around a target comment.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{ConversationTree, TreeError};

pub const DEFAULT_WINDOW_SIZE: usize = 3;
pub const MAX_WINDOW_SIZE: usize = 10;

/// Which family of windows to extract.
///
/// `TargetOnly` has no windows at all; every prediction through it takes the
/// context-free path. It exists so that a baseline can be trained through the
/// exact same code as the kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    AncSibChild,
    OneTwoHop,
    TargetOnly,
}

impl KernelFamily {
    pub fn kinds(self) -> &'static [WindowKind] {
        match self {
            KernelFamily::AncSibChild => &[WindowKind::Ancestor, WindowKind::Sibling, WindowKind::Children],
            KernelFamily::OneTwoHop => &[WindowKind::OneHop, WindowKind::TwoHop],
            KernelFamily::TargetOnly => &[],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::AncSibChild => "anc-sib-child",
            KernelFamily::OneTwoHop => "one-two-hop",
            KernelFamily::TargetOnly => "target-only",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anc-sib-child" => Ok(KernelFamily::AncSibChild),
            "one-two-hop" => Ok(KernelFamily::OneTwoHop),
            "target-only" => Ok(KernelFamily::TargetOnly),
            other => Err(KernelError::UnknownFamily(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Ancestor,
    Sibling,
    Children,
    OneHop,
    TwoHop,
}

impl WindowKind {
    pub const ALL: [WindowKind; 5] = [
        WindowKind::Ancestor,
        WindowKind::Sibling,
        WindowKind::Children,
        WindowKind::OneHop,
        WindowKind::TwoHop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Ancestor => "ancestor",
            WindowKind::Sibling => "sibling",
            WindowKind::Children => "children",
            WindowKind::OneHop => "one_hop",
            WindowKind::TwoHop => "two_hop",
        }
    }

    /// Family whose window list contains this kind.
    pub fn family(self) -> KernelFamily {
        match self {
            WindowKind::Ancestor | WindowKind::Sibling | WindowKind::Children => KernelFamily::AncSibChild,
            WindowKind::OneHop | WindowKind::TwoHop => KernelFamily::OneTwoHop,
        }
    }

    /// Uncapped candidate list for this kind, in window order.
    pub fn candidates(self, tree: &ConversationTree, target: usize) -> Vec<usize> {
        match self {
            WindowKind::Ancestor => tree.ancestor_indices(target),
            WindowKind::Sibling => tree.sibling_indices(target),
            WindowKind::Children => tree.child_indices(target).to_vec(),
            WindowKind::OneHop => tree.k_hop_indices(target, 1),
            WindowKind::TwoHop => tree.k_hop_indices(target, 2),
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WindowKind {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WindowKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| KernelError::UnknownKind(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("window size must be in 1..={MAX_WINDOW_SIZE}, got {0}")]
    InvalidWindowSize(usize),
    #[error("unknown kernel family '{0}' (expected anc-sib-child, one-two-hop or target-only)")]
    UnknownFamily(String),
    #[error("unknown window kind '{0}'")]
    UnknownKind(String),
    #[error("unknown target: {0}")]
    UnknownTarget(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelShape {
    pub family: KernelFamily,
    pub window_size: usize,
}

impl KernelShape {
    pub fn new(family: KernelFamily, window_size: usize) -> Result<Self, KernelError> {
        if !(1..=MAX_WINDOW_SIZE).contains(&window_size) {
            return Err(KernelError::InvalidWindowSize(window_size));
        }
        Ok(KernelShape { family, window_size })
    }

    pub fn n_windows(&self) -> usize {
        self.family.kinds().len()
    }
}

impl Default for KernelShape {
    fn default() -> Self {
        KernelShape {
            family: KernelFamily::AncSibChild,
            window_size: DEFAULT_WINDOW_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub kind: WindowKind,
    /// Tree indices of the members, in window order.
    #[serde(skip)]
    pub members: Vec<usize>,
    pub member_ids: Vec<String>,
}

impl Window {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSet {
    pub target_id: String,
    #[serde(skip)]
    pub target: usize,
    pub windows: Vec<Window>,
    pub mask: Vec<bool>,
}

impl WindowSet {
    pub fn any_context(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }
}

/// Extract every window of `shape.family` around `target_id`.
///
/// The ancestor window keeps the `L` nearest ancestors (parent first); the
/// other kinds keep the chronologically first `L` candidates.
pub fn extract_windows(
    tree: &ConversationTree,
    target_id: &str,
    shape: &KernelShape,
) -> Result<WindowSet, KernelError> {
    let target = tree.index_of(target_id)?;
    Ok(extract_windows_at(tree, target, shape))
}

pub fn extract_windows_at(tree: &ConversationTree, target: usize, shape: &KernelShape) -> WindowSet {
    let windows: Vec<Window> = shape
        .family
        .kinds()
        .iter()
        .map(|&kind| {
            let mut members = kind.candidates(tree, target);
            members.truncate(shape.window_size);
            let member_ids = members.iter().map(|&i| tree.id_of(i).to_owned()).collect();
            Window { kind, members, member_ids }
        })
        .collect();
    let mask = windows.iter().map(|w| !w.is_empty()).collect();
    WindowSet {
        target_id: tree.id_of(target).to_owned(),
        target,
        windows,
        mask,
    }
}
