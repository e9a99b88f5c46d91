//! RST tree data model and right-heavy binarization.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Reserved relation tag used by RST-Parseval for the nucleus of a
/// mononuclear relation. It may not appear in corpus vocabularies.
pub const SPAN_TAG: &str = "span";

/// Orientation of a binary relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nuclearity {
    NS,
    SN,
    NN,
}

impl Nuclearity {
    pub const ALL: [Nuclearity; 3] = [Nuclearity::NS, Nuclearity::SN, Nuclearity::NN];

    pub fn as_str(self) -> &'static str {
        match self {
            Nuclearity::NS => "NS",
            Nuclearity::SN => "SN",
            Nuclearity::NN => "NN",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Nuclearity::NS => 0,
            Nuclearity::SN => 1,
            Nuclearity::NN => 2,
        }
    }

    /// Statuses of the (left, right) children.
    pub fn statuses(self) -> (Status, Status) {
        match self {
            Nuclearity::NS => (Status::Nucleus, Status::Satellite),
            Nuclearity::SN => (Status::Satellite, Status::Nucleus),
            Nuclearity::NN => (Status::Nucleus, Status::Nucleus),
        }
    }

    /// Nuclearity of a binary node built from two child statuses.
    ///
    /// A satellite–satellite pair only arises for the auxiliary nodes that
    /// binarization introduces between sibling satellites of one nucleus;
    /// it is read as a coordinate (NN) pair.
    pub fn from_statuses(left: Status, right: Status) -> Self {
        match (left, right) {
            (Status::Nucleus, Status::Satellite) => Nuclearity::NS,
            (Status::Satellite, Status::Nucleus) => Nuclearity::SN,
            _ => Nuclearity::NN,
        }
    }
}

impl fmt::Display for Nuclearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Nuclearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NS" => Ok(Nuclearity::NS),
            "SN" => Ok(Nuclearity::SN),
            "NN" => Ok(Nuclearity::NN),
            other => Err(Error::Format(format!("unknown nuclearity `{other}`"))),
        }
    }
}

/// Status of a single child: nucleus or satellite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Nucleus,
    Satellite,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Nucleus => "N",
            Status::Satellite => "S",
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'N' => Some(Status::Nucleus),
            'S' => Some(Status::Satellite),
            _ => None,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A discourse relation name such as `elaboration`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relation(String);

impl Relation {
    pub fn new(name: impl Into<String>) -> Self {
        Relation(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_reserved(&self) -> bool {
        self.0 == SPAN_TAG
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Relation {
    fn from(s: &str) -> Self {
        Relation::new(s)
    }
}

/// Joint nuclearity + relation label of an internal node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub nuclearity: Nuclearity,
    pub relation: Relation,
}

impl Label {
    pub fn new(nuclearity: Nuclearity, relation: impl Into<Relation>) -> Self {
        Label {
            nuclearity,
            relation: relation.into(),
        }
    }
}

impl From<String> for Relation {
    fn from(s: String) -> Self {
        Relation(s)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.nuclearity, self.relation)
    }
}

/// An inclusive, 1-based range of EDUs `start..=end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start == 0 || start > end {
            return Err(Error::Argument(format!("invalid segment ({start}, {end})")));
        }
        Ok(Segment { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_splittable(&self) -> bool {
        self.end > self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    /// Splits after EDU `split`, which must lie in `start..end`.
    pub fn split_at(&self, split: usize) -> Result<(Segment, Segment)> {
        if split < self.start || split >= self.end {
            return Err(Error::Argument(format!(
                "split {split} outside ({}, {})",
                self.start,
                self.end - 1
            )));
        }
        Ok((
            Segment {
                start: self.start,
                end: split,
            },
            Segment {
                start: split + 1,
                end: self.end,
            },
        ))
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

/// A binary RST tree. Internal nodes carry their (cached) span.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RstTree {
    Leaf(usize),
    Internal {
        left: Box<RstTree>,
        right: Box<RstTree>,
        label: Label,
        span: Segment,
    },
}

impl RstTree {
    pub fn leaf(index: usize) -> Self {
        RstTree::Leaf(index)
    }

    /// Joins two adjacent subtrees under a labelled node.
    pub fn internal(left: RstTree, right: RstTree, label: Label) -> Result<Self> {
        let (l, r) = (left.span(), right.span());
        if l.end + 1 != r.start {
            return Err(Error::MalformedTree(format!(
                "children {l} and {r} are not adjacent"
            )));
        }
        Ok(RstTree::Internal {
            left: Box::new(left),
            right: Box::new(right),
            label,
            span: Segment {
                start: l.start,
                end: r.end,
            },
        })
    }

    pub fn span(&self) -> Segment {
        match self {
            RstTree::Leaf(i) => Segment { start: *i, end: *i },
            RstTree::Internal { span, .. } => *span,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, RstTree::Leaf(_))
    }

    pub fn label(&self) -> Option<&Label> {
        match self {
            RstTree::Leaf(_) => None,
            RstTree::Internal { label, .. } => Some(label),
        }
    }

    /// Last EDU of the left child, i.e. the EDU the node splits after.
    pub fn split(&self) -> Option<usize> {
        match self {
            RstTree::Leaf(_) => None,
            RstTree::Internal { left, .. } => Some(left.span().end),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.span().len()
    }

    pub fn internal_count(&self) -> usize {
        match self {
            RstTree::Leaf(_) => 0,
            RstTree::Internal { left, right, .. } => 1 + left.internal_count() + right.internal_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RstTree::Leaf(_) => 0,
            RstTree::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Calls `f(node, depth)` for every node in pre-order (root, left, right).
    pub fn visit_preorder<'a, F: FnMut(&'a RstTree, usize)>(&'a self, f: &mut F) {
        fn go<'a, F: FnMut(&'a RstTree, usize)>(t: &'a RstTree, depth: usize, f: &mut F) {
            f(t, depth);
            if let RstTree::Internal { left, right, .. } = t {
                go(left, depth + 1, f);
                go(right, depth + 1, f);
            }
        }
        go(self, 0, f)
    }

    /// Internal nodes in pre-order.
    pub fn internal_nodes(&self) -> Vec<&RstTree> {
        let mut out = Vec::new();
        self.visit_preorder(&mut |t, _| {
            if !t.is_leaf() {
                out.push(t)
            }
        });
        out
    }

    /// Leaf indices from left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_preorder(&mut |t, _| {
            if let RstTree::Leaf(i) = t {
                out.push(*i)
            }
        });
        out
    }

    /// Checks that the tree is a well-formed binary tree over EDUs `1..=q`.
    pub fn validate(&self, q: usize) -> Result<()> {
        let span = self.span();
        if span.start != 1 || span.end != q {
            return Err(Error::MalformedTree(format!(
                "tree spans {span}, expected (1, {q})"
            )));
        }
        let leaves = self.leaves();
        if leaves != (1..=q).collect::<Vec<_>>() {
            return Err(Error::MalformedTree("leaves are not 1..q in order".into()));
        }
        Ok(())
    }
}

/// A tree with arbitrary branching, as found in raw treebanks. Every child
/// carries its own nucleus/satellite status.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NaryTree {
    Leaf(usize),
    Node {
        relation: Relation,
        children: Vec<(Status, NaryTree)>,
    },
}

impl NaryTree {
    pub fn leaf_count(&self) -> usize {
        match self {
            NaryTree::Leaf(_) => 1,
            NaryTree::Node { children, .. } => children.iter().map(|(_, c)| c.leaf_count()).sum(),
        }
    }
}

/// Converts an n-ary tree into a right-branching binary tree.
///
/// A node `(c1, ..., ck)` with `k > 2` becomes `Internal(c1, binarize(c2..ck))`.
/// The auxiliary nodes inherit the relation, and each binary node's
/// nuclearity is derived from the statuses on its two sides, where the
/// right-hand chain counts as a nucleus if it contains one.
pub fn binarize_right_heavy(tree: &NaryTree) -> Result<RstTree> {
    match tree {
        NaryTree::Leaf(i) => Ok(RstTree::Leaf(*i)),
        NaryTree::Node { relation, children } => {
            if children.len() < 2 {
                return Err(Error::MalformedTree(format!(
                    "internal `{relation}` node with {} child(ren)",
                    children.len()
                )));
            }
            if !children.iter().any(|(s, _)| *s == Status::Nucleus) {
                return Err(Error::MalformedTree(format!(
                    "`{relation}` node has no nucleus"
                )));
            }
            binarize_chain(relation, children)
        }
    }
}

fn binarize_chain(relation: &Relation, children: &[(Status, NaryTree)]) -> Result<RstTree> {
    let (first_status, first) = &children[0];
    let left = binarize_right_heavy(first)?;
    let rest = &children[1..];
    let (right, right_status) = if rest.len() == 1 {
        (binarize_right_heavy(&rest[0].1)?, rest[0].0)
    } else {
        let status = if rest.iter().any(|(s, _)| *s == Status::Nucleus) {
            Status::Nucleus
        } else {
            Status::Satellite
        };
        (binarize_chain(relation, rest)?, status)
    };
    let label = Label {
        nuclearity: Nuclearity::from_statuses(*first_status, right_status),
        relation: relation.clone(),
    };
    RstTree::internal(left, right, label)
}
