//! Canonical segmentation order of a binary tree.
//!
//! Every internal node splits its span after exactly one EDU, and every
//! EDU but the last is the split point of exactly one node. Numbering the
//! internal nodes in pre-order therefore gives a per-EDU rank array `O`
//! (plus the matching label array `R`) that determines the tree uniquely:
//! the split of any gold span is the position of minimal rank inside it.

use crate::error::{Error, Result};
use crate::tree::{Label, RstTree, Segment};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalOrder {
    ranks: Vec<Option<usize>>,
    labels: Vec<Option<Label>>,
}

impl CanonicalOrder {
    /// Builds an order from per-EDU ranks and labels, both indexed from EDU 1.
    pub fn new(ranks: Vec<Option<usize>>, labels: Vec<Option<Label>>) -> Result<Self> {
        let q = ranks.len();
        if q == 0 {
            return Err(Error::MalformedOrder("empty order".into()));
        }
        if labels.len() != q {
            return Err(Error::MalformedOrder(format!(
                "{} ranks but {} labels",
                q,
                labels.len()
            )));
        }
        if ranks[q - 1].is_some() || labels[q - 1].is_some() {
            return Err(Error::MalformedOrder("last EDU must carry no rank".into()));
        }
        let mut seen = vec![false; q];
        for (i, (r, l)) in ranks.iter().zip(&labels).enumerate().take(q - 1) {
            let r = r.ok_or_else(|| Error::MalformedOrder(format!("EDU {} has no rank", i + 1)))?;
            if l.is_none() {
                return Err(Error::MalformedOrder(format!("EDU {} has no label", i + 1)));
            }
            if r == 0 || r >= q {
                return Err(Error::MalformedOrder(format!("rank {r} outside 1..{}", q - 1)));
            }
            if seen[r] {
                return Err(Error::MalformedOrder(format!("duplicate rank {r}")));
            }
            seen[r] = true;
        }
        Ok(CanonicalOrder { ranks, labels })
    }

    /// Number of EDUs.
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn ranks(&self) -> &[Option<usize>] {
        &self.ranks
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    /// Rank of EDU `i` (1-based).
    pub fn rank(&self, i: usize) -> Option<usize> {
        self.ranks.get(i.checked_sub(1)?).copied().flatten()
    }

    pub fn label(&self, i: usize) -> Option<&Label> {
        self.labels.get(i.checked_sub(1)?)?.as_ref()
    }
}

/// Pre-order ranks and labels of a tree whose leaves start at EDU 1.
pub fn tree_to_order(tree: &RstTree) -> CanonicalOrder {
    let span = tree.span();
    let offset = span.start;
    let q = span.len();
    let mut ranks = vec![None; q];
    let mut labels = vec![None; q];
    let mut next = 1;
    tree.visit_preorder(&mut |node, _| {
        if let (Some(split), Some(label)) = (node.split(), node.label()) {
            ranks[split - offset] = Some(next);
            labels[split - offset] = Some(label.clone());
            next += 1;
        }
    });
    CanonicalOrder { ranks, labels }
}

/// Rebuilds the tree encoded by `order`, with leaves `1..=q`.
pub fn order_to_tree(order: &CanonicalOrder) -> Result<RstTree> {
    build(order, Segment { start: 1, end: order.len() })
}

fn build(order: &CanonicalOrder, seg: Segment) -> Result<RstTree> {
    if !seg.is_splittable() {
        return Ok(RstTree::Leaf(seg.start));
    }
    let (split, label) = match_gold(seg, order)?;
    let (l, r) = seg.split_at(split)?;
    RstTree::internal(build(order, l)?, build(order, r)?, label)
}

/// The best still-reachable gold split of `seg`: the position of minimal
/// rank in `seg.start..seg.end`, together with its gold label.
pub fn match_gold(seg: Segment, order: &CanonicalOrder) -> Result<(usize, Label)> {
    if !seg.is_splittable() {
        return Err(Error::Argument(format!("segment {seg} has no split point")));
    }
    if seg.end > order.len() {
        return Err(Error::Argument(format!(
            "segment {seg} exceeds document of {} EDUs",
            order.len()
        )));
    }
    let mut best: Option<(usize, usize)> = None;
    for i in seg.start..seg.end {
        let r = order
            .rank(i)
            .ok_or_else(|| Error::MalformedOrder(format!("EDU {i} has no rank")))?;
        if best.is_none_or(|(_, br)| r < br) {
            best = Some((i, r));
        }
    }
    let (split, _) = best.expect("splittable segment has a candidate");
    let label = order
        .label(split)
        .cloned()
        .ok_or_else(|| Error::MalformedOrder(format!("EDU {split} has no label")))?;
    Ok((split, label))
}
