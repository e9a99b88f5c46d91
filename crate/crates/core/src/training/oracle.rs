//! Training targets: teacher forcing over the gold tree and the dynamic
//! oracle that may follow the model's own splits.

use std::collections::VecDeque;

use rand::Rng;

use crate::corpus::Document;
use crate::embeddings::FeatureTable;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::order::{match_gold, tree_to_order};
use crate::parser::{predict_split, DocumentForward, SegmentScorer};
use crate::scalar::Scalar;
use crate::tree::{Label, RstTree, Segment};

/// Supervision for one popped segment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentTarget {
    pub segment: Segment,
    pub gold_split: usize,
    pub gold_label: Label,
    /// 1 at the gold split, 0 elsewhere (including the last position).
    pub y: Vec<u8>,
}

impl SegmentTarget {
    pub fn new(segment: Segment, gold_split: usize, gold_label: Label) -> Self {
        let y = (segment.start..=segment.end).map(|j| u8::from(j == gold_split)).collect();
        SegmentTarget {
            segment,
            gold_split,
            gold_label,
            y,
        }
    }
}

fn gold_of(doc: &Document) -> Result<&RstTree> {
    doc.gold
        .as_ref()
        .ok_or_else(|| Error::Data(format!("document {} has no gold tree", doc.doc_id)))
}

/// The gold derivation, breadth first: one target per internal node.
pub fn build_static_targets(doc: &Document) -> Result<Vec<SegmentTarget>> {
    let gold = gold_of(doc)?;
    let mut out = Vec::with_capacity(doc.len().saturating_sub(1));
    let mut queue = VecDeque::from([gold]);
    while let Some(node) = queue.pop_front() {
        if let RstTree::Internal { left, right, label, span } = node {
            out.push(SegmentTarget::new(*span, left.span().end, label.clone()));
            queue.push_back(left);
            queue.push_back(right);
        }
    }
    Ok(out)
}

/// Dynamic-oracle walk. Every popped segment is supervised toward its best
/// reachable gold split and label; the walk then descends on `predict(seg)`
/// when a uniform draw falls below `alpha`, otherwise on the gold split.
/// One draw is taken per popped segment.
pub fn build_dynamic_targets<F, R>(doc: &Document, mut predict: F, alpha: f64, rng: &mut R) -> Result<Vec<SegmentTarget>>
where
    F: FnMut(Segment) -> Result<usize>,
    R: Rng + ?Sized,
{
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Argument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let order = tree_to_order(gold_of(doc)?);
    let mut out = Vec::with_capacity(doc.len().saturating_sub(1));
    let mut queue = VecDeque::new();
    let root = Segment::new(1, doc.len())?;
    if root.is_splittable() {
        queue.push_back(root);
    }
    while let Some(seg) = queue.pop_front() {
        let (gold_split, gold_label) = match_gold(seg, &order)?;
        let pred = predict(seg)?;
        let u: f64 = rng.gen();
        let next = if u < alpha { pred } else { gold_split };
        out.push(SegmentTarget::new(seg, gold_split, gold_label));
        let (l, r) = seg.split_at(next)?;
        for part in [l, r] {
            if part.is_splittable() {
                queue.push_back(part);
            }
        }
    }
    Ok(out)
}

/// [`build_dynamic_targets`] with splits predicted by `model` at inference.
pub fn model_dynamic_targets<T: Scalar, R: Rng + ?Sized>(doc: &Document, model: &Model<T>, features: Option<&FeatureTable<T>>, alpha: f64, rng: &mut R) -> Result<Vec<SegmentTarget>> {
    let mut fwd = DocumentForward::new(model, doc, features)?;
    build_dynamic_targets(doc, |seg| Ok(predict_split(&fwd.score_segment(seg)?)), alpha, rng)
}
