//! Top-down decoding: split scoring, label prediction and the FIFO
//! segment queue that assembles a tree.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use crate::corpus::Document;
use crate::embeddings::FeatureTable;
use crate::encoder::DocumentEncoder;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{Graph, NodeId, ParamStore};
use crate::order::{match_gold, tree_to_order, CanonicalOrder};
use crate::scalar::Scalar;
use crate::tree::{Label, RstTree, Segment};

/// Split probabilities for positions `segment.start..=segment.end`.
/// The last position is never a legal split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitScores {
    pub segment: Segment,
    pub probs: Vec<f64>,
}

impl SplitScores {
    pub fn new(segment: Segment, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != segment.len() {
            return Err(Error::Shape(format!("{} scores for segment {segment}", probs.len())));
        }
        Ok(SplitScores { segment, probs })
    }

    pub fn prob(&self, j: usize) -> f64 {
        self.probs[j - self.segment.start]
    }
}

/// Argmax over `start..end`, lowest index on ties.
pub fn predict_split(scores: &SplitScores) -> usize {
    let seg = scores.segment;
    let mut best = seg.start;
    for j in seg.start + 1..seg.end {
        if scores.prob(j) > scores.prob(best) {
            best = j;
        }
    }
    best
}

/// Joint distribution over the `3 R` nuclearity-relation classes.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    /// Most probable class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

/// Source of split scores and labels for the decoder.
pub trait SegmentScorer {
    fn score_segment(&mut self, seg: Segment) -> Result<SplitScores>;

    /// Label for splitting `seg` after `split`, with its probability.
    fn predict_label(&mut self, seg: Segment, split: usize) -> Result<(Label, f64)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub segment: Segment,
    pub split: usize,
    pub label: Label,
    pub split_prob: f64,
    pub label_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseResult {
    pub tree: RstTree,
    pub decisions: Vec<Decision>,
}

impl ParseResult {
    /// One decision per line: `m n split nuc relation prob`, where `prob` is
    /// the split probability.
    pub fn trace(&self) -> String {
        let mut out = String::new();
        for d in &self.decisions {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {:.6}",
                d.segment.start, d.segment.end, d.split, d.label.nuclearity, d.label.relation, d.split_prob
            );
        }
        out
    }
}

/// Decodes a document of `q` EDUs with a FIFO queue of segments.
pub fn decode<S: SegmentScorer + ?Sized>(scorer: &mut S, q: usize) -> Result<ParseResult> {
    if q == 0 {
        return Err(Error::Argument("cannot parse an empty document".into()));
    }
    let mut decisions = Vec::with_capacity(q - 1);
    let mut queue = VecDeque::new();
    let root = Segment::new(1, q)?;
    if root.is_splittable() {
        queue.push_back(root);
    }
    while let Some(seg) = queue.pop_front() {
        let scores = scorer.score_segment(seg)?;
        if scores.segment != seg {
            return Err(Error::Shape(format!("scorer answered {} for {seg}", scores.segment)));
        }
        let split = predict_split(&scores);
        let (label, label_prob) = scorer.predict_label(seg, split)?;
        decisions.push(Decision {
            segment: seg,
            split,
            label,
            split_prob: scores.prob(split),
            label_prob,
        });
        let (left, right) = seg.split_at(split)?;
        for part in [left, right] {
            if part.is_splittable() {
                queue.push_back(part);
            }
        }
    }
    let tree = assemble(&decisions, root)?;
    Ok(ParseResult { tree, decisions })
}

/// Builds a tree from decisions keyed by segment.
pub fn assemble(decisions: &[Decision], root: Segment) -> Result<RstTree> {
    let by_seg: HashMap<Segment, &Decision> = decisions.iter().map(|d| (d.segment, d)).collect();
    fn build(by_seg: &HashMap<Segment, &Decision>, seg: Segment) -> Result<RstTree> {
        if !seg.is_splittable() {
            return Ok(RstTree::Leaf(seg.start));
        }
        let d = by_seg
            .get(&seg)
            .ok_or_else(|| Error::MalformedTree(format!("no decision for segment {seg}")))?;
        let (l, r) = seg.split_at(d.split)?;
        RstTree::internal(build(by_seg, l)?, build(by_seg, r)?, d.label.clone())
    }
    build(&by_seg, root)
}

/// Graph nodes computed for one segment.
#[derive(Clone, Debug)]
pub struct SegmentNodes {
    pub encodings: Vec<NodeId>,
    pub probs: NodeId,
}

/// A model applied to one document. The document is encoded once on
/// construction; segment encodings are cached per segment.
pub struct DocumentForward<'m, T: Scalar> {
    pub model: &'m Model<T>,
    pub store: &'m ParamStore<T>,
    pub graph: Graph<T>,
    pub h: Vec<NodeId>,
    cache: HashMap<Segment, SegmentNodes>,
}

impl<'m, T: Scalar> DocumentForward<'m, T> {
    /// Inference forward pass with the model's own encoder.
    pub fn new(model: &'m Model<T>, doc: &Document, features: Option<&FeatureTable<T>>) -> Result<Self> {
        Self::with_graph(model, Graph::new(), &model.encoder, doc, features)
    }

    pub fn with_graph(model: &'m Model<T>, graph: Graph<T>, encoder: &dyn DocumentEncoder<T>, doc: &Document, features: Option<&FeatureTable<T>>) -> Result<Self> {
        Self::with_store(model, &model.store, graph, encoder, doc, features)
    }

    /// Uses parameter values from `store` instead of the model's own, which
    /// must have the same layout.
    pub fn with_store(
        model: &'m Model<T>,
        store: &'m ParamStore<T>,
        mut graph: Graph<T>,
        encoder: &dyn DocumentEncoder<T>,
        doc: &Document,
        features: Option<&FeatureTable<T>>,
    ) -> Result<Self> {
        let h = encoder.encode(&mut graph, store, doc, features)?;
        if h.len() != doc.len() {
            return Err(Error::Shape(format!("encoder returned {} vectors for {} EDUs", h.len(), doc.len())));
        }
        Ok(DocumentForward {
            model,
            store,
            graph,
            h,
            cache: HashMap::new(),
        })
    }

    pub fn num_edus(&self) -> usize {
        self.h.len()
    }

    pub fn segment(&mut self, seg: Segment) -> Result<&SegmentNodes> {
        if !seg.is_splittable() {
            return Err(Error::Argument(format!("segment {seg} has a single EDU and cannot be split")));
        }
        if !self.cache.contains_key(&seg) {
            let s = &self.model.segmenter;
            let encodings = s.encode_segment(&mut self.graph, self.store, &self.h, seg)?;
            let probs = s.split_probs(&mut self.graph, self.store, &encodings)?;
            self.cache.insert(seg, SegmentNodes { encodings, probs });
        }
        Ok(&self.cache[&seg])
    }

    /// Node holding the joint label distribution for splitting `seg` after `split`.
    pub fn label_node(&mut self, seg: Segment, split: usize) -> Result<NodeId> {
        if split < seg.start || split >= seg.end {
            return Err(Error::Argument(format!("split {split} outside {seg}")));
        }
        let enc = self.segment(seg)?.encodings.clone();
        let s = &self.model.segmenter;
        s.label_probs(&mut self.graph, self.store, &enc, split - seg.start)
    }

    pub fn label_distribution(&mut self, seg: Segment, split: usize) -> Result<LabelDistribution> {
        let node = self.label_node(seg, split)?;
        let probs = self.graph.value(node).data().iter().map(|v| v.as_f64()).collect();
        Ok(LabelDistribution { probs })
    }

    pub fn into_graph(self) -> Graph<T> {
        self.graph
    }
}

impl<T: Scalar> SegmentScorer for DocumentForward<'_, T> {
    fn score_segment(&mut self, seg: Segment) -> Result<SplitScores> {
        let node = self.segment(seg)?.probs;
        let probs = self.graph.value(node).data().iter().map(|v| v.as_f64()).collect();
        SplitScores::new(seg, probs)
    }

    fn predict_label(&mut self, seg: Segment, split: usize) -> Result<(Label, f64)> {
        let dist = self.label_distribution(seg, split)?;
        let k = dist.argmax();
        Ok((self.model.labels.label(k)?, dist.probs[k]))
    }
}

/// Parses `doc` with `model`.
pub fn parse_document<T: Scalar>(model: &Model<T>, doc: &Document, features: Option<&FeatureTable<T>>) -> Result<ParseResult> {
    if doc.len() == 1 {
        return Ok(ParseResult {
            tree: RstTree::Leaf(1),
            decisions: Vec::new(),
        });
    }
    let mut fwd = DocumentForward::new(model, doc, features)?;
    decode(&mut fwd, doc.len())
}

/// Scores 1.0 at the gold split of every segment and returns the gold label.
pub struct GoldOracleScorer {
    order: CanonicalOrder,
}

impl GoldOracleScorer {
    pub fn new(gold: &RstTree) -> Self {
        GoldOracleScorer {
            order: tree_to_order(gold),
        }
    }
}

impl SegmentScorer for GoldOracleScorer {
    fn score_segment(&mut self, seg: Segment) -> Result<SplitScores> {
        let (split, _) = match_gold(seg, &self.order)?;
        let probs = (seg.start..=seg.end).map(|j| if j == split { 1.0 } else { 0.0 }).collect();
        SplitScores::new(seg, probs)
    }

    fn predict_label(&mut self, seg: Segment, _split: usize) -> Result<(Label, f64)> {
        let (_, label) = match_gold(seg, &self.order)?;
        Ok((label, 1.0))
    }
}
