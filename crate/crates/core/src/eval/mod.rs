//! Parseval scoring: constituent extraction, micro-averaged F1, length
//! buckets and confusion matrices.

mod analysis;

pub use analysis::{bucket_report, confusion_matrices, render_buckets, top_relations, BucketRow, ConfusionMatrix, Confusions, BUCKETS, OTHER};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{Nuclearity, RstTree, Status, SPAN_TAG};

/// Which constituents a tree contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Internal nodes, each tagged with its own nuclearity and relation.
    Original,
    /// Every non-root node, tagged with its status and relation as a child.
    Rst,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Metric::Original),
            "rst" => Ok(Metric::Rst),
            other => Err(Error::Argument(format!("unknown metric `{other}` (expected original or rst)"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Original => "original",
            Metric::Rst => "rst",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constituent {
    pub start: usize,
    pub end: usize,
    pub nuclearity: Option<String>,
    pub relation: Option<String>,
}

/// One constituent per internal node; the root is dropped unless
/// `include_root`.
pub fn extract_original_parseval(tree: &RstTree, include_root: bool) -> Vec<Constituent> {
    let mut out = Vec::new();
    tree.visit_preorder(&mut |node, depth| {
        if let RstTree::Internal { label, span, .. } = node {
            if depth > 0 || include_root {
                out.push(Constituent {
                    start: span.start,
                    end: span.end,
                    nuclearity: Some(label.nuclearity.to_string()),
                    relation: Some(label.relation.to_string()),
                });
            }
        }
    });
    out
}

/// One constituent per non-root node, leaves included. A child is tagged
/// `N` or `S`; its relation is the parent's unless it is the nucleus of a
/// mononuclear relation, which gets `span`.
pub fn extract_rst_parseval(tree: &RstTree) -> Vec<Constituent> {
    let mut out = Vec::new();
    tree.visit_preorder(&mut |node, _| {
        if let RstTree::Internal { left, right, label, .. } = node {
            let (ls, rs) = label.nuclearity.statuses();
            for (child, status) in [(left, ls), (right, rs)] {
                let span = child.span();
                let relation = if label.nuclearity == Nuclearity::NN || status == Status::Satellite {
                    label.relation.to_string()
                } else {
                    SPAN_TAG.to_string()
                };
                out.push(Constituent {
                    start: span.start,
                    end: span.end,
                    nuclearity: Some(status.to_string()),
                    relation: Some(relation),
                });
            }
        }
    });
    out
}

pub fn extract(tree: &RstTree, metric: Metric, include_root: bool) -> Vec<Constituent> {
    match metric {
        Metric::Original => extract_original_parseval(tree, include_root),
        Metric::Rst => extract_rst_parseval(tree),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Span,
    Nuclearity,
    Relation,
    Full,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Span, Level::Nuclearity, Level::Relation, Level::Full];

    fn matches(self, g: &Constituent, p: &Constituent) -> bool {
        let span = g.start == p.start && g.end == p.end;
        let nuc = g.nuclearity == p.nuclearity;
        let rel = g.relation == p.relation;
        match self {
            Level::Span => span,
            Level::Nuclearity => span && nuc,
            Level::Relation => span && rel,
            Level::Full => span && nuc && rel,
        }
    }
}

/// Pooled match counts at one level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
}

impl Counts {
    pub fn precision(&self) -> Option<f64> {
        (self.pred > 0).then(|| self.matched as f64 / self.pred as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        (self.gold > 0).then(|| self.matched as f64 / self.gold as f64)
    }

    /// F1 as a percentage; undefined when there is nothing to score.
    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        if p + r == 0.0 {
            Some(0.0)
        } else {
            Some(100.0 * 2.0 * p * r / (p + r))
        }
    }
}

/// Percentage with one decimal, or an em dash when undefined.
pub fn format_score(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.1}"),
        None => "\u{2014}".to_string(),
    }
}

/// Micro-averaged counts at `level`, pooled over documents.
pub fn micro_f1(golds: &[Vec<Constituent>], preds: &[Vec<Constituent>], level: Level) -> Result<Counts> {
    if golds.len() != preds.len() {
        return Err(Error::Argument(format!("{} gold documents but {} predicted", golds.len(), preds.len())));
    }
    let mut c = Counts::default();
    for (g, p) in golds.iter().zip(preds) {
        c.gold += g.len();
        c.pred += p.len();
        let by_span: HashMap<(usize, usize), Vec<&Constituent>> = g.iter().fold(HashMap::new(), |mut m, x| {
            m.entry((x.start, x.end)).or_default().push(x);
            m
        });
        let mut used: HashMap<(usize, usize), Vec<bool>> = by_span.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
        for x in p {
            let key = (x.start, x.end);
            let Some(cands) = by_span.get(&key) else { continue };
            let flags = used.get_mut(&key).expect("same keys");
            if let Some(i) = (0..cands.len()).find(|&i| !flags[i] && level.matches(cands[i], x)) {
                flags[i] = true;
                c.matched += 1;
            }
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MetricReport {
    pub span: Counts,
    pub nuclearity: Counts,
    pub relation: Counts,
    pub full: Counts,
}

impl MetricReport {
    pub fn from_constituents(golds: &[Vec<Constituent>], preds: &[Vec<Constituent>]) -> Result<Self> {
        Ok(MetricReport {
            span: micro_f1(golds, preds, Level::Span)?,
            nuclearity: micro_f1(golds, preds, Level::Nuclearity)?,
            relation: micro_f1(golds, preds, Level::Relation)?,
            full: micro_f1(golds, preds, Level::Full)?,
        })
    }

    /// Scores aligned gold and predicted trees.
    pub fn from_trees(golds: &[&RstTree], preds: &[&RstTree], metric: Metric, include_root: bool) -> Result<Self> {
        let g: Vec<_> = golds.iter().map(|t| extract(t, metric, include_root)).collect();
        let p: Vec<_> = preds.iter().map(|t| extract(t, metric, include_root)).collect();
        MetricReport::from_constituents(&g, &p)
    }

    pub fn level(&self, level: Level) -> Counts {
        match level {
            Level::Span => self.span,
            Level::Nuclearity => self.nuclearity,
            Level::Relation => self.relation,
            Level::Full => self.full,
        }
    }

    pub fn s(&self) -> Option<f64> {
        self.span.f1()
    }

    pub fn n(&self) -> Option<f64> {
        self.nuclearity.f1()
    }

    pub fn r(&self) -> Option<f64> {
        self.relation.f1()
    }

    pub fn f(&self) -> Option<f64> {
        self.full.f1()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "S {}  N {}  R {}  F {}",
            format_score(self.s()),
            format_score(self.n()),
            format_score(self.r()),
            format_score(self.f())
        )
    }
}
