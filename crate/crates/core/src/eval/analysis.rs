use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use super::{format_score, Metric, MetricReport};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tree::{Label, Nuclearity, Relation, RstTree, Segment};

/// Document-length buckets by EDU count: `(lo, hi]`, open-ended last.
pub const BUCKETS: [(usize, Option<usize>); 4] = [(0, Some(50)), (50, Some(100)), (100, Some(150)), (150, None)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BucketRow {
    pub lo: usize,
    pub hi: Option<usize>,
    pub docs: usize,
    /// Gold constituents in the bucket.
    pub spans: usize,
    pub report: MetricReport,
}

impl BucketRow {
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("({}, {}]", self.lo, hi),
            None => format!("({}, \u{221e})", self.lo),
        }
    }
}

/// Micro-F1 within each length bucket. `items` holds `(q, gold, pred)`.
pub fn bucket_report(items: &[(usize, &RstTree, &RstTree)], metric: Metric, include_root: bool) -> Result<Vec<BucketRow>> {
    BUCKETS
        .iter()
        .map(|&(lo, hi)| {
            let inside: Vec<_> = items
                .iter()
                .filter(|(q, _, _)| *q > lo && hi.is_none_or(|h| *q <= h))
                .collect();
            let golds: Vec<&RstTree> = inside.iter().map(|x| x.1).collect();
            let preds: Vec<&RstTree> = inside.iter().map(|x| x.2).collect();
            let report = MetricReport::from_trees(&golds, &preds, metric, include_root)?;
            Ok(BucketRow {
                lo,
                hi,
                docs: inside.len(),
                spans: report.span.gold,
                report,
            })
        })
        .collect()
}

pub fn render_buckets(rows: &[BucketRow]) -> String {
    let mut out = format!("{:<12} {:>6} {:>7} {:>6} {:>6} {:>6} {:>6}\n", "#EDUs", "#Docs", "#Spans", "S", "N", "R", "F");
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>6} {:>7} {:>6} {:>6} {:>6} {:>6}\n",
            r.label(),
            r.docs,
            r.spans,
            format_score(r.report.s()),
            format_score(r.report.n()),
            format_score(r.report.r()),
            format_score(r.report.f())
        ));
    }
    out
}

/// Rows are gold classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> usize {
        self.row_sums().iter().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(i, r)| r.iter().enumerate().all(|(j, &c)| i == j || c == 0))
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let corner = "gold\\pred";
        let w = self.labels.iter().map(|l| l.len()).max().unwrap_or(4).max(6);
        let first = w.max(corner.len());
        write!(f, "{corner:<first$}")?;
        for l in &self.labels {
            write!(f, " {l:>w$}")?;
        }
        writeln!(f)?;
        for (l, row) in self.labels.iter().zip(&self.counts) {
            write!(f, "{l:<first$}")?;
            for c in row {
                write!(f, " {c:>w$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Confusions {
    pub nuclearity: ConfusionMatrix,
    pub relation: ConfusionMatrix,
}

pub const OTHER: &str = "other";

/// The `k` most frequent relations in the gold trees of `docs`
/// (ties broken by name).
pub fn top_relations(docs: &[Document], k: usize) -> Vec<Relation> {
    let mut freq: BTreeMap<Relation, usize> = BTreeMap::new();
    for d in docs {
        if let Some(g) = &d.gold {
            for n in g.internal_nodes() {
                *freq.entry(n.label().expect("internal").relation.clone()).or_default() += 1;
            }
        }
    }
    let mut v: Vec<(Relation, usize)> = freq.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(r, _)| r).collect()
}

fn splits(tree: &RstTree) -> HashMap<Segment, Label> {
    tree.internal_nodes()
        .into_iter()
        .map(|n| (n.span(), n.label().expect("internal").clone()))
        .collect()
}

/// Nuclearity (3x3) and relation (`top` plus "other") confusion over the
/// internal nodes whose spans gold and prediction share.
pub fn confusion_matrices(pairs: &[(&RstTree, &RstTree)], top: &[Relation]) -> Result<Confusions> {
    if top.iter().any(|r| r.as_str() == OTHER) {
        return Err(Error::Argument(format!("`{OTHER}` cannot be a named relation")));
    }
    let mut nuc = ConfusionMatrix::new(Nuclearity::ALL.iter().map(|n| n.to_string()).collect());
    let mut rel_labels: Vec<String> = top.iter().map(|r| r.to_string()).collect();
    rel_labels.push(OTHER.to_string());
    let mut rel = ConfusionMatrix::new(rel_labels);
    let rel_index = |r: &Relation| top.iter().position(|t| t == r).unwrap_or(top.len());
    for (gold, pred) in pairs {
        let p = splits(pred);
        let mut g: Vec<(Segment, Label)> = splits(gold).into_iter().collect();
        g.sort();
        for (span, gl) in g {
            if let Some(pl) = p.get(&span) {
                nuc.counts[gl.nuclearity.index()][pl.nuclearity.index()] += 1;
                rel.counts[rel_index(&gl.relation)][rel_index(&pl.relation)] += 1;
            }
        }
    }
    Ok(Confusions {
        nuclearity: nuc,
        relation: rel,
    })
}
