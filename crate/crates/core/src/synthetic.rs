//! Seeded synthetic corpora with a learnable tree structure.
//!
//! Each document gets a uniformly random binary tree. The EDU a node
//! splits after opens with three marker tokens: `cue_<relation>`,
//! `nuc_<nuclearity>` and `depth_<d>` (the node's depth, root = 0). The
//! split of any gold span is therefore the shallowest marked EDU inside it,
//! and its label is readable from the markers. The rest of every EDU is
//! random filler.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Edu};
use crate::error::{Error, Result};
use crate::tree::{Label, Nuclearity, RstTree};

/// The 18 coarse relation classes of the RST Discourse Treebank.
pub const RST_DT_RELATIONS: [&str; 18] = [
    "attribution",
    "background",
    "cause",
    "comparison",
    "condition",
    "contrast",
    "elaboration",
    "enablement",
    "evaluation",
    "explanation",
    "joint",
    "manner-means",
    "same-unit",
    "summary",
    "temporal",
    "textual-organization",
    "topic-change",
    "topic-comment",
];

pub const POS_TAGS: [&str; 10] = ["NN", "NNP", "VB", "VBD", "JJ", "RB", "DT", "IN", "PRP", "CC"];

const FILLER_WORDS: usize = 40;

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// Samples a binary tree shape over `start..start+len` uniformly among all
/// Catalan(len-1) shapes; returns the split points in pre-order.
fn sample_shape<R: Rng>(rng: &mut R, start: usize, len: usize, lnf: &[f64], out: &mut Vec<(usize, usize, usize, usize)>, depth: usize) {
    if len < 2 {
        return;
    }
    // ln Catalan(n) for a subtree with n + 1 leaves
    let ln_cat = |leaves: usize| {
        let n = leaves - 1;
        lnf[2 * n] - lnf[n + 1] - lnf[n]
    };
    let logw: Vec<f64> = (1..len).map(|k| ln_cat(k) + ln_cat(len - k)).collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut k = len - 1;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            k = i + 1;
            break;
        }
        u -= w;
    }
    out.push((start, start + len - 1, start + k - 1, depth));
    sample_shape(rng, start, k, lnf, out, depth + 1);
    sample_shape(rng, start + k, len - k, lnf, out, depth + 1);
}

/// A uniformly random binary tree over EDUs `1..=q` with relations drawn
/// uniformly from [`RST_DT_RELATIONS`] and uniform nuclearity.
pub fn random_binary_tree<R: Rng>(rng: &mut R, q: usize) -> RstTree {
    random_tree_with_depths(rng, q).0
}

/// Like [`random_binary_tree`], also returning `(split, label, depth)` for
/// every internal node in pre-order.
fn random_tree_with_depths<R: Rng>(rng: &mut R, q: usize) -> (RstTree, Vec<(usize, Label, usize)>) {
    assert!(q >= 1, "a tree needs at least one EDU");
    let lnf = ln_factorials(2 * q);
    let mut shape = Vec::with_capacity(q.saturating_sub(1));
    sample_shape(rng, 1, q, &lnf, &mut shape, 0);
    let nodes: Vec<(usize, Label, usize)> = shape
        .iter()
        .map(|&(_, _, split, depth)| {
            let rel = RST_DT_RELATIONS[rng.gen_range(0..RST_DT_RELATIONS.len())];
            let nuc = Nuclearity::ALL[rng.gen_range(0..3)];
            (split, Label::new(nuc, rel), depth)
        })
        .collect();
    let tree = assemble(&shape, &nodes, 1, q);
    (tree, nodes)
}

fn assemble(shape: &[(usize, usize, usize, usize)], nodes: &[(usize, Label, usize)], start: usize, end: usize) -> RstTree {
    if start == end {
        return RstTree::Leaf(start);
    }
    let k = shape
        .iter()
        .position(|&(s, e, _, _)| s == start && e == end)
        .expect("every sampled span has a node");
    let split = shape[k].2;
    RstTree::internal(
        assemble(shape, nodes, start, split),
        assemble(shape, nodes, split + 1, end),
        nodes[k].1.clone(),
    )
    .expect("sampled children are adjacent")
}

/// Generates `n_docs` documents with `q_min..=q_max` EDUs each.
pub fn generate_synthetic(seed: u64, n_docs: usize, q_min: usize, q_max: usize) -> Result<Vec<Document>> {
    if q_min < 2 {
        return Err(Error::Argument(format!("q_min must be at least 2, got {q_min}")));
    }
    if q_min > q_max {
        return Err(Error::Argument(format!("q_min {q_min} exceeds q_max {q_max}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|k| {
            let q = rng.gen_range(q_min..=q_max);
            synthetic_document(&mut rng, format!("syn{seed}-{k:04}"), q)
        })
        .collect()
}

fn synthetic_document<R: Rng>(rng: &mut R, doc_id: String, q: usize) -> Result<Document> {
    let (tree, nodes) = random_tree_with_depths(rng, q);
    let mut markers: Vec<Option<(&Label, usize)>> = vec![None; q + 1];
    for (split, label, depth) in &nodes {
        markers[*split] = Some((label, *depth));
    }
    let mut edus = Vec::with_capacity(q);
    for i in 1..=q {
        let mut tokens = Vec::new();
        let mut paragraph_final = i == q;
        if let Some((label, depth)) = markers[i] {
            tokens.push(format!("cue_{}", label.relation));
            tokens.push(format!("nuc_{}", label.nuclearity));
            tokens.push(format!("depth_{depth}"));
            paragraph_final = rng.gen_bool(0.5);
        }
        let filler = rng.gen_range(2..=5);
        for _ in 0..filler {
            tokens.push(format!("w{:02}", rng.gen_range(0..FILLER_WORDS)));
        }
        let pos_tags = tokens
            .iter()
            .map(|_| POS_TAGS.choose(rng).expect("non-empty").to_string())
            .collect();
        let sentence_final = paragraph_final || rng.gen_bool(0.3);
        edus.push(Edu {
            index: i,
            tokens,
            pos_tags,
            paragraph_final,
            sentence_final,
        });
    }
    Document::new(doc_id, edus, Some(tree))
}
