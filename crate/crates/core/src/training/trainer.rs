use std::fmt;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::loss::segment_weight;
use super::oracle::{build_dynamic_targets, build_static_targets, SegmentTarget};
use crate::corpus::Document;
use crate::embeddings::FeatureTable;
use crate::error::{Error, Result};
use crate::eval::{format_score, Metric, MetricReport};
use crate::model::Model;
use crate::nn::{Adam, Graph, NodeId};
use crate::parser::{parse_document, predict_split, DocumentForward, SegmentScorer};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    Static,
    Dynamic,
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::Static => "static",
            OracleMode::Dynamic => "dynamic",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Original-Parseval scores on the dev set, when one is supplied.
    pub dev: Option<MetricReport>,
    /// Mean per-document segmentation loss.
    pub loss_seg: f64,
    /// Mean cross-entropy per split decision.
    pub loss_lbl: f64,
    pub oracle: OracleMode,
}

impl EpochLog {
    pub fn full(&self) -> Option<f64> {
        self.dev.as_ref().and_then(|r| r.f())
    }
}

/// `epoch S N R F loss_seg loss_lbl oracle_mode`
impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |v: Option<f64>| format_score(v);
        let d = self.dev.as_ref();
        write!(
            f,
            "{} {} {} {} {} {:.6} {:.6} {}",
            self.epoch,
            s(d.and_then(|r| r.s())),
            s(d.and_then(|r| r.n())),
            s(d.and_then(|r| r.r())),
            s(d.and_then(|r| r.f())),
            self.loss_seg,
            self.loss_lbl,
            self.oracle
        )
    }
}

pub struct TrainOutcome<T> {
    pub last: Model<T>,
    /// Best epoch by dev Full; the last model when no dev set is given.
    pub best: Model<T>,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Parses `docs` and scores them against their gold trees.
pub fn evaluate_model<T: Scalar>(model: &Model<T>, docs: &[Document], features: Option<&FeatureTable<T>>, metric: Metric, include_root: bool) -> Result<MetricReport> {
    let mut preds = Vec::with_capacity(docs.len());
    for d in docs {
        preds.push(parse_document(model, d, features)?.tree);
    }
    let golds = docs
        .iter()
        .map(|d| {
            d.gold
                .as_ref()
                .ok_or_else(|| Error::Data(format!("document {} has no gold tree", d.doc_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<_> = preds.iter().collect();
    MetricReport::from_trees(&golds, &preds, metric, include_root)
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SHUFFLE: u64 = 1;
const DROPOUT: u64 = 2;
const COIN: u64 = 3;

/// Loss nodes of one document on its forward tape.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    /// `lambda1 / batch_docs * seg + lambda2 / batch_decisions * lbl_sum`
    pub loss: NodeId,
    /// Penalized segmentation loss of the document.
    pub seg: NodeId,
    /// Summed label cross-entropy over the document's decisions.
    pub lbl_sum: NodeId,
}

/// Adds the training loss for `targets` to the forward tape. Split
/// probabilities are read at each target's segment, label distributions
/// at its gold split.
pub fn document_loss<T: Scalar>(fwd: &mut DocumentForward<'_, T>, targets: &[SegmentTarget], cfg: &TrainConfig, batch_docs: usize, batch_decisions: usize) -> Result<LossNodes> {
    if targets.is_empty() {
        return Err(Error::Argument("document loss needs at least one target".into()));
    }
    let mut seg_terms = Vec::with_capacity(targets.len());
    let mut lbl_terms = Vec::with_capacity(targets.len());
    for t in targets {
        let probs = fwd.segment(t.segment)?.probs;
        let y: Vec<T> = t.y.iter().map(|&v| T::lit(f64::from(v))).collect();
        let w = segment_weight(t.segment.end - t.segment.start, cfg.beta, cfg.penalty_enabled);
        let class = fwd.model.labels.class(&t.gold_label)?;
        let dist = fwd.label_node(t.segment, t.gold_split)?;
        let g = &mut fwd.graph;
        let bce = g.bce(probs, &y)?;
        seg_terms.push(g.scale(bce, T::lit(w))?);
        lbl_terms.push(g.nll(dist, class)?);
    }
    let g = &mut fwd.graph;
    let seg_sum = g.sum(&seg_terms)?;
    let seg = g.scale(seg_sum, T::lit(1.0 / targets.len() as f64))?;
    let lbl_sum = g.sum(&lbl_terms)?;
    let a = g.scale(seg, T::lit(cfg.lambda1 / batch_docs as f64))?;
    let b = g.scale(lbl_sum, T::lit(cfg.lambda2 / batch_decisions as f64))?;
    let loss = g.add(a, b)?;
    Ok(LossNodes { loss, seg, lbl_sum })
}

struct DocLoss {
    seg: f64,
    lbl_sum: f64,
    decisions: usize,
}

/// Builds the loss of one document, backpropagates it into the store and
/// returns the unweighted loss parts.
#[allow(clippy::too_many_arguments)]
fn doc_step<T: Scalar>(model: &mut Model<T>, doc: &Document, features: Option<&FeatureTable<T>>, cfg: &TrainConfig, mode: OracleMode, epoch: usize, doc_key: u64, batch_docs: usize, batch_decisions: usize) -> Result<DocLoss> {
    let graph = Graph::training(cfg.dropout, mix(cfg.seed ^ DROPOUT, epoch as u64, doc_key))?;
    let mut fwd = DocumentForward::with_graph(model, graph, &model.encoder, doc, features)?;
    let targets = match mode {
        OracleMode::Static => build_static_targets(doc)?,
        OracleMode::Dynamic => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed ^ COIN, epoch as u64, doc_key));
            build_dynamic_targets(doc, |seg| Ok(predict_split(&fwd.score_segment(seg)?)), cfg.alpha, &mut rng)?
        }
    };
    let nodes = document_loss(&mut fwd, &targets, cfg, batch_docs, batch_decisions)?;
    let g = &fwd.graph;
    let out = DocLoss {
        seg: g.value(nodes.seg).data()[0].as_f64(),
        lbl_sum: g.value(nodes.lbl_sum).data()[0].as_f64(),
        decisions: targets.len(),
    };
    let loss = nodes.loss;
    let graph = fwd.into_graph();
    graph.backward(loss, &mut model.store)?;
    Ok(out)
}

/// Trains `model` on `train_docs`. `on_epoch` sees every epoch's log line and
/// returns `false` to stop early.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train_docs: &[Document],
    dev: Option<&[Document]>,
    features: Option<&FeatureTable<T>>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog) -> bool,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let mut usable = Vec::new();
    for (k, d) in train_docs.iter().enumerate() {
        let gold = d
            .gold
            .as_ref()
            .ok_or_else(|| Error::Data(format!("training document {} has no gold tree", d.doc_id)))?;
        let unknown: Vec<String> = gold
            .internal_nodes()
            .iter()
            .map(|n| n.label().expect("internal").relation.clone())
            .filter(|r| !model.labels.contains(r))
            .map(|r| r.to_string())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Data(format!("document {} uses relations outside the model's label set: {}", d.doc_id, unknown.join(", "))));
        }
        if d.len() >= 2 {
            usable.push((k as u64, d));
        }
    }
    if usable.is_empty() {
        return Err(Error::Data("no training document has two or more EDUs".into()));
    }
    let adam = Adam::new(cfg.lr, cfg.adam_eps);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Model<T>)> = None;
    for epoch in 1..=cfg.max_epochs {
        let mode = if epoch > cfg.oracle_start_epoch && cfg.alpha > 0.0 {
            OracleMode::Dynamic
        } else {
            OracleMode::Static
        };
        let mut order = usable.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed ^ SHUFFLE, epoch as u64, 0)));
        let (mut seg_total, mut lbl_total, mut n_docs, mut n_dec) = (0.0, 0.0, 0usize, 0usize);
        model.store.zero_grad();
        let batches: Vec<_> = order.chunks(cfg.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            let decisions: usize = batch.iter().map(|(_, d)| d.len() - 1).sum();
            for (key, doc) in batch.iter() {
                let l = doc_step(&mut model, doc, features, cfg, mode, epoch, *key, batch.len(), decisions).map_err(|e| match e {
                    Error::Numeric(m) => Error::Divergence(format!("epoch {epoch}, document {}: {m}", doc.doc_id)),
                    other => other,
                })?;
                if !(l.seg.is_finite() && l.lbl_sum.is_finite()) {
                    return Err(Error::Divergence(format!("epoch {epoch}, document {}: non-finite loss", doc.doc_id)));
                }
                seg_total += l.seg;
                lbl_total += l.lbl_sum;
                n_docs += 1;
                n_dec += l.decisions;
            }
            if (b + 1) % cfg.grad_accum == 0 || b + 1 == batches.len() {
                adam.step_all(&mut model.store).map_err(|e| Error::Divergence(format!("epoch {epoch}: {e}")))?;
            }
        }
        let dev_report = match dev {
            Some(docs) => Some(evaluate_model(&model, docs, features, Metric::Original, false)?),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            dev: dev_report,
            loss_seg: seg_total / n_docs as f64,
            loss_lbl: lbl_total / n_dec as f64,
            oracle: mode,
        };
        info!("{entry}");
        if let Some(f) = entry.full() {
            if best.as_ref().is_none_or(|(bf, _, _)| f > *bf) {
                debug!("new best dev Full {f:.1} at epoch {epoch}");
                best = Some((f, epoch, model.clone()));
            }
        }
        let go_on = on_epoch(&entry);
        log.push(entry);
        if !go_on {
            break;
        }
    }
    let last_epoch = log.len();
    let (best_epoch, best) = match best {
        Some((_, e, m)) => (e, m),
        None => (last_epoch, model.clone()),
    };
    Ok(TrainOutcome {
        last: model,
        best,
        best_epoch,
        log,
    })
}
