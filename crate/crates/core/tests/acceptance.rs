//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::collections::{BTreeSet, HashSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toprst::corpus::{read_corpus, write_corpus, Document};
use toprst::embeddings::FeatureTable;
use toprst::eval::{self, confusion_matrices, Constituent, Metric, MetricReport, BUCKETS, OTHER};
use toprst::nn::gradcheck::{finite_difference_check, GradCheckOptions};
use toprst::parser::{decode, parse_document, DocumentForward, GoldOracleScorer};
use toprst::synthetic::{generate_synthetic, random_binary_tree, RST_DT_RELATIONS};
use toprst::training::{
    build_dynamic_targets, build_static_targets, document_loss, evaluate_model, model_dynamic_targets, segment_weight, train,
};
use toprst::vocab::{LabelSet, Vocab};
use toprst::{order_to_tree, tree_to_order, EncoderConfig, Label, Model64, ModelConfig, Nuclearity, RstTree, Segment, TrainConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn timed(limit: Duration, start: Instant) -> Result<String, String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(format!("{t:.2?}"))
}

fn tiny_config(syntax: bool) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            word_dim: 4,
            pos_dim: 3,
            edu_type_dim: 2,
            syntax_dim: 3,
            rnn_hidden: 3,
            use_syntax: syntax,
            use_paragraph_feature: true,
            max_edu_tokens: None,
        },
        segmenter_hidden: 3,
    }
}

/// The desk-scale model used for the learnability runs.
fn desk_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            word_dim: 32,
            pos_dim: 8,
            edu_type_dim: 8,
            rnn_hidden: 32,
            ..EncoderConfig::default()
        },
        segmenter_hidden: 32,
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..1000 {
        let q = rng.gen_range(1..=40);
        let t = random_binary_tree(&mut rng, q);
        let back = order_to_tree(&tree_to_order(&t)).map_err(|e| e.to_string())?;
        ensure(back == t, format!("tree {k} (q={q}) did not round-trip"))?;
    }
    Ok(format!("1000 trees round-trip in {}", timed(Duration::from_secs(5), start)?))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let docs = generate_synthetic(2, 200, 2, 40).map_err(|e| e.to_string())?;
    let mut preds = Vec::new();
    for d in &docs {
        let gold = d.gold.as_ref().unwrap();
        let out = decode(&mut GoldOracleScorer::new(gold), d.len()).map_err(|e| e.to_string())?;
        ensure(&out.tree == gold, format!("{} not reproduced", d.doc_id))?;
        ensure(out.decisions.len() == d.len() - 1, "wrong number of decisions")?;
        preds.push(out.tree);
    }
    let golds: Vec<&RstTree> = docs.iter().map(|d| d.gold.as_ref().unwrap()).collect();
    let preds: Vec<&RstTree> = preds.iter().collect();
    for metric in [Metric::Original, Metric::Rst] {
        let r = MetricReport::from_trees(&golds, &preds, metric, false).map_err(|e| e.to_string())?;
        for v in [r.s(), r.n(), r.r(), r.f()] {
            ensure(v == Some(100.0), format!("{metric}: {r}"))?;
        }
    }
    Ok(format!("200 documents, 100.0 at all levels, both variants, {}", timed(Duration::from_secs(10), start)?))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..50u64 {
        let docs = generate_synthetic(100 + k, 1, 2, 20).map_err(|e| e.to_string())?;
        let doc = &docs[0];
        let labels = LabelSet::new(RST_DT_RELATIONS).unwrap();
        let model = Model64::new(tiny_config(false), Vocab::words(&docs), Vocab::pos_tags(&docs), labels, rng.gen()).map_err(|e| e.to_string())?;
        let mut coin = ChaCha8Rng::seed_from_u64(rng.gen());
        let dynamic: BTreeSet<_> = model_dynamic_targets(doc, &model, None, 0.0, &mut coin).map_err(|e| e.to_string())?.into_iter().collect();
        let stat: BTreeSet<_> = build_static_targets(doc).map_err(|e| e.to_string())?.into_iter().collect();
        ensure(dynamic == stat, format!("triple {k}: target sets differ"))?;
    }
    Ok("50 (model, document, seed) triples: dynamic(alpha=0) == static".into())
}

fn criterion_4() -> Check {
    // r_k labels the node split k-th in pre-order, as in O = [2, 1, 3, -]
    let l = |r: &str| Label::new(Nuclearity::NN, r);
    let gold = RstTree::internal(
        RstTree::internal(RstTree::Leaf(1), RstTree::Leaf(2), l("r2")).unwrap(),
        RstTree::internal(RstTree::Leaf(3), RstTree::Leaf(4), l("r3")).unwrap(),
        l("r1"),
    )
    .unwrap();
    let order = tree_to_order(&gold);
    ensure(order.ranks() == [Some(2), Some(1), Some(3), None], format!("O = {:?}", order.ranks()))?;
    let doc = generate_synthetic(4, 1, 4, 4).unwrap().remove(0);
    let doc = Document::new("fig5", doc.edus, Some(gold)).map_err(|e| e.to_string())?;
    let root = Segment::new(1, 4).unwrap();
    let targets = build_dynamic_targets(&doc, |seg| Ok(if seg == root { 3 } else { seg.start }), 1.0, &mut ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| e.to_string())?;
    let next = &targets[1];
    ensure(next.segment == Segment::new(1, 3).unwrap(), format!("second segment {}", next.segment))?;
    ensure(next.gold_split == 2, format!("gold split E{}", next.gold_split))?;
    ensure(next.gold_label.relation.as_str() == "r1", format!("label {}", next.gold_label))?;
    Ok("predicted split at E3 -> segment (1, 3) targets E2 with r1".into())
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let docs = generate_synthetic(5, 1, 3, 3).map_err(|e| e.to_string())?;
    let doc = &docs[0];
    let labels = LabelSet::from_documents(&docs).map_err(|e| e.to_string())?;
    let model = Model64::new(tiny_config(true), Vocab::words(&docs), Vocab::pos_tags(&docs), labels, 9).map_err(|e| e.to_string())?;
    let mut feats = FeatureTable::new(3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for e in &doc.edus {
        for t in 1..=e.tokens.len() {
            feats.insert(&doc.doc_id, e.index, t, (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        }
    }
    let targets = build_static_targets(doc).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::default();
    let mut store = model.store.clone();
    let opts = GradCheckOptions {
        max_per_param: usize::MAX,
        tolerance: 1e-4,
        ..Default::default()
    };
    let report = finite_difference_check(
        &mut store,
        |store, g| {
            let graph = std::mem::take(g);
            let mut fwd = DocumentForward::with_store(&model, store, graph, &model.encoder, doc, Some(&feats))?;
            let nodes = document_loss(&mut fwd, &targets, &cfg, 1, targets.len())?;
            *g = fwd.into_graph();
            Ok(nodes.loss)
        },
        &opts,
    )
    .map_err(|e| e.to_string())?;
    ensure(report.passed(), report.to_string())?;
    ensure(report.checked == store.num_values(), "not every coordinate was checked")?;
    ensure(report.params.len() == store.len() && report.params.iter().all(|p| p.checked > 0), "a parameter tensor was skipped")?;
    Ok(format!(
        "{} tensors, {} coordinates, max rel. error {:.2e}, {}",
        report.params.len(),
        report.checked,
        report.max_error,
        timed(Duration::from_secs(60), start)?
    ))
}

fn criterion_6() -> Check {
    for beta in [0.0, 0.35, 0.7, 1.0, 2.5] {
        ensure(segment_weight(1, beta, true) == 2.0, format!("weight(1, {beta}) != 2"))?;
    }
    let independent = 1.0 + (0.35 * 4f64.ln()).exp();
    let w = segment_weight(4, 0.35, true);
    ensure((w - independent).abs() < 1e-3, format!("weight(4, 0.35) = {w}, expected {independent}"))?;
    ensure(TrainConfig::default().beta == 0.35, "default beta is not 0.35")?;
    Ok(format!("weight(1, *) = 2, weight(4, 0.35) = {w:.4}, default beta 0.35"))
}

/// Pooled set-intersection F1 over tuples projected to each level.
fn brute_force_f1(golds: &[Vec<Constituent>], preds: &[Vec<Constituent>]) -> [f64; 4] {
    let project = |c: &Constituent, level: usize| -> (usize, usize, Option<String>, Option<String>) {
        let nuc = matches!(level, 1 | 3).then(|| c.nuclearity.clone()).flatten();
        let rel = matches!(level, 2 | 3).then(|| c.relation.clone()).flatten();
        (c.start, c.end, nuc, rel)
    };
    let mut out = [0.0; 4];
    for (level, slot) in out.iter_mut().enumerate() {
        let (mut hit, mut ng, mut np) = (0usize, 0usize, 0usize);
        for (g, p) in golds.iter().zip(preds) {
            let gs: HashSet<_> = g.iter().map(|c| project(c, level)).collect();
            let ps: HashSet<_> = p.iter().map(|c| project(c, level)).collect();
            hit += gs.intersection(&ps).count();
            ng += gs.len();
            np += ps.len();
        }
        let (p, r) = (hit as f64 / np as f64, hit as f64 / ng as f64);
        *slot = if hit == 0 { 0.0 } else { 100.0 * 2.0 * p * r / (p + r) };
    }
    out
}

fn random_labelled(rng: &mut ChaCha8Rng, q: usize) -> RstTree {
    // a small label inventory so that partial label matches are common
    fn relabel(t: RstTree, rng: &mut ChaCha8Rng) -> RstTree {
        match t {
            RstTree::Leaf(i) => RstTree::Leaf(i),
            RstTree::Internal { left, right, .. } => {
                let l = relabel(*left, rng);
                let r = relabel(*right, rng);
                let label = Label::new(Nuclearity::ALL[rng.gen_range(0..3)], ["a", "b", "c"][rng.gen_range(0..3)]);
                RstTree::internal(l, r, label).unwrap()
            }
        }
    }
    let t = random_binary_tree(rng, q);
    relabel(t, rng)
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs: Vec<(RstTree, RstTree)> = (0..200)
        .map(|_| {
            let q = rng.gen_range(2..=12);
            (random_labelled(&mut rng, q), random_labelled(&mut rng, q))
        })
        .collect();
    for metric in [Metric::Original, Metric::Rst] {
        let g: Vec<_> = pairs.iter().map(|(a, _)| eval::extract(a, metric, false)).collect();
        let p: Vec<_> = pairs.iter().map(|(_, b)| eval::extract(b, metric, false)).collect();
        let report = MetricReport::from_constituents(&g, &p).map_err(|e| e.to_string())?;
        let ours = [report.s(), report.n(), report.r(), report.f()].map(|v| v.unwrap_or(f64::NAN));
        let oracle = brute_force_f1(&g, &p);
        for k in 0..4 {
            ensure((ours[k] - oracle[k]).abs() < 1e-9, format!("{metric} level {k}: {} vs {}", ours[k], oracle[k]))?;
        }
    }
    let l = |r: &str| Label::new(Nuclearity::NS, r);
    let gold = RstTree::internal(
        RstTree::internal(RstTree::Leaf(1), RstTree::Leaf(2), l("a")).unwrap(),
        RstTree::internal(RstTree::Leaf(3), RstTree::Leaf(4), l("b")).unwrap(),
        l("c"),
    )
    .unwrap();
    let pred = RstTree::internal(
        RstTree::Leaf(1),
        RstTree::internal(RstTree::Leaf(2), RstTree::internal(RstTree::Leaf(3), RstTree::Leaf(4), l("b")).unwrap(), l("a")).unwrap(),
        l("c"),
    )
    .unwrap();
    let r = MetricReport::from_trees(&[&gold], &[&pred], Metric::Original, false).map_err(|e| e.to_string())?;
    ensure(eval::format_score(r.s()) == "50.0", format!("hand example S = {}", eval::format_score(r.s())))?;
    Ok("200 random pairs agree with brute force (both variants); hand example S = 50.0".into())
}

fn learn(oracle_start: usize, label: &str) -> Result<String, String> {
    let start = Instant::now();
    let docs = generate_synthetic(7, 20, 5, 12).map_err(|e| e.to_string())?;
    let model = Model64::for_corpus(desk_config(), &docs, 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 0.01,
        max_epochs: 200,
        oracle_start_epoch: oracle_start,
        ..TrainConfig::default()
    };
    let out = train(model, &docs, None, None, &cfg, &mut |_| true).map_err(|e| e.to_string())?;
    let report = evaluate_model(&out.last, &docs, None, Metric::Original, false).map_err(|e| e.to_string())?;
    let full = report.f().unwrap_or(0.0);
    let dynamic = out.log.iter().filter(|l| l.oracle == toprst::training::OracleMode::Dynamic).count();
    let t = start.elapsed();
    ensure(full >= 95.0, format!("{label}: training-set {report} after {} epochs", out.log.len()))?;
    ensure(t < Duration::from_secs(600), format!("{label}: took {t:.1?}"))?;
    Ok(format!("{label}: {report} ({} dynamic epochs, {t:.1?})", dynamic))
}

fn criterion_8() -> Check {
    let a = learn(usize::MAX, "static")?;
    let b = learn(50, "dynamic from epoch 50, alpha 0.65")?;
    Ok(format!("{a}; {b}"))
}

fn criterion_9() -> Check {
    let t = TrainConfig::default();
    let m = ModelConfig::default();
    let e = &m.encoder;
    let bold = [
        ("rnn_hidden", e.rnn_hidden as f64, 256.0),
        ("segmenter_hidden", m.segmenter_hidden as f64, 128.0),
        ("word_dim", e.word_dim as f64, 200.0),
        ("pos_dim", e.pos_dim as f64, 200.0),
        ("edu_type_dim", e.edu_type_dim as f64, 100.0),
        ("syntax_dim", e.syntax_dim as f64, 1200.0),
        ("lambda1", t.lambda1, 1.0),
        ("lambda2", t.lambda2, 1.0),
        ("beta", t.beta, 0.35),
        ("alpha", t.alpha, 0.65),
        ("batch_size", t.batch_size as f64, 4.0),
        ("grad_accum", t.grad_accum as f64, 2.0),
        ("lr", t.lr, 0.001),
        ("dropout", t.dropout, 0.5),
        ("adam_eps", t.adam_eps, 1e-6),
        ("oracle_start_epoch", t.oracle_start_epoch as f64, 50.0),
    ];
    for (name, got, want) in bold {
        ensure(got == want, format!("default {name} = {got}, expected {want}"))?;
    }
    ensure(t.penalty_enabled, "penalty disabled by default")?;

    // end to end through the documented file format
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("corpus.jsonl");
    let docs = generate_synthetic(9, 6, 2, 8).map_err(|e| e.to_string())?;
    write_corpus(&path, &docs).map_err(|e| e.to_string())?;
    let docs = read_corpus(&path).map_err(|e| e.to_string())?;
    let model = Model64::for_corpus(tiny_config(false), &docs, 2).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        max_epochs: 3,
        oracle_start_epoch: 1,
        ..TrainConfig::default()
    };
    let out = train(model, &docs, Some(&docs), None, &cfg, &mut |_| true).map_err(|e| e.to_string())?;
    let ck = dir.path().join("model.bin");
    out.best.save(&ck).map_err(|e| e.to_string())?;
    let model = Model64::load(&ck).map_err(|e| e.to_string())?;
    for d in &docs {
        let p = parse_document(&model, d, None).map_err(|e| e.to_string())?;
        p.tree.validate(d.len()).map_err(|e| e.to_string())?;
    }
    ensure(out.log.len() == 3 && out.log.iter().all(|l| l.dev.is_some()), "missing epoch logs")?;
    Ok(format!("{} defaults match; write/read/train/save/load/parse pipeline ran", bold.len() + 1))
}

fn criterion_10() -> Check {
    let want = [(0, Some(50)), (50, Some(100)), (100, Some(150)), (150, None)];
    ensure(BUCKETS == want, format!("buckets {BUCKETS:?}"))?;
    let docs = generate_synthetic(10, 60, 3, 15).map_err(|e| e.to_string())?;
    let top = eval::top_relations(&docs, 7);
    let pairs: Vec<_> = docs.iter().map(|d| (d.gold.as_ref().unwrap(), d.gold.as_ref().unwrap())).collect();
    let c = confusion_matrices(&pairs, &top).map_err(|e| e.to_string())?;
    ensure(c.relation.labels.len() == 8, format!("{} relation rows", c.relation.labels.len()))?;
    ensure(c.relation.labels[7] == OTHER, "last row is not `other`")?;
    ensure(c.relation.labels[..7].iter().all(|l| RST_DT_RELATIONS.contains(&l.as_str())), "named rows are not relations")?;
    let grouped = RST_DT_RELATIONS.len() - 7;
    ensure(grouped == 11, format!("{grouped} relations grouped"))?;
    ensure(c.nuclearity.labels.len() == 3, "nuclearity matrix is not 3x3")?;
    Ok("buckets (0,50] (50,100] (100,150] (150,inf); 7 named relations + other (11 grouped)".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("1 round-trip bijection", criterion_1),
        ("2 gold-oracle decode", criterion_2),
        ("3 dynamic oracle at alpha=0", criterion_3),
        ("4 predicted-split scenario", criterion_4),
        ("5 gradient correctness", criterion_5),
        ("6 penalty formula", criterion_6),
        ("7 metric oracle equivalence", criterion_7),
        ("8 desk-scale learnability", criterion_8),
        ("9 defaults and end-to-end pipeline", criterion_9),
        ("10 report structure", criterion_10),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
