use std::cell::Cell;

use proptest::prelude::*;

use toprst::corpus::Edu;
use toprst::embeddings::{load_embeddings_from, FeatureTable};
use toprst::nn::{Graph, NodeId, ParamStore};
use toprst::parser::{decode, DocumentForward, SegmentScorer};
use toprst::synthetic::generate_synthetic;
use toprst::training::OracleMode;
use toprst::{Document, DocumentEncoder, EncoderConfig, Error, Model, Model32, Model64, ModelConfig, Segment, TrainConfig};

fn small(syntax: bool) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            word_dim: 5,
            pos_dim: 3,
            edu_type_dim: 2,
            syntax_dim: 4,
            rnn_hidden: 4,
            use_syntax: syntax,
            ..EncoderConfig::default()
        },
        segmenter_hidden: 3,
    }
}

fn corpus(seed: u64, n: usize, q_min: usize, q_max: usize) -> Vec<Document> {
    generate_synthetic(seed, n, q_min, q_max).unwrap()
}

fn values(g: &Graph<f64>, id: NodeId) -> Vec<f64> {
    g.value(id).data().to_vec()
}

fn edu(index: usize, tokens: &[&str], para: bool) -> Edu {
    Edu {
        index,
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
        pos_tags: tokens.iter().map(|_| "NN".to_string()).collect(),
        paragraph_final: para,
        sentence_final: true,
    }
}

#[test]
fn identical_edus_pool_identically() {
    let docs = corpus(3, 4, 3, 6);
    let model = Model64::for_corpus(small(false), &docs, 7).unwrap();
    let word = docs[0].edus[0].tokens[0].as_str();
    let enc = &model.encoder;
    let mut g = Graph::new();
    let a = enc.encode_edu(&mut g, &model.store, "x", &edu(1, &[word, word], false), None).unwrap();
    let b = enc.encode_edu(&mut g, &model.store, "x", &edu(2, &[word, word], false), None).unwrap();
    assert_eq!(values(&g, a), values(&g, b));
    assert_eq!(values(&g, a).len(), small(false).encoder.edu_dim());
}

#[test]
fn paragraph_flag_only_touches_type_embedding() {
    let docs = corpus(4, 3, 3, 5);
    let model = Model64::for_corpus(small(false), &docs, 1).unwrap();
    let mut g = Graph::new();
    let toks = &["a", "b", "c"];
    let off = model.encoder.encode_edu(&mut g, &model.store, "x", &edu(1, toks, false), None).unwrap();
    let on = model.encoder.encode_edu(&mut g, &model.store, "x", &edu(1, toks, true), None).unwrap();
    let (off, on) = (values(&g, off), values(&g, on));
    let t = small(false).encoder.edu_type_dim;
    let split = off.len() - t;
    assert_eq!(off[..split], on[..split]);
    assert_ne!(off[split..], on[split..]);
}

#[test]
fn syntax_branch_widens_g() {
    let with = small(true).encoder;
    let without = small(false).encoder;
    assert_eq!(with.edu_dim() - without.edu_dim(), 2 * with.rnn_hidden);
    let docs = corpus(5, 1, 3, 3);
    let doc = &docs[0];
    let mut table = FeatureTable::<f64>::new(4);
    for e in &doc.edus {
        for k in 1..=e.tokens.len() {
            table.insert(&doc.doc_id, e.index, k, vec![0.1 * k as f64; 4]).unwrap();
        }
    }
    let model = Model64::for_corpus(small(true), &docs, 2).unwrap();
    let mut g = Graph::new();
    let v = model.encoder.encode_edu(&mut g, &model.store, &doc.doc_id, &doc.edus[0], Some(&table)).unwrap();
    assert_eq!(g.value(v).len(), with.edu_dim());
    let parsed = toprst::parse_document(&model, doc, Some(&table)).unwrap();
    assert_eq!(parsed.tree.leaves().len(), doc.len());
}

#[test]
fn missing_syntax_features_are_a_config_error() {
    let docs = corpus(6, 1, 3, 3);
    let model = Model64::for_corpus(small(true), &docs, 2).unwrap();
    let err = toprst::parse_document(&model, &docs[0], None).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn document_vectors_do_not_depend_on_other_documents() {
    let docs = corpus(8, 3, 4, 7);
    let model = Model64::for_corpus(small(false), &docs, 3).unwrap();
    let alone: Vec<Vec<f64>> = {
        let mut g = Graph::new();
        let h = model.encoder.encode(&mut g, &model.store, &docs[1], None).unwrap();
        h.iter().map(|&n| values(&g, n)).collect()
    };
    let mut g = Graph::new();
    model.encoder.encode(&mut g, &model.store, &docs[2], None).unwrap();
    let h = model.encoder.encode(&mut g, &model.store, &docs[1], None).unwrap();
    model.encoder.encode(&mut g, &model.store, &docs[0], None).unwrap();
    let shared: Vec<Vec<f64>> = h.iter().map(|&n| values(&g, n)).collect();
    assert_eq!(alone, shared);
}

struct Counting<'a, E> {
    inner: &'a E,
    calls: Cell<usize>,
}

impl<E: DocumentEncoder<f64>> DocumentEncoder<f64> for Counting<'_, E> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn encode(&self, g: &mut Graph<f64>, store: &ParamStore<f64>, doc: &Document, f: Option<&FeatureTable<f64>>) -> toprst::Result<Vec<NodeId>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.encode(g, store, doc, f)
    }
}

#[test]
fn decoding_encodes_the_document_once() {
    let docs = corpus(9, 1, 12, 12);
    let model = Model64::for_corpus(small(false), &docs, 4).unwrap();
    let counter = Counting {
        inner: &model.encoder,
        calls: Cell::new(0),
    };
    let mut fwd = DocumentForward::with_graph(&model, Graph::new(), &counter, &docs[0], None).unwrap();
    let out = decode(&mut fwd, 12).unwrap();
    assert_eq!(out.decisions.len(), 11);
    assert_eq!(counter.calls.get(), 1);
}

#[test]
fn segment_scores_only_see_their_own_edus() {
    let docs = corpus(10, 1, 9, 9);
    let model = Model64::for_corpus(small(false), &docs, 5).unwrap();
    let seg = Segment::new(3, 6).unwrap();
    let mut fwd = DocumentForward::new(&model, &docs[0], None).unwrap();
    let before = fwd.score_segment(seg).unwrap();
    let label_before = fwd.label_distribution(seg, 4).unwrap();

    let mut other = DocumentForward::new(&model, &docs[0], None).unwrap();
    let junk = other.graph.input(toprst::Tensor64::vector(vec![9.0; DocumentEncoder::<f64>::output_dim(&model.encoder)])).unwrap();
    for (i, h) in other.h.iter_mut().enumerate() {
        if i + 1 < seg.start || i + 1 > seg.end {
            *h = junk;
        }
    }
    assert_eq!(other.score_segment(seg).unwrap(), before);
    assert_eq!(other.label_distribution(seg, 4).unwrap(), label_before);
}

#[test]
fn split_and_label_distributions_are_well_formed() {
    let docs = corpus(11, 2, 6, 6);
    let model = Model64::for_corpus(small(false), &docs, 6).unwrap();
    let mut fwd = DocumentForward::new(&model, &docs[0], None).unwrap();
    let seg = Segment::new(1, 6).unwrap();
    let scores = fwd.score_segment(seg).unwrap();
    assert_eq!(scores.probs.len(), 6);
    assert!(scores.probs.iter().all(|&p| p > 0.0 && p < 1.0));
    for j in 1..6 {
        let d = fwd.label_distribution(seg, j).unwrap();
        assert_eq!(d.probs.len(), model.labels.num_classes());
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn eighteen_relations_give_54_classes() {
    let names: Vec<String> = (0..18).map(|k| format!("rel{k:02}")).collect();
    let labels = toprst::vocab::LabelSet::new(names).unwrap();
    assert_eq!(labels.num_classes(), 54);
    let docs = corpus(12, 1, 4, 4);
    let words = toprst::vocab::Vocab::words(&docs);
    let pos = toprst::vocab::Vocab::pos_tags(&docs);
    let model = Model64::new(small(false), words, pos, labels, 0).unwrap();
    let mut fwd = DocumentForward::new(&model, &docs[0], None).unwrap();
    let d = fwd.label_distribution(Segment::new(1, 4).unwrap(), 2).unwrap();
    assert_eq!(d.probs.len(), 54);
}

#[test]
fn checkpoint_round_trip_parses_identically() {
    let docs = corpus(13, 4, 3, 10);
    let model = Model64::for_corpus(small(false), &docs, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ck");
    model.save(&path).unwrap();
    let back = Model64::load(&path).unwrap();
    for d in &docs {
        let a = toprst::parse_document(&model, d, None).unwrap();
        let b = toprst::parse_document(&back, d, None).unwrap();
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.trace(), b.trace());
    }
    assert!(Model32::load(&path).is_err());
}

#[test]
fn single_precision_model_parses() {
    let docs = corpus(14, 2, 5, 8);
    let model = Model32::for_corpus(small(false), &docs, 9).unwrap();
    for d in &docs {
        let out = toprst::parse_document(&model, d, None).unwrap();
        out.tree.validate(d.len()).unwrap();
    }
}

#[test]
fn training_is_reproducible() {
    let docs = corpus(15, 6, 3, 7);
    let cfg = TrainConfig {
        max_epochs: 3,
        oracle_start_epoch: 1,
        lr: 0.01,
        ..TrainConfig::default()
    };
    let run = || {
        let m = Model64::for_corpus(small(false), &docs, 10).unwrap();
        toprst::train(m, &docs, Some(&docs[..2]), None, &cfg, &mut |_| true).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.len(), 3);
    assert_eq!(a.log[0].oracle, OracleMode::Static);
    assert_eq!(a.log[2].oracle, OracleMode::Dynamic);
    assert_eq!(a.last.to_checkpoint().tensors, b.last.to_checkpoint().tensors);
}

#[test]
fn training_stops_when_the_callback_says_so() {
    let docs = corpus(16, 3, 3, 5);
    let m = Model64::for_corpus(small(false), &docs, 11).unwrap();
    let cfg = TrainConfig {
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let out = toprst::train(m, &docs, None, None, &cfg, &mut |log| log.epoch < 2).unwrap();
    assert_eq!(out.log.len(), 2);
}

#[test]
fn pretrained_vectors_overwrite_known_rows() {
    let docs = corpus(17, 2, 3, 4);
    let mut model = Model64::for_corpus(small(false), &docs, 12).unwrap();
    let word = docs[0].edus[0].tokens[0].clone();
    let file = format!("{word} 1 2 3 4 5\nnot-in-vocab 3 3 3 3 3\n");
    let table = load_embeddings_from::<f64, _>(file.as_bytes(), 5).unwrap();
    let n = model.encoder.clone().load_pretrained(&mut model.store, &table).unwrap();
    assert_eq!(n, 1);
    let row = model.encoder.words.get(&word);
    let emb = model.store.value(model.encoder.word_emb);
    assert_eq!(&emb.data()[row * 5..row * 5 + 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(&emb.data()[..5], &[2.0, 2.5, 3.0, 3.5, 4.0]);
}

fn any_model(seed: u64) -> (Model<f64>, Vec<Document>) {
    let docs = corpus(seed, 2, 2, 14);
    (Model64::for_corpus(small(false), &docs, seed).unwrap(), docs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_model_yields_a_valid_tree(seed in any::<u64>()) {
        let (model, docs) = any_model(seed);
        for d in &docs {
            let out = toprst::parse_document(&model, d, None).unwrap();
            prop_assert_eq!(out.decisions.len(), d.len() - 1);
            out.tree.validate(d.len()).unwrap();
        }
    }
}
