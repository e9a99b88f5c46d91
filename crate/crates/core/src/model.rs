//! The complete parser model: encoder, segmenter and label head.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::Document;
use crate::encoder::{EncoderConfig, LstmEncoder};
use crate::error::{Error, Result};
use crate::nn::{BiLstm, Checkpoint, Graph, Linear, NodeId, ParamStore};
use crate::scalar::Scalar;
use crate::tree::Segment;
use crate::vocab::{LabelSet, Vocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub encoder: EncoderConfig,
    /// Hidden size of each direction of the segmenter Bi-LSTM.
    pub segmenter_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            segmenter_hidden: 128,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.segmenter_hidden == 0 {
            return Err(Error::Config("segmenter_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// Bi-LSTM over a segment's encodings with a per-EDU split head and a
/// joint nuclearity-relation head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segmenter {
    pub lstm: BiLstm,
    pub split_head: Linear,
    pub label_head: Linear,
}

impl Segmenter {
    pub fn new<T: Scalar, R: rand::Rng>(store: &mut ParamStore<T>, input: usize, hidden: usize, classes: usize, rng: &mut R) -> Result<Self> {
        Ok(Segmenter {
            lstm: BiLstm::new(store, "seg.lstm4", input, hidden, rng)?,
            split_head: Linear::new(store, "seg.split", 2 * hidden, 1, rng)?,
            label_head: Linear::new(store, "seg.label", 4 * hidden, classes, rng)?,
        })
    }

    /// h' for EDUs `seg.start..=seg.end`, given document encodings `h`
    /// (indexed from EDU 1).
    pub fn encode_segment<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, h: &[NodeId], seg: Segment) -> Result<Vec<NodeId>> {
        if seg.end > h.len() {
            return Err(Error::Argument(format!("segment {seg} exceeds document of {} EDUs", h.len())));
        }
        let inputs = h[seg.start - 1..seg.end]
            .iter()
            .map(|&x| g.dropout(x))
            .collect::<Result<Vec<_>>>()?;
        self.lstm.forward(g, store, &inputs)
    }

    /// Split probabilities for every position of the segment.
    pub fn split_probs<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, hp: &[NodeId]) -> Result<NodeId> {
        let logits = hp
            .iter()
            .map(|&x| {
                let x = g.dropout(x)?;
                self.split_head.forward(g, store, x)
            })
            .collect::<Result<Vec<_>>>()?;
        let z = g.concat(&logits)?;
        g.sigmoid(z)
    }

    /// Joint label distribution for splitting the segment after the EDU at
    /// offset `ind` (so the left part is `hp[..=ind]`).
    pub fn label_probs<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, hp: &[NodeId], ind: usize) -> Result<NodeId> {
        if ind + 1 >= hp.len() {
            return Err(Error::Argument(format!("split offset {ind} leaves an empty right part of {}", hp.len())));
        }
        let u_l = g.mean(&hp[..=ind])?;
        let u_r = g.mean(&hp[ind + 1..])?;
        let u = g.concat(&[u_l, u_r])?;
        let u = g.dropout(u)?;
        let z = self.label_head.forward(g, store, u)?;
        g.softmax(z)
    }
}

pub struct Model<T> {
    pub config: ModelConfig,
    pub labels: LabelSet,
    pub store: ParamStore<T>,
    pub encoder: LstmEncoder,
    pub segmenter: Segmenter,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, words: Vocab, pos: Vocab, labels: LabelSet, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = LstmEncoder::new(&mut store, config.encoder.clone(), words, pos, &mut rng)?;
        let segmenter = Segmenter::new(
            &mut store,
            config.encoder.output_dim(),
            config.segmenter_hidden,
            labels.num_classes(),
            &mut rng,
        )?;
        Ok(Model {
            config,
            labels,
            store,
            encoder,
            segmenter,
        })
    }

    /// Builds vocabularies and the relation inventory from a training corpus.
    pub fn for_corpus(config: ModelConfig, docs: &[Document], seed: u64) -> Result<Self> {
        let labels = LabelSet::from_documents(docs)?;
        Model::new(config, Vocab::words(docs), Vocab::pos_tags(docs), labels, seed)
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_values()
    }

    fn header(&self) -> serde_json::Value {
        json!({
            "scalar": T::NAME,
            "config": self.config,
            "words": self.encoder.words,
            "pos": self.encoder.pos,
            "relations": self.labels,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        Checkpoint::from_store(self.header(), &self.store)
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let field = |name: &str| {
            ck.header
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint header lacks `{name}`")))
        };
        let parse = |e: serde_json::Error| Error::Format(format!("checkpoint header: {e}"));
        let config: ModelConfig = serde_json::from_value(field("config")?).map_err(parse)?;
        let words: Vocab = serde_json::from_value(field("words")?).map_err(parse)?;
        let pos: Vocab = serde_json::from_value(field("pos")?).map_err(parse)?;
        let labels: LabelSet = serde_json::from_value(field("relations")?).map_err(parse)?;
        let mut model = Model::new(config, words, pos, labels, 0)?;
        ck.load_into(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Model::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl<T: Scalar> Clone for Model<T> {
    fn clone(&self) -> Self {
        Model {
            config: self.config.clone(),
            labels: self.labels.clone(),
            store: self.store.clone(),
            encoder: self.encoder.clone(),
            segmenter: self.segmenter,
        }
    }
}
