//! EDU and document encoders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Edu};
use crate::embeddings::{EmbeddingTable, FeatureTable};
use crate::error::{Error, Result};
use crate::nn::{BiLstm, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::scalar::Scalar;
use crate::vocab::Vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub edu_type_dim: usize,
    pub syntax_dim: usize,
    /// Hidden size of each direction of Bi-LSTM 1-3.
    pub rnn_hidden: usize,
    pub use_syntax: bool,
    pub use_paragraph_feature: bool,
    /// Keep only the first `n` tokens of every EDU.
    pub max_edu_tokens: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 200,
            pos_dim: 200,
            edu_type_dim: 100,
            syntax_dim: 1200,
            rnn_hidden: 256,
            use_syntax: false,
            use_paragraph_feature: true,
            max_edu_tokens: None,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("edu_type_dim", self.edu_type_dim),
            ("syntax_dim", self.syntax_dim),
            ("rnn_hidden", self.rnn_hidden),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_edu_tokens == Some(0) {
            return Err(Error::Config("max_edu_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Width of the pooled EDU vector g.
    pub fn edu_dim(&self) -> usize {
        let syntax = if self.use_syntax { 2 * self.rnn_hidden } else { 0 };
        2 * self.rnn_hidden + syntax + self.edu_type_dim
    }

    /// Width of the contextualized vector h.
    pub fn output_dim(&self) -> usize {
        2 * self.rnn_hidden
    }
}

/// Anything that maps a document to one vector per EDU.
pub trait DocumentEncoder<T: Scalar> {
    fn output_dim(&self) -> usize;

    fn encode(&self, g: &mut Graph<T>, store: &ParamStore<T>, doc: &Document, features: Option<&FeatureTable<T>>) -> Result<Vec<NodeId>>;
}

/// Word/POS and optional syntax Bi-LSTMs per EDU, average pooling, an
/// EDU-type embedding, then a document-level Bi-LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmEncoder {
    pub config: EncoderConfig,
    pub words: Vocab,
    pub pos: Vocab,
    pub word_emb: ParamId,
    pub pos_emb: ParamId,
    pub type_emb: ParamId,
    pub edu_lstm: BiLstm,
    pub syntax_lstm: Option<BiLstm>,
    pub doc_lstm: BiLstm,
}

impl LstmEncoder {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, config: EncoderConfig, words: Vocab, pos: Vocab, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let word_emb = store.add_glorot("enc.word_emb", words.len(), c.word_dim, rng)?;
        let pos_emb = store.add_glorot("enc.pos_emb", pos.len(), c.pos_dim, rng)?;
        let type_emb = store.add_glorot("enc.type_emb", 2, c.edu_type_dim, rng)?;
        let edu_lstm = BiLstm::new(store, "enc.lstm1", c.word_dim + c.pos_dim, c.rnn_hidden, rng)?;
        let syntax_lstm = if c.use_syntax {
            Some(BiLstm::new(store, "enc.lstm2", c.syntax_dim, c.rnn_hidden, rng)?)
        } else {
            None
        };
        let doc_lstm = BiLstm::new(store, "enc.lstm3", c.edu_dim(), c.rnn_hidden, rng)?;
        Ok(LstmEncoder {
            config,
            words,
            pos,
            word_emb,
            pos_emb,
            type_emb,
            edu_lstm,
            syntax_lstm,
            doc_lstm,
        })
    }

    /// Overwrites the rows of known words with pre-trained vectors; returns
    /// how many rows were set. Row 0 (unknown) receives the table's UNK.
    pub fn load_pretrained<T: Scalar>(&self, store: &mut ParamStore<T>, table: &EmbeddingTable<T>) -> Result<usize> {
        if table.dim() != self.config.word_dim {
            return Err(Error::Config(format!(
                "embedding file has dimension {}, model expects word_dim {}",
                table.dim(),
                self.config.word_dim
            )));
        }
        let dim = self.config.word_dim;
        let emb = &mut store.get_mut(self.word_emb).value;
        let mut set = 0;
        for (row, token) in self.words.tokens().iter().enumerate() {
            let src = if row == 0 {
                table.unk()
            } else if table.contains(token) {
                set += 1;
                table.lookup(token)
            } else {
                continue;
            };
            emb.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(src);
        }
        Ok(set)
    }

    fn edu_tokens(&self, edu: &Edu) -> usize {
        match self.config.max_edu_tokens {
            Some(k) => edu.tokens.len().min(k),
            None => edu.tokens.len(),
        }
    }

    /// The pooled EDU vector g.
    pub fn encode_edu<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, doc_id: &str, edu: &Edu, features: Option<&FeatureTable<T>>) -> Result<NodeId> {
        let n = self.edu_tokens(edu);
        if n == 0 {
            return Err(Error::Argument(format!("EDU {} of {doc_id} has no tokens", edu.index)));
        }
        let mut xs = Vec::with_capacity(n);
        for k in 0..n {
            let w = g.embed(store, self.word_emb, self.words.get(&edu.tokens[k]))?;
            let p = g.embed(store, self.pos_emb, self.pos.get(&edu.pos_tags[k]))?;
            xs.push(g.concat(&[w, p])?);
        }
        let a_w = self.edu_lstm.forward(g, store, &xs)?;
        let mut parts = vec![g.mean(&a_w)?];
        if let Some(lstm) = &self.syntax_lstm {
            let table = features.ok_or_else(|| Error::Config("syntax features are enabled but none were supplied".into()))?;
            if table.dim() != self.config.syntax_dim {
                return Err(Error::Config(format!(
                    "syntax feature dimension {} does not match syntax_dim {}",
                    table.dim(),
                    self.config.syntax_dim
                )));
            }
            let mut ss = Vec::with_capacity(n);
            for k in 1..=n {
                let v = table.get(doc_id, edu.index, k).ok_or_else(|| {
                    Error::Config(format!("no syntax feature for {doc_id} EDU {} token {k}", edu.index))
                })?;
                ss.push(g.input(Tensor::vector(v.to_vec()))?);
            }
            let a_s = lstm.forward(g, store, &ss)?;
            parts.push(g.mean(&a_s)?);
        }
        let edu_type = usize::from(self.config.use_paragraph_feature && edu.paragraph_final);
        parts.push(g.embed(store, self.type_emb, edu_type)?);
        g.concat(&parts)
    }

    /// Contextualizes pooled EDU vectors over the whole document.
    pub fn encode_sequence<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, gs: &[NodeId]) -> Result<Vec<NodeId>> {
        if gs.is_empty() {
            return Err(Error::Argument("cannot encode an empty document".into()));
        }
        let inputs = gs.iter().map(|&x| g.dropout(x)).collect::<Result<Vec<_>>>()?;
        self.doc_lstm.forward(g, store, &inputs)
    }
}

impl<T: Scalar> DocumentEncoder<T> for LstmEncoder {
    fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn encode(&self, g: &mut Graph<T>, store: &ParamStore<T>, doc: &Document, features: Option<&FeatureTable<T>>) -> Result<Vec<NodeId>> {
        let gs = doc
            .edus
            .iter()
            .map(|e| self.encode_edu(g, store, &doc.doc_id, e, features))
            .collect::<Result<Vec<_>>>()?;
        self.encode_sequence(g, store, &gs)
    }
}
