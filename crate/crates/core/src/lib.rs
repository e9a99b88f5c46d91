//! Top-down RST discourse parsing.
//!
//! A document's EDUs are encoded once, then the parser repeatedly splits
//! segments (FIFO order) at the position a sequence-labelling segmenter
//! scores highest, labelling every split with a joint nuclearity and
//! relation class. Training supports teacher forcing and a dynamic oracle
//! that follows the model's own splits.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type for common use.

pub mod corpus;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod order;
pub mod parser;
pub mod scalar;
pub mod synthetic;
pub mod training;
pub mod tree;
pub mod vocab;

pub use corpus::{read_corpus, write_corpus, Document, Edu};
pub use encoder::{DocumentEncoder, EncoderConfig, LstmEncoder};
pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use order::{match_gold, order_to_tree, tree_to_order, CanonicalOrder};
pub use parser::{parse_document, ParseResult};
pub use scalar::Scalar;
pub use training::{train, TrainConfig};
pub use tree::{binarize_right_heavy, Label, Nuclearity, Relation, RstTree, Segment};

pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
