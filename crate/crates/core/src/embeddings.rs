//! Pre-trained word vectors and per-token external feature vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use log::warn;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Word vectors read from a GloVe-style text file (`token v1 ... vD`).
///
/// Unknown tokens map to an UNK vector, the componentwise mean of all
/// loaded vectors.
#[derive(Clone, Debug)]
pub struct EmbeddingTable<T> {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<T>,
    unk: Vec<T>,
    duplicates: usize,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Number of tokens that appeared more than once in the source file.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn unk(&self) -> &[T] {
        &self.unk
    }

    pub fn lookup(&self, token: &str) -> &[T] {
        match self.index.get(token) {
            Some(&row) => &self.vectors[row * self.dim..(row + 1) * self.dim],
            None => &self.unk,
        }
    }
}

pub fn load_embeddings_from<T: Scalar, R: Read>(reader: R, dim: usize) -> Result<EmbeddingTable<T>> {
    if dim == 0 {
        return Err(Error::Argument("embedding dimension must be positive".into()));
    }
    let mut index = HashMap::new();
    let mut vectors: Vec<T> = Vec::new();
    let mut duplicates = 0;
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::parse(k + 1, format!("invalid number `{f}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        if values.len() != dim {
            return Err(Error::Format(format!(
                "line {}: expected {dim} components for `{token}`, found {}",
                k + 1,
                values.len()
            )));
        }
        match index.get(token) {
            Some(&row) => {
                warn!("duplicate embedding for `{token}` on line {}; keeping the last one", k + 1);
                duplicates += 1;
                vectors[row * dim..(row + 1) * dim].copy_from_slice(&values);
            }
            None => {
                index.insert(token.to_string(), index.len());
                vectors.extend(values);
            }
        }
    }
    let mut unk = vec![T::zero(); dim];
    let rows = index.len();
    if rows > 0 {
        for row in vectors.chunks(dim) {
            for (u, &v) in unk.iter_mut().zip(row) {
                *u += v;
            }
        }
        let n = T::lit(rows as f64);
        unk.iter_mut().for_each(|u| *u = *u / n);
    }
    Ok(EmbeddingTable {
        dim,
        index,
        vectors,
        unk,
        duplicates,
    })
}

pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingTable<T>> {
    load_embeddings_from(File::open(path)?, dim)
}

/// Per-token feature vectors keyed by (document, EDU index, token index),
/// both indices 1-based. Used for the syntax-feature input branch.
#[derive(Clone, Debug)]
pub struct FeatureTable<T> {
    dim: usize,
    vectors: HashMap<(String, usize, usize), Vec<T>>,
}

impl<T: Scalar> FeatureTable<T> {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, doc_id: &str, edu: usize, token: usize, vector: Vec<T>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Format(format!(
                "feature vector has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert((doc_id.to_string(), edu, token), vector);
        Ok(())
    }

    pub fn get(&self, doc_id: &str, edu: usize, token: usize) -> Option<&[T]> {
        self.vectors
            .get(&(doc_id.to_string(), edu, token))
            .map(Vec::as_slice)
    }

    /// Ensures every token of `doc` has a vector.
    pub fn check_document(&self, doc: &Document) -> Result<()> {
        for edu in &doc.edus {
            for t in 1..=edu.tokens.len() {
                if self.get(&doc.doc_id, edu.index, t).is_none() {
                    return Err(Error::Config(format!(
                        "no syntax feature for {} EDU {} token {t}",
                        doc.doc_id, edu.index
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn load_features_from<T: Scalar, R: Read>(reader: R, dim: usize) -> Result<FeatureTable<T>> {
    let mut table = FeatureTable::new(dim);
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != dim + 3 {
            return Err(Error::Format(format!(
                "line {}: expected `doc_id edu token` plus {dim} values, found {} fields",
                k + 1,
                fields.len()
            )));
        }
        let idx = |f: &str| {
            f.parse::<usize>()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| Error::parse(k + 1, format!("invalid index `{f}`")))
        };
        let (edu, tok) = (idx(fields[1])?, idx(fields[2])?);
        let values = fields[3..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::parse(k + 1, format!("invalid number `{f}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        table.insert(fields[0], edu, tok, values)?;
    }
    Ok(table)
}

pub fn load_features<T: Scalar>(path: impl AsRef<Path>, dim: usize) -> Result<FeatureTable<T>> {
    load_features_from(File::open(path)?, dim)
}
