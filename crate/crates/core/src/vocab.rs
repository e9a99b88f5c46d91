//! Token vocabularies and the joint nuclearity-relation label space.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tree::{Label, Nuclearity, Relation};

pub const UNK: &str = "<unk>";

/// String-to-row mapping with row 0 reserved for unknown tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from `tokens`, in first-seen order after UNK.
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab::from(vec![UNK.to_string()]);
        for t in tokens {
            let t = t.as_ref();
            if !v.index.contains_key(t) {
                v.index.insert(t.to_string(), v.tokens.len());
                v.tokens.push(t.to_string());
            }
        }
        v
    }

    pub fn words(docs: &[Document]) -> Self {
        Vocab::build(docs.iter().flat_map(|d| d.edus.iter().flat_map(|e| e.tokens.iter())))
    }

    pub fn pos_tags(docs: &[Document]) -> Self {
        Vocab::build(docs.iter().flat_map(|d| d.edus.iter().flat_map(|e| e.pos_tags.iter())))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row of `token`, or 0 when it is unknown.
    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, row: usize) -> Option<&str> {
        self.tokens.get(row).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// The relation inventory. Joint classes are numbered
/// `nuclearity.index() * R + relation_index`, giving `3 R` classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    relations: Vec<Relation>,
    index: HashMap<Relation, usize>,
}

impl LabelSet {
    pub fn new<I, S>(relations: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<Relation>,
    {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in relations {
            let r = r.into();
            if r.is_reserved() {
                return Err(Error::Data(format!("relation `{r}` is reserved")));
            }
            if seen.insert(r.clone()) {
                out.push(r);
            }
        }
        if out.is_empty() {
            return Err(Error::Data("empty relation inventory".into()));
        }
        Ok(LabelSet::from(out.into_iter().map(|r| r.as_str().to_string()).collect::<Vec<_>>()))
    }

    /// Relations occurring in the gold trees of `docs`, sorted by name.
    pub fn from_documents(docs: &[Document]) -> Result<Self> {
        let mut rels = BTreeSet::new();
        for d in docs {
            if let Some(g) = &d.gold {
                for n in g.internal_nodes() {
                    rels.insert(n.label().expect("internal node").relation.clone());
                }
            }
        }
        LabelSet::new(rels)
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_classes(&self) -> usize {
        3 * self.relations.len()
    }

    pub fn contains(&self, rel: &Relation) -> bool {
        self.index.contains_key(rel)
    }

    pub fn class(&self, label: &Label) -> Result<usize> {
        let r = self
            .index
            .get(&label.relation)
            .ok_or_else(|| Error::Data(format!("relation `{}` is not in the model's label set", label.relation)))?;
        Ok(label.nuclearity.index() * self.relations.len() + r)
    }

    pub fn label(&self, class: usize) -> Result<Label> {
        let r = self.relations.len();
        if class >= 3 * r {
            return Err(Error::Argument(format!("class {class} out of {}", 3 * r)));
        }
        Ok(Label::new(Nuclearity::ALL[class / r], self.relations[class % r].clone()))
    }

    /// Relations used by `docs` that are missing from this set.
    pub fn unknown_relations(&self, docs: &[Document]) -> Vec<Relation> {
        let mut out = BTreeSet::new();
        for d in docs {
            if let Some(g) = &d.gold {
                for n in g.internal_nodes() {
                    let rel = &n.label().expect("internal node").relation;
                    if !self.contains(rel) {
                        out.insert(rel.clone());
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

impl From<Vec<String>> for LabelSet {
    fn from(names: Vec<String>) -> Self {
        let relations: Vec<Relation> = names.into_iter().map(Relation::from).collect();
        let index = relations.iter().enumerate().map(|(i, r)| (r.clone(), i)).collect();
        LabelSet { relations, index }
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.relations.iter().map(|r| r.as_str().to_string()).collect()
    }
}
