//! Corpus files: one JSON document per line.
//!
//! ```text
//! {"doc_id": "d1",
//!  "edus": [{"tokens": [...], "pos": [...], "para_final": false, "sent_final": true}, ...],
//!  "gold": ["NS", "elaboration", ["leaf", 1], ["leaf", 2]]}
//! ```
//!
//! A tree is either `["leaf", i]` or `[pattern, relation, child, ...]`.
//! For binary nodes `pattern` is `NS`, `SN` or `NN`; for n-ary nodes it is
//! one `N`/`S` letter per child (e.g. `"NNN"`, `"SNS"`), and such nodes are
//! binarized right-heavy on load. The `gold` field may be omitted.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tree::{binarize_right_heavy, NaryTree, Relation, RstTree, Status};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edu {
    /// 1-based position in the document.
    pub index: usize,
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub paragraph_final: bool,
    pub sentence_final: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub edus: Vec<Edu>,
    pub gold: Option<RstTree>,
}

impl Document {
    /// Validates EDU numbering, token/tag alignment and the gold span.
    pub fn new(doc_id: impl Into<String>, edus: Vec<Edu>, gold: Option<RstTree>) -> Result<Self> {
        let doc = Document {
            doc_id: doc_id.into(),
            edus,
            gold,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn len(&self) -> usize {
        self.edus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edus.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.doc_id;
        if self.edus.is_empty() {
            return Err(Error::Validation(format!("{id}: document has no EDUs")));
        }
        for (k, edu) in self.edus.iter().enumerate() {
            if edu.index != k + 1 {
                return Err(Error::Validation(format!(
                    "{id}: EDU at position {} has index {}",
                    k + 1,
                    edu.index
                )));
            }
            if edu.tokens.is_empty() {
                return Err(Error::Validation(format!("{id}: EDU {} has no tokens", edu.index)));
            }
            if edu.pos_tags.len() != edu.tokens.len() {
                return Err(Error::Validation(format!(
                    "{id}: EDU {} has {} tokens but {} POS tags",
                    edu.index,
                    edu.tokens.len(),
                    edu.pos_tags.len()
                )));
            }
        }
        if let Some(gold) = &self.gold {
            gold.validate(self.edus.len())
                .map_err(|e| Error::Validation(format!("{id}: {e}")))?;
            for node in gold.internal_nodes() {
                let rel = &node.label().expect("internal").relation;
                if rel.is_reserved() {
                    return Err(Error::Validation(format!(
                        "{id}: relation name `{rel}` is reserved"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EduRecord {
    tokens: Vec<String>,
    pos: Vec<String>,
    #[serde(default)]
    para_final: bool,
    #[serde(default)]
    sent_final: bool,
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    doc_id: String,
    edus: Vec<EduRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<Value>,
}

pub fn tree_to_json(tree: &RstTree) -> Value {
    match tree {
        RstTree::Leaf(i) => Value::Array(vec![Value::from("leaf"), Value::from(*i)]),
        RstTree::Internal {
            left, right, label, ..
        } => Value::Array(vec![
            Value::from(label.nuclearity.as_str()),
            Value::from(label.relation.as_str()),
            tree_to_json(left),
            tree_to_json(right),
        ]),
    }
}

/// Parses the bracketed JSON tree syntax, binarizing n-ary nodes.
pub fn tree_from_json(value: &Value) -> Result<RstTree> {
    binarize_right_heavy(&nary_from_json(value)?)
}

fn nary_from_json(value: &Value) -> Result<NaryTree> {
    let bad = |msg: &str| Error::Format(format!("{msg}: {value}"));
    let items = value.as_array().ok_or_else(|| bad("tree must be an array"))?;
    let head = items
        .first()
        .and_then(Value::as_str)
        .ok_or_else(|| bad("tree must start with a string tag"))?;
    if head == "leaf" {
        if items.len() != 2 {
            return Err(bad("leaf must be [\"leaf\", index]"));
        }
        let i = items[1].as_u64().filter(|&i| i >= 1).ok_or_else(|| bad("leaf index must be a positive integer"))?;
        return Ok(NaryTree::Leaf(i as usize));
    }
    let relation = items
        .get(1)
        .and_then(Value::as_str)
        .ok_or_else(|| bad("node must carry a relation name"))?;
    let children = &items[2..];
    let statuses: Vec<Status> = if children.len() == 2 && matches!(head, "NS" | "SN" | "NN") {
        head.chars().map(|c| Status::from_char(c).expect("N or S")).collect()
    } else {
        head.chars()
            .map(Status::from_char)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("nuclearity pattern must consist of N and S"))?
    };
    if statuses.len() != children.len() {
        return Err(bad("nuclearity pattern length differs from child count"));
    }
    let children = statuses
        .into_iter()
        .zip(children)
        .map(|(s, c)| Ok((s, nary_from_json(c)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(NaryTree::Node {
        relation: Relation::new(relation),
        children,
    })
}

fn document_from_record(rec: DocRecord) -> Result<Document> {
    let edus = rec
        .edus
        .into_iter()
        .enumerate()
        .map(|(k, e)| Edu {
            index: k + 1,
            tokens: e.tokens,
            pos_tags: e.pos,
            paragraph_final: e.para_final,
            sentence_final: e.sent_final,
        })
        .collect();
    let gold = rec.gold.as_ref().map(tree_from_json).transpose()?;
    Document::new(rec.doc_id, edus, gold)
}

/// Parses one corpus line.
pub fn parse_document_line(line: &str) -> Result<Document> {
    let rec: DocRecord = serde_json::from_str(line).map_err(|e| Error::Format(e.to_string()))?;
    document_from_record(rec)
}

pub fn document_to_line(doc: &Document) -> String {
    let rec = DocRecord {
        doc_id: doc.doc_id.clone(),
        edus: doc
            .edus
            .iter()
            .map(|e| EduRecord {
                tokens: e.tokens.clone(),
                pos: e.pos_tags.clone(),
                para_final: e.paragraph_final,
                sent_final: e.sentence_final,
            })
            .collect(),
        gold: doc.gold.as_ref().map(tree_to_json),
    };
    serde_json::to_string(&rec).expect("corpus records serialize")
}

pub fn read_corpus_from<R: Read>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document_line(&line).map_err(|e| match e {
            Error::Format(m) | Error::MalformedTree(m) => Error::parse(k + 1, m),
            Error::Validation(m) => Error::Validation(format!("line {}: {m}", k + 1)),
            other => other,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    read_corpus_from(File::open(path)?)
}

pub fn write_corpus_to<W: Write>(writer: W, docs: &[Document]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for doc in docs {
        writeln!(w, "{}", document_to_line(doc))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_corpus_to(File::create(path)?, docs)
}
