//! SQuAD-format datasets: data model, JSON (de)serialization, integrity
//! checks, tokenization and seeded down-sampling.
//!
//! All answer offsets are Unicode code-point offsets into the paragraph
//! context, as in the SQuAD v1.1 files.

mod sample;
mod tokenize;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use sample::downsample;
pub use tokenize::{tokenize, Snap, Token, TokenSpan, TokenizerPolicy};

/// One step in the derivation history of a qa entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformTag {
    pub op: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl TransformTag {
    pub fn new(op: impl Into<String>) -> Self {
        TransformTag {
            op: op.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Code-point offset of `text` inside the paragraph context.
    pub answer_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "QaWire", into = "QaWire")]
pub struct QaEntry {
    pub id: String,
    pub question: String,
    pub answers: Vec<Answer>,
    pub lineage: Vec<TransformTag>,
    /// Set when the answer could not be recovered within threshold and the
    /// example is kept for testing with a best-effort gold.
    pub noise_flag: bool,
}

impl QaEntry {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answers: Vec<Answer>) -> Self {
        QaEntry {
            id: id.into(),
            question: question.into(),
            answers,
            lineage: Vec::new(),
            noise_flag: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<QaEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcDataset {
    pub version: String,
    #[serde(rename = "data")]
    pub articles: Vec<Article>,
}

// Wire shape of a qa: lineage and the noise flag live in an extension
// object that standard SQuAD consumers ignore.
#[derive(Serialize, Deserialize)]
struct QaWire {
    id: String,
    question: String,
    answers: Vec<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xforge: Option<Extension>,
}

#[derive(Default, Serialize, Deserialize)]
struct Extension {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lineage: Vec<TransformTag>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    noise: bool,
}

impl From<QaWire> for QaEntry {
    fn from(w: QaWire) -> Self {
        let ext = w.xforge.unwrap_or_default();
        QaEntry {
            id: w.id,
            question: w.question,
            answers: w.answers,
            lineage: ext.lineage,
            noise_flag: ext.noise,
        }
    }
}

impl From<QaEntry> for QaWire {
    fn from(q: QaEntry) -> Self {
        let xforge = if q.lineage.is_empty() && !q.noise_flag {
            None
        } else {
            Some(Extension {
                lineage: q.lineage,
                noise: q.noise_flag,
            })
        };
        QaWire {
            id: q.id,
            question: q.question,
            answers: q.answers,
            xforge,
        }
    }
}

impl RcDataset {
    pub fn new(version: impl Into<String>) -> Self {
        RcDataset {
            version: version.into(),
            articles: Vec::new(),
        }
    }

    pub fn qa_count(&self) -> usize {
        self.paragraphs().map(|p| p.qas.len()).sum()
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.articles.iter().flat_map(|a| a.paragraphs.iter())
    }

    pub fn qas(&self) -> impl Iterator<Item = &QaEntry> {
        self.paragraphs().flat_map(|p| p.qas.iter())
    }

    /// Appends `tag` to the lineage of every qa.
    pub fn push_lineage(&mut self, tag: &TransformTag) {
        for article in &mut self.articles {
            for paragraph in &mut article.paragraphs {
                for qa in &mut paragraph.qas {
                    qa.lineage.push(tag.clone());
                }
            }
        }
    }

    /// Checks id uniqueness, the substring invariant of every answer and
    /// that only noise-flagged entries lack answers.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for paragraph in self.paragraphs() {
            let index = CharIndex::new(&paragraph.context);
            for qa in &paragraph.qas {
                if !seen.insert(qa.id.as_str()) {
                    return Err(Error::DuplicateId(qa.id.clone()));
                }
                if qa.answers.is_empty() && !qa.noise_flag {
                    return Err(Error::Integrity {
                        id: qa.id.clone(),
                        message: "no answers and not flagged as noise".into(),
                    });
                }
                for answer in &qa.answers {
                    let len = answer.text.chars().count();
                    match index.get(answer.answer_start, answer.answer_start + len) {
                        Some(found) if found == answer.text => {}
                        found => {
                            return Err(Error::Integrity {
                                id: qa.id.clone(),
                                message: format!(
                                    "answer {:?} at {} does not match context ({:?})",
                                    answer.text,
                                    answer.answer_start,
                                    found.unwrap_or("<out of range>")
                                ),
                            })
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses SQuAD v1.1 JSON and re-validates every answer offset.
pub fn parse_dataset(bytes: &[u8]) -> Result<RcDataset> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let dataset: RcDataset =
        serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    de.end().map_err(|e| Error::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;
    dataset.validate()?;
    Ok(dataset)
}

/// Compact UTF-8 JSON with a trailing newline.
pub fn serialize_dataset(d: &RcDataset) -> Vec<u8> {
    let mut out = serde_json::to_vec(d).expect("dataset serialization is infallible");
    out.push(b'\n');
    out
}

/// Code-point indexed view of a string.
#[derive(Debug, Clone)]
pub struct CharIndex<'a> {
    text: &'a str,
    bytes: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bytes.push(text.len());
        CharIndex { text, bytes }
    }

    pub fn len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Substring over code points `[start, end)`, `None` when out of range.
    pub fn get(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.len() {
            return None;
        }
        Some(&self.text[self.bytes[start]..self.bytes[end]])
    }

    pub fn slice(&self, start: usize, end: usize) -> &'a str {
        self.get(start, end).expect("code-point range in bounds")
    }
}
