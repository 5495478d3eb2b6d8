//! Documents with pre-extracted verb events, and the line-delimited corpus format.
//!
//! One JSON document per line:
//!
//! ```text
//! {"doc_id":"d1","sentences":[[{"text":"He","pos":"PRP","lemma":"he"},...]],
//!  "events":[{"id":0,"sentence":0,"token":1,"frame":"leave.01"}],
//!  "relations":[{"source":0,"target":1,"label":"before"}]}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TemporalGraph;
use crate::relation::Relation;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error at `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: document `{doc_id}`: {message}")]
    Validation {
        line: usize,
        doc_id: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub pos: String,
    pub lemma: String,
}

impl Token {
    pub fn new(text: &str, pos: &str, lemma: &str) -> Self {
        Self {
            text: text.to_string(),
            pos: pos.to_string(),
            lemma: lemma.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: usize,
    pub sentence: usize,
    pub token: usize,
    pub frame: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub properties: Option<BTreeMap<String, String>>,
}

impl Event {
    /// The lemma part of the frame (`explode` for `explode.01`).
    pub fn frame_lemma(&self) -> &str {
        self.frame.rsplit_once('.').map_or(self.frame.as_str(), |(l, _)| l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub source: usize,
    pub target: usize,
    pub label: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<Token>>,
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<GoldRelation>>,
}

/// Sentence-distance bucket of an event pair; each has its own classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    Same,
    Neighbor,
}

impl Bucket {
    pub fn from_distance(d: usize) -> Option<Bucket> {
        match d {
            0 => Some(Bucket::Same),
            1 => Some(Bucket::Neighbor),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Bucket::Same => "Same",
            Bucket::Neighbor => "Neighbor",
        }
    }
}

impl std::str::FromStr for Bucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Same" => Ok(Bucket::Same),
            "Neighbor" => Ok(Bucket::Neighbor),
            other => Err(format!("unknown bucket `{other}`")),
        }
    }
}

/// An event pair `(source, target)` by event index, `source < target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CandidatePair {
    pub source: usize,
    pub target: usize,
    pub bucket: Bucket,
}

/// `lemma.DD`: non-empty lemma, a dot, two digits. No whitespace anywhere.
pub fn is_valid_frame(frame: &str) -> bool {
    if frame.chars().any(char::is_whitespace) {
        return false;
    }
    match frame.rsplit_once('.') {
        Some((lemma, sense)) => !lemma.is_empty() && sense.len() == 2 && sense.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

impl Document {
    pub fn sentence_distance(&self, a: usize, b: usize) -> usize {
        self.events[a].sentence.abs_diff(self.events[b].sentence)
    }

    /// Index of an event by id.
    pub fn event_index(&self, id: usize) -> Option<usize> {
        self.events.binary_search_by_key(&id, |e| e.id).ok()
    }

    /// Position of each sentence's first token in the flattened token sequence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sentences.len());
        let mut acc = 0;
        for s in &self.sentences {
            offsets.push(acc);
            acc += s.len();
        }
        offsets
    }

    pub fn token(&self, event: &Event) -> &Token {
        &self.sentences[event.sentence][event.token]
    }

    pub fn frames(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.frame.as_str()).collect()
    }

    /// Pairs at sentence distance 0 or 1, sorted by `(source, target)`.
    pub fn candidate_pairs(&self) -> Vec<CandidatePair> {
        let mut out = Vec::new();
        for m in 0..self.events.len() {
            for n in m + 1..self.events.len() {
                if let Some(bucket) = Bucket::from_distance(self.sentence_distance(m, n)) {
                    out.push(CandidatePair {
                        source: m,
                        target: n,
                        bucket,
                    });
                }
            }
        }
        out
    }

    /// Gold relations as a graph over event indices.
    pub fn gold_graph(&self) -> TemporalGraph {
        let mut g = TemporalGraph::new(self.events.len());
        for rel in self.relations.iter().flatten() {
            if let (Some(a), Some(b)) = (self.event_index(rel.source), self.event_index(rel.target)) {
                // validated documents carry no duplicates; keep the first otherwise
                let _ = g.insert(a, b, rel.label);
            }
        }
        g
    }

    /// Checks the document invariants and drops gold pairs more than one
    /// sentence apart. Returns the number of dropped pairs.
    pub fn validate(&mut self) -> Result<usize, String> {
        for (si, sentence) in self.sentences.iter().enumerate() {
            for (ti, tok) in sentence.iter().enumerate() {
                if tok.pos.is_empty() || tok.pos.chars().any(char::is_lowercase) {
                    return Err(format!(
                        "sentence {si} token {ti}: pos `{}` is not an uppercase tag",
                        tok.pos
                    ));
                }
                if tok.lemma.is_empty() {
                    return Err(format!("sentence {si} token {ti}: empty lemma"));
                }
            }
        }
        let mut prev: Option<&Event> = None;
        for e in &self.events {
            if !is_valid_frame(&e.frame) {
                return Err(format!("event {}: frame `{}` does not match lemma.DD", e.id, e.frame));
            }
            let in_range = self.sentences.get(e.sentence).is_some_and(|s| e.token < s.len());
            if !in_range {
                return Err(format!(
                    "event {}: position ({}, {}) lies outside the document",
                    e.id, e.sentence, e.token
                ));
            }
            if let Some(p) = prev {
                if e.id <= p.id {
                    return Err(format!(
                        "event ids must be unique and increasing, {} follows {}",
                        e.id, p.id
                    ));
                }
                if (e.sentence, e.token) <= (p.sentence, p.token) {
                    return Err(format!("event {} does not follow event {} in text order", e.id, p.id));
                }
            }
            prev = Some(e);
        }

        let mut dropped = 0;
        if let Some(relations) = self.relations.take() {
            let mut kept = Vec::with_capacity(relations.len());
            let mut seen = HashMap::new();
            for rel in relations {
                if rel.source >= rel.target {
                    return Err(format!(
                        "relation ({}, {}): source id must be smaller than target id",
                        rel.source, rel.target
                    ));
                }
                let (Some(a), Some(b)) = (self.event_index(rel.source), self.event_index(rel.target)) else {
                    return Err(format!(
                        "relation ({}, {}) names an unknown event",
                        rel.source, rel.target
                    ));
                };
                if seen.insert((a, b), rel.label).is_some() {
                    return Err(format!("relation ({}, {}) is labeled twice", rel.source, rel.target));
                }
                if self.sentence_distance(a, b) > 1 {
                    dropped += 1;
                    continue;
                }
                kept.push(rel);
            }
            self.relations = Some(kept);
        }
        Ok(dropped)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("documents always serialize")
    }
}

/// Something ingestion tolerated but reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub line: usize,
    pub doc_id: String,
    pub dropped_pairs: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub warnings: Vec<IngestWarning>,
}

impl Corpus {
    pub fn dropped_pairs(&self) -> usize {
        self.warnings.iter().map(|w| w.dropped_pairs).sum()
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<Document, DocumentError> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| DocumentError::Parse {
        line: lineno,
        field: "$".into(),
        message: e.to_string(),
    })?;
    // Decode field by field so errors can name the offending path.
    let obj = value.as_object().ok_or_else(|| DocumentError::Parse {
        line: lineno,
        field: "$".into(),
        message: "expected an object".into(),
    })?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "doc_id" | "sentences" | "events" | "relations") {
            return Err(DocumentError::Parse {
                line: lineno,
                field: key.clone(),
                message: "unknown field".into(),
            });
        }
    }
    fn field<T: serde::de::DeserializeOwned>(
        obj: &serde_json::Map<String, serde_json::Value>,
        name: &str,
        lineno: usize,
        required: bool,
    ) -> Result<Option<T>, DocumentError> {
        match obj.get(name) {
            None if required => Err(DocumentError::Parse {
                line: lineno,
                field: name.into(),
                message: "missing field".into(),
            }),
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| DocumentError::Parse {
                    line: lineno,
                    field: name.into(),
                    message: e.to_string(),
                }),
        }
    }
    Ok(Document {
        doc_id: field(obj, "doc_id", lineno, true)?.unwrap(),
        sentences: field(obj, "sentences", lineno, true)?.unwrap(),
        events: field(obj, "events", lineno, true)?.unwrap(),
        relations: field(obj, "relations", lineno, false)?,
    })
}

/// Reads and validates a corpus from any line source.
pub fn read_corpus<R: BufRead>(reader: R, source: &str) -> Result<Corpus, DocumentError> {
    let mut corpus = Corpus::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DocumentError::Io {
            path: source.to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc = parse_line(&line, lineno)?;
        let dropped = doc.validate().map_err(|message| DocumentError::Validation {
            line: lineno,
            doc_id: doc.doc_id.clone(),
            message,
        })?;
        if dropped > 0 {
            log::warn!(
                "line {lineno}: document `{}`: dropped {dropped} gold pair(s) beyond sentence distance 1",
                doc.doc_id
            );
            corpus.warnings.push(IngestWarning {
                line: lineno,
                doc_id: doc.doc_id.clone(),
                dropped_pairs: dropped,
            });
        }
        corpus.documents.push(doc);
    }
    Ok(corpus)
}

pub fn ingest_corpus(path: impl AsRef<Path>) -> Result<Corpus, DocumentError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DocumentError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_corpus(BufReader::new(file), &path.display().to_string())
}

pub fn write_corpus<W: Write>(mut out: W, documents: &[Document]) -> std::io::Result<()> {
    for doc in documents {
        writeln!(out, "{}", doc.to_line())?;
    }
    Ok(())
}
