//! Sparse pair features and the plain-text lexical resources behind them.
//!
//! Families (name prefixes):
//! `pos1:`/`pos2:` verb POS, `ctx:` POS windows of three tokens on each side
//! of each verb, `dist:` token distance, `modal:` and `conn:` words between the
//! verbs, `syn:`/`deriv:` lexical relatedness of the frame lemmas,
//! `prep1:`/`prep2:` nearest preceding preposition, `prop:` event properties,
//! and `kb:` knowledge-base priors when a knowledge base is supplied.
//!
//! The preposition feature is a shallow stand-in for the head of the
//! prepositional phrase covering the verb: it takes the closest
//! preposition-tagged token to the left of the verb in the same sentence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::document::{Document, Event};
use crate::kb::KnowledgeBase;
use crate::relation::Relation;

pub const BOS: &str = "⟨BOS⟩";
pub const EOS: &str = "⟨EOS⟩";

pub const DEFAULT_MODAL_VERBS: [&str; 6] = ["will", "would", "can", "could", "may", "might"];
pub const DEFAULT_CONNECTIVES: [&str; 3] = ["before", "after", "since"];
pub const DEFAULT_PREPOSITION_TAGS: [&str; 1] = ["IN"];

const WINDOW: usize = 3;

/// Feature name to value; indicators carry 1.0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    features: BTreeMap<String, f64>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.features.insert(name.into(), value);
    }

    pub fn indicator(&mut self, name: impl Into<String>) {
        self.set(name, 1.0);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.features.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.features.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.features.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        Self {
            features: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
}

/// Word lists standing in for a lexical database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexicalResource {
    pub synonym_sets: Vec<BTreeSet<String>>,
    pub derivation_pairs: BTreeSet<(String, String)>,
    pub modal_verbs: BTreeSet<String>,
    pub temporal_connectives: BTreeSet<String>,
    pub preposition_tags: BTreeSet<String>,
    synsets_by_lemma: HashMap<String, Vec<usize>>,
}

impl Default for LexicalResource {
    fn default() -> Self {
        Self::new(
            Vec::new(),
            BTreeSet::new(),
            DEFAULT_MODAL_VERBS.iter().map(|s| s.to_string()).collect(),
            DEFAULT_CONNECTIVES.iter().map(|s| s.to_string()).collect(),
            DEFAULT_PREPOSITION_TAGS.iter().map(|s| s.to_string()).collect(),
        )
    }
}

fn ordered(a: &str, b: &str) -> (String, String) {
    let (a, b) = (a.to_lowercase(), b.to_lowercase());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LexicalResource {
    pub fn new(
        synonym_sets: Vec<BTreeSet<String>>,
        derivation_pairs: BTreeSet<(String, String)>,
        modal_verbs: BTreeSet<String>,
        temporal_connectives: BTreeSet<String>,
        preposition_tags: BTreeSet<String>,
    ) -> Self {
        let synonym_sets: Vec<BTreeSet<String>> = synonym_sets
            .into_iter()
            .map(|s| s.iter().map(|w| w.to_lowercase()).collect())
            .collect();
        let mut synsets_by_lemma: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, set) in synonym_sets.iter().enumerate() {
            for lemma in set {
                synsets_by_lemma.entry(lemma.clone()).or_default().push(i);
            }
        }
        Self {
            synonym_sets,
            derivation_pairs: derivation_pairs.iter().map(|(a, b)| ordered(a, b)).collect(),
            modal_verbs: modal_verbs.iter().map(|w| w.to_lowercase()).collect(),
            temporal_connectives: temporal_connectives.iter().map(|w| w.to_lowercase()).collect(),
            preposition_tags,
            synsets_by_lemma,
        }
    }

    /// Loads `synonyms.txt`, `derivations.txt` and `config.txt` from `dir`.
    /// Missing files count as empty.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<(String, String), LexiconError> {
            let path = dir.join(name);
            match fs::read_to_string(&path) {
                Ok(text) => Ok((path.display().to_string(), text)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok((path.display().to_string(), String::new())),
                Err(e) => Err(LexiconError::Io {
                    path: path.display().to_string(),
                    source: e,
                }),
            }
        };
        let (syn_path, syn) = read("synonyms.txt")?;
        let (der_path, der) = read("derivations.txt")?;
        let (cfg_path, cfg) = read("config.txt")?;
        Self::parse(&syn, &syn_path, &der, &der_path, &cfg, &cfg_path)
    }

    pub fn parse(
        synonyms: &str,
        synonyms_name: &str,
        derivations: &str,
        derivations_name: &str,
        config: &str,
        config_name: &str,
    ) -> Result<Self, LexiconError> {
        let mut synonym_sets = Vec::new();
        for (lineno, line) in content_lines(synonyms) {
            let set: BTreeSet<String> = line.split_whitespace().map(str::to_string).collect();
            if set.len() < 2 {
                return Err(LexiconError::Parse {
                    file: synonyms_name.to_string(),
                    line: lineno,
                    message: "a synonym set needs at least two lemmas".into(),
                });
            }
            synonym_sets.push(set);
        }

        let mut derivation_pairs = BTreeSet::new();
        for (lineno, line) in content_lines(derivations) {
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() != 2 {
                return Err(LexiconError::Parse {
                    file: derivations_name.to_string(),
                    line: lineno,
                    message: format!("expected two lemmas, found {}", words.len()),
                });
            }
            derivation_pairs.insert((words[0].to_string(), words[1].to_string()));
        }

        let defaults = LexicalResource::default();
        let mut modal_verbs = defaults.modal_verbs;
        let mut connectives = defaults.temporal_connectives;
        let mut prep_tags = defaults.preposition_tags;
        for (lineno, line) in content_lines(config) {
            let Some((key, value)) = line.split_once('=') else {
                return Err(LexiconError::Parse {
                    file: config_name.to_string(),
                    line: lineno,
                    message: "expected key=value".into(),
                });
            };
            let values: BTreeSet<String> = value
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(str::to_string)
                .collect();
            if values.is_empty() {
                return Err(LexiconError::Parse {
                    file: config_name.to_string(),
                    line: lineno,
                    message: format!("empty value list for `{}`", key.trim()),
                });
            }
            match key.trim() {
                "modal_verbs" => modal_verbs = values,
                "temporal_connectives" => connectives = values,
                "preposition_tags" => prep_tags = values,
                other => {
                    return Err(LexiconError::Parse {
                        file: config_name.to_string(),
                        line: lineno,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        Ok(Self::new(
            synonym_sets,
            derivation_pairs,
            modal_verbs,
            connectives,
            prep_tags,
        ))
    }

    pub fn share_synset(&self, a: &str, b: &str) -> bool {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        let (Some(sa), Some(sb)) = (self.synsets_by_lemma.get(&a), self.synsets_by_lemma.get(&b)) else {
            return false;
        };
        sa.iter().any(|i| sb.contains(i))
    }

    pub fn derivationally_related(&self, a: &str, b: &str) -> bool {
        self.derivation_pairs.contains(&ordered(a, b))
    }

    pub fn is_modal(&self, word: &str) -> bool {
        self.modal_verbs.contains(&word.to_lowercase())
    }

    pub fn is_connective(&self, word: &str) -> bool {
        self.temporal_connectives.contains(&word.to_lowercase())
    }
}

/// Non-blank, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn distance_bucket(d: usize) -> &'static str {
    match d {
        0 => "0",
        1 => "1",
        2 => "2",
        3..=5 => "3-5",
        6..=10 => "6-10",
        _ => ">10",
    }
}

/// Extracts the pair features for events at indices `first < second`.
///
/// # Panics
/// If `first >= second`; callers must pass pairs in text order.
pub fn extract(doc: &Document, first: usize, second: usize, lex: &LexicalResource) -> FeatureVector {
    assert!(
        first < second,
        "event pair must be in text order, got ({first}, {second})"
    );
    let e1 = &doc.events[first];
    let e2 = &doc.events[second];
    let mut fv = FeatureVector::new();

    // (i) POS of the verbs and of their windows
    fv.indicator(format!("pos1:{}", doc.token(e1).pos));
    fv.indicator(format!("pos2:{}", doc.token(e2).pos));
    window_features(&mut fv, doc, e1, "");
    window_features(&mut fv, doc, e2, "e2.");

    // (ii) token distance over the flattened document
    let offsets = doc.sentence_offsets();
    let flat1 = offsets[e1.sentence] + e1.token;
    let flat2 = offsets[e2.sentence] + e2.token;
    let between = flat2 - flat1 - 1;
    fv.set("dist:tokens", between as f64);
    fv.indicator(format!("dist:bucket:{}", distance_bucket(between)));

    // (iii), (iv) words strictly between the two verbs
    let flat_tokens = doc.sentences.iter().flatten();
    for tok in flat_tokens.skip(flat1 + 1).take(between) {
        if lex.is_modal(&tok.text) || lex.is_modal(&tok.lemma) {
            fv.indicator(format!("modal:{}", tok.lemma.to_lowercase()));
        }
        if lex.is_connective(&tok.text) || lex.is_connective(&tok.lemma) {
            fv.indicator(format!("conn:{}", tok.lemma.to_lowercase()));
        }
    }

    // (v), (vi) lexical relatedness of the frame lemmas
    let (l1, l2) = (e1.frame_lemma(), e2.frame_lemma());
    if lex.share_synset(l1, l2) {
        fv.indicator("syn:common");
    }
    if lex.derivationally_related(l1, l2) {
        fv.indicator("deriv:common");
    }

    // (vii) nearest preceding preposition in the sentence
    for (prefix, e) in [("prep1", e1), ("prep2", e2)] {
        let sentence = &doc.sentences[e.sentence];
        if let Some(tok) = sentence[..e.token]
            .iter()
            .rev()
            .find(|t| lex.preposition_tags.contains(&t.pos))
        {
            fv.indicator(format!("{prefix}:{}", tok.text.to_lowercase()));
        }
    }

    property_features(&mut fv, e1, e2);
    fv
}

fn window_features(fv: &mut FeatureVector, doc: &Document, e: &Event, tag: &str) {
    let sentence = &doc.sentences[e.sentence];
    for k in 1..=WINDOW {
        let left = e.token.checked_sub(k).map_or(BOS, |i| sentence[i].pos.as_str());
        fv.indicator(format!("ctx:{tag}l{k}:{left}"));
        let right = sentence.get(e.token + k).map_or(EOS, |t| t.pos.as_str());
        fv.indicator(format!("ctx:{tag}r{k}:{right}"));
    }
}

fn property_features(fv: &mut FeatureVector, e1: &Event, e2: &Event) {
    let empty = BTreeMap::new();
    let p1 = e1.properties.as_ref().unwrap_or(&empty);
    let p2 = e2.properties.as_ref().unwrap_or(&empty);
    for (k, v) in p1 {
        fv.indicator(format!("prop:e1:{k}={v}"));
    }
    for (k, v) in p2 {
        fv.indicator(format!("prop:e2:{k}={v}"));
    }
    for (k, v1) in p1 {
        if let Some(v2) = p2.get(k) {
            let rel = if v1 == v2 { "same" } else { "diff" };
            fv.indicator(format!("prop:{k}:{rel}"));
        }
    }
}

/// Appends knowledge-base features for the frame pair: the smoothed
/// before-ratio and the six-label prior distribution.
pub fn add_prior_features(fv: &mut FeatureVector, kb: &KnowledgeBase, frame1: &str, frame2: &str) {
    let eta = kb.eta::<f64>(frame1, frame2);
    fv.set("kb:eta_b", eta.before);
    let prior = kb.prior_distribution::<f64>(frame1, frame2);
    for r in Relation::ALL {
        fv.set(format!("kb:f:{}", r.name()), prior.prob(r));
    }
}

/// Features for every pair in `pairs`, optionally with knowledge-base priors.
pub fn extract_all(
    doc: &Document,
    pairs: impl IntoIterator<Item = (usize, usize)>,
    lex: &LexicalResource,
    kb: Option<&KnowledgeBase>,
) -> Vec<FeatureVector> {
    pairs
        .into_iter()
        .map(|(a, b)| {
            let mut fv = extract(doc, a, b, lex);
            if let Some(kb) = kb {
                add_prior_features(&mut fv, kb, &doc.events[a].frame, &doc.events[b].frame);
            }
            fv
        })
        .collect()
}
