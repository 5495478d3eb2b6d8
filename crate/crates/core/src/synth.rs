//! Seeded generator for synthetic corpora with a planted labeling rule.
//!
//! Each sentence is a chain of clauses `the <noun> <verb> <link> the <noun>
//! <verb> ...`. Every candidate pair gets a gold label from the connectives
//! strictly between its two verbs: only `before` gives before, only `after`
//! gives after, anything else gives vague.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::document::{Document, Event, GoldRelation, Token};
use crate::relation::Relation;

pub const DEFAULT_VERBS: [&str; 12] = [
    "attack", "chop", "taste", "elect", "vote", "arrive", "leave", "buy", "sell", "cook", "win", "lose",
];
const NOUNS: [&str; 8] = ["army", "chef", "voter", "guest", "trader", "team", "crowd", "city"];
/// Clause links; the first three are connectives the rule looks at.
const LINKS: [(&str, &str); 5] = [
    ("before", "IN"),
    ("after", "IN"),
    ("since", "IN"),
    ("and", "CC"),
    ("while", "IN"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub documents: usize,
    pub seed: u64,
    /// Inclusive range of sentences per document.
    pub sentences: (usize, usize),
    /// Inclusive range of verbs per sentence.
    pub clauses: (usize, usize),
    pub verbs: Vec<String>,
    /// Whether to attach gold relations.
    pub gold: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            documents: 100,
            seed: 42,
            sentences: (2, 3),
            clauses: (2, 3),
            verbs: DEFAULT_VERBS.iter().map(|v| v.to_string()).collect(),
            gold: true,
        }
    }
}

/// The planted rule applied to the words between two verbs.
pub fn planted_label<'a>(between: impl IntoIterator<Item = &'a str>) -> Relation {
    let (mut before, mut after, mut other) = (false, false, false);
    for w in between {
        match w {
            "before" => before = true,
            "after" => after = true,
            "since" => other = true,
            _ => {}
        }
    }
    match (before, after, other) {
        (true, false, false) => Relation::Before,
        (false, true, false) => Relation::After,
        _ => Relation::Vague,
    }
}

pub fn generate(config: &SynthConfig) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.documents)
        .map(|i| generate_one(&mut rng, config, format!("synth-{i:05}")))
        .collect()
}

fn generate_one(rng: &mut ChaCha8Rng, config: &SynthConfig, doc_id: String) -> Document {
    let mut sentences = Vec::new();
    let mut events = Vec::new();
    let n_sentences = rng.gen_range(config.sentences.0..=config.sentences.1);
    for s in 0..n_sentences {
        let mut tokens = Vec::new();
        let n_clauses = rng.gen_range(config.clauses.0..=config.clauses.1);
        for c in 0..n_clauses {
            if c > 0 {
                let (link, pos) = LINKS.choose(rng).expect("links");
                tokens.push(Token::new(link, pos, link));
            }
            let noun = NOUNS.choose(rng).expect("nouns");
            tokens.push(Token::new("the", "DT", "the"));
            tokens.push(Token::new(noun, "NN", noun));
            let verb = config.verbs.choose(rng).expect("at least one verb");
            events.push(Event {
                id: events.len(),
                sentence: s,
                token: tokens.len(),
                frame: format!("{verb}.01"),
                properties: None,
            });
            tokens.push(Token::new(&format!("{verb}ed"), "VBD", verb));
        }
        tokens.push(Token::new(".", "PUNCT", "."));
        sentences.push(tokens);
    }
    let mut doc = Document {
        doc_id,
        sentences,
        events,
        relations: None,
    };
    if config.gold {
        let flat: Vec<&str> = doc.sentences.iter().flatten().map(|t| t.text.as_str()).collect();
        let offsets = doc.sentence_offsets();
        let position = |e: &Event| offsets[e.sentence] + e.token;
        let relations = doc
            .candidate_pairs()
            .into_iter()
            .map(|p| {
                let (a, b) = (&doc.events[p.source], &doc.events[p.target]);
                GoldRelation {
                    source: a.id,
                    target: b.id,
                    label: planted_label(flat[position(a) + 1..position(b)].iter().copied()),
                }
            })
            .collect();
        doc.relations = Some(relations);
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{check_consistent, CompositionTable};

    #[test]
    fn rule() {
        assert_eq!(planted_label(["the", "before", "the"]), Relation::Before);
        assert_eq!(planted_label(["after"]), Relation::After);
        assert_eq!(planted_label(["before", "after"]), Relation::Vague);
        assert_eq!(planted_label(["before", "since"]), Relation::Vague);
        assert_eq!(planted_label(["and"]), Relation::Vague);
    }

    #[test]
    fn seeded_and_valid() {
        let config = SynthConfig {
            documents: 20,
            ..SynthConfig::default()
        };
        let docs = generate(&config);
        assert_eq!(docs, generate(&config));
        let table = CompositionTable::shared();
        for mut d in docs {
            assert_eq!(d.validate(), Ok(0));
            let gold = d.gold_graph();
            assert_eq!(gold.edge_count(), d.candidate_pairs().len());
            assert!(check_consistent(&gold, table).is_empty());
        }
    }

    #[test]
    fn without_gold() {
        let docs = generate(&SynthConfig {
            documents: 3,
            gold: false,
            ..SynthConfig::default()
        });
        assert!(docs.iter().all(|d| d.relations.is_none()));
    }
}
