//! Temporal relation inference over event graphs and a probabilistic
//! knowledge base of typical event orderings.
//!
//! The numeric core is generic over a scalar type; the aliases below fix it
//! to `f64` (or exact rationals for knowledge-base statistics).

pub mod algebra;
pub mod document;
pub mod eval;
pub mod features;
pub mod graph;
pub mod inference;
pub mod kb;
pub mod perceptron;
pub mod pipeline;
pub mod relation;
pub mod scalar;
pub mod synth;

pub use algebra::{check_consistent, close, CompositionTable, ConflictError};
pub use document::{ingest_corpus, Bucket, CandidatePair, Corpus, Document, Event, GoldRelation, Token};
pub use graph::TemporalGraph;
pub use kb::{Direction, KnowledgeBase};
pub use relation::{Relation, RelationSet};

/// Exact rational used for closed-form knowledge-base statistics.
pub type Rational = num_rational::Rational64;

pub type Model = perceptron::PerceptronModel<f64>;
pub type Models = inference::LocalModels<f64>;
pub type Prediction = perceptron::ScoredPrediction<f64>;
pub type Problem = inference::IlpProblem<f64>;
pub type Solution = inference::Assignment<f64>;
pub type Prior = kb::PairPrior<f64>;
pub type Distribution = kb::PriorDistribution<f64>;
