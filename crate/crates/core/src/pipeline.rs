//! Corpus-level wiring: training both bucket models, labeling a corpus, and
//! building a knowledge base from inferred graphs.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::algebra::CompositionTable;
use crate::document::{Bucket, Document, GoldRelation};
use crate::features::{extract, LexicalResource};
use crate::graph::TemporalGraph;
use crate::inference::{
    build_problem, infer_greedy, infer_ilp, IlpError, LocalClassifier, LocalModels, SolverOptions, DEFAULT_LAMBDA,
};
use crate::kb::{FramedGraph, KnowledgeBase};
use crate::perceptron::{tune_epochs, LabeledExample, PerceptronError, PerceptronModel, DEFAULT_EPOCH_CANDIDATES};
use crate::relation::Relation;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Perceptron(#[from] PerceptronError),
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error("ILP mode with lambda > 0 requires a knowledge base")]
    MissingKb,
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Greedy,
    Ilp,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Greedy => "greedy",
            Mode::Ilp => "ilp",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Mode::Greedy),
            "ilp" => Ok(Mode::Ilp),
            other => Err(format!("unknown mode `{other}` (expected greedy or ilp)")),
        }
    }
}

/// Gold-labeled candidate pairs of every document, split by bucket.
pub fn training_examples(docs: &[Document], lex: &LexicalResource) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut same = Vec::new();
    let mut neighbor = Vec::new();
    for doc in docs {
        let gold = doc.gold_graph();
        for pair in doc.candidate_pairs() {
            let Some(label) = gold.get(pair.source, pair.target) else {
                continue;
            };
            let ex = LabeledExample {
                doc_id: doc.doc_id.clone(),
                features: extract(doc, pair.source, pair.target, lex),
                label,
            };
            match pair.bucket {
                Bucket::Same => same.push(ex),
                Bucket::Neighbor => neighbor.push(ex),
            }
        }
    }
    (same, neighbor)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainOptions {
    pub folds: usize,
    pub seed: u64,
    pub epoch_candidates: Vec<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            folds: 3,
            seed: crate::perceptron::DEFAULT_SEED,
            epoch_candidates: DEFAULT_EPOCH_CANDIDATES.to_vec(),
        }
    }
}

fn train_bucket(
    bucket: Bucket,
    examples: &[LabeledExample],
    options: &TrainOptions,
) -> Result<PerceptronModel<f64>, PipelineError> {
    if examples.is_empty() {
        warn!(
            "no {} training pairs; the {} model stays uniform",
            bucket.name(),
            bucket.name()
        );
        return Ok(PerceptronModel::empty(bucket));
    }
    let epochs = tune_epochs::<f64>(bucket, examples, options.folds, &options.epoch_candidates, options.seed)?;
    info!("{} bucket: {} pairs, {} epochs", bucket.name(), examples.len(), epochs);
    let data: Vec<_> = examples.iter().map(|ex| (ex.features.clone(), ex.label)).collect();
    Ok(PerceptronModel::train(bucket, &data, epochs, options.seed)?)
}

/// Fits the same-sentence and neighboring-sentence models, choosing each
/// epoch count by cross validation.
pub fn train_models(
    docs: &[Document],
    lex: &LexicalResource,
    options: &TrainOptions,
) -> Result<LocalModels<f64>, PipelineError> {
    let (same, neighbor) = training_examples(docs, lex);
    Ok(LocalModels {
        same: train_bucket(Bucket::Same, &same, options)?,
        neighbor: train_bucket(Bucket::Neighbor, &neighbor, options)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub mode: Mode,
    pub lambda: f64,
    pub solver: SolverOptions,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Greedy,
            lambda: DEFAULT_LAMBDA,
            solver: SolverOptions::default(),
        }
    }
}

/// Where an output edge came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Classifier,
    Closure,
    Ilp,
}

/// One line of the inference report. `source`/`target` are event ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceRecord {
    pub doc_id: String,
    pub pair: (usize, usize),
    pub label: Relation,
    pub origin: Origin,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<[f64; 6]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InferenceStats {
    pub documents: usize,
    pub classifier_edges: usize,
    pub closure_edges: usize,
    pub constrained: usize,
    pub non_optimal: usize,
}

impl InferenceStats {
    fn merge(mut self, other: InferenceStats) -> Self {
        self.documents += other.documents;
        self.classifier_edges += other.classifier_edges;
        self.closure_edges += other.closure_edges;
        self.constrained += other.constrained;
        self.non_optimal += other.non_optimal;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentInference {
    pub graph: TemporalGraph,
    pub records: Vec<InferenceRecord>,
    pub stats: InferenceStats,
}

impl DocumentInference {
    /// `doc` with its relations replaced by the inferred edges at sentence
    /// distance 0 or 1 (closure may add farther ones, which the document
    /// format does not keep).
    pub fn labeled(&self, doc: &Document) -> Document {
        let mut out = doc.clone();
        out.relations = Some(
            self.graph
                .edges()
                .filter(|&(m, n, _)| doc.sentence_distance(m, n) <= 1)
                .map(|(m, n, label)| GoldRelation {
                    source: doc.events[m].id,
                    target: doc.events[n].id,
                    label,
                })
                .collect(),
        );
        out
    }
}

pub fn infer_document(
    doc: &Document,
    models: &LocalModels<f64>,
    lex: &LexicalResource,
    kb: Option<&KnowledgeBase>,
    config: &InferenceConfig,
) -> Result<DocumentInference, PipelineError> {
    let table = CompositionTable::shared();
    let scorer = LocalClassifier {
        models,
        lexicon: lex,
        prior_features: None,
    };
    let id = |i: usize| doc.events[i].id;
    let mut stats = InferenceStats {
        documents: 1,
        ..InferenceStats::default()
    };
    let mut records = Vec::new();
    let graph = match config.mode {
        Mode::Greedy => {
            let out = infer_greedy::<f64>(doc, &scorer, table);
            stats.classifier_edges = out.classifier_edges;
            stats.closure_edges = out.closure_edges;
            stats.constrained = out.constrained;
            for (m, n, label) in out.graph.edges() {
                let pred = out.predictions.get(&(m, n));
                records.push(InferenceRecord {
                    doc_id: doc.doc_id.clone(),
                    pair: (id(m), id(n)),
                    label,
                    origin: if pred.is_some() {
                        Origin::Classifier
                    } else {
                        Origin::Closure
                    },
                    scores: pred.map(|p| p.scores),
                    objective: None,
                    optimal: None,
                });
            }
            out.graph
        }
        Mode::Ilp => {
            if config.lambda > 0.0 && kb.is_none() {
                return Err(PipelineError::MissingKb);
            }
            let problem = build_problem(doc, &scorer, kb, config.lambda)?;
            let assignment = infer_ilp(&problem, table, config.solver);
            stats.classifier_edges = problem.pairs().len();
            if !assignment.optimal {
                stats.non_optimal = 1;
            }
            for (p, (&(m, n), &label)) in problem.pairs().iter().zip(&assignment.labels).enumerate() {
                records.push(InferenceRecord {
                    doc_id: doc.doc_id.clone(),
                    pair: (id(m), id(n)),
                    label,
                    origin: Origin::Ilp,
                    scores: Some(problem.scores()[p]),
                    objective: Some(assignment.objective),
                    optimal: Some(assignment.optimal),
                });
            }
            assignment.to_graph(&problem)
        }
    };
    Ok(DocumentInference { graph, records, stats })
}

/// Runs `f` on a pool of `threads` workers; 0 picks the rayon default.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Labels every document in parallel; output order follows `docs`.
pub fn infer_corpus(
    docs: &[Document],
    models: &LocalModels<f64>,
    lex: &LexicalResource,
    kb: Option<&KnowledgeBase>,
    config: &InferenceConfig,
    threads: usize,
) -> Result<(Vec<DocumentInference>, InferenceStats), PipelineError> {
    if config.mode == Mode::Ilp && config.lambda > 0.0 && kb.is_none() {
        return Err(PipelineError::MissingKb);
    }
    let results = with_threads(threads, || {
        docs.par_iter()
            .map(|d| infer_document(d, models, lex, kb, config))
            .collect::<Result<Vec<_>, _>>()
    })??;
    let stats = results
        .iter()
        .fold(InferenceStats::default(), |acc, r| acc.merge(r.stats));
    log_stats(&stats);
    Ok((results, stats))
}

fn log_stats(stats: &InferenceStats) {
    info!(
        "{} graphs: {} classifier edges, {} closure edges, {} constrained labels, {} non-optimal",
        stats.documents, stats.classifier_edges, stats.closure_edges, stats.constrained, stats.non_optimal
    );
}

/// Infers a graph per document and accumulates them into a knowledge base.
/// `priors` feeds the ILP objective only. Per-document counts are merged by
/// entrywise sums, so the result does not depend on `threads`.
pub fn build_kb(
    docs: &[Document],
    models: &LocalModels<f64>,
    lex: &LexicalResource,
    priors: Option<&KnowledgeBase>,
    config: &InferenceConfig,
    threads: usize,
) -> Result<(KnowledgeBase, InferenceStats), PipelineError> {
    if config.mode == Mode::Ilp && config.lambda > 0.0 && priors.is_none() {
        return Err(PipelineError::MissingKb);
    }
    let (kb, stats) = with_threads(threads, || {
        docs.par_iter()
            .map(|d| {
                let inferred = infer_document(d, models, lex, priors, config)?;
                let mut kb = KnowledgeBase::new();
                kb.accumulate(&inferred.graph, &d.frames());
                Ok::<_, PipelineError>((kb, inferred.stats))
            })
            .try_reduce(
                || (KnowledgeBase::new(), InferenceStats::default()),
                |(a, sa), (b, sb)| Ok((a.merged(b), sa.merge(sb))),
            )
    })??;
    log_stats(&stats);
    Ok((kb, stats))
}

/// The relations stored on each document, as graphs with frames.
pub fn framed_graphs(docs: &[Document]) -> Vec<FramedGraph> {
    docs.iter()
        .map(|d| FramedGraph {
            graph: d.gold_graph(),
            frames: d.frames().into_iter().map(String::from).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn corpus(n: usize, seed: u64) -> Vec<Document> {
        generate(&SynthConfig {
            documents: n,
            seed,
            ..SynthConfig::default()
        })
    }

    #[test]
    fn examples_cover_gold_pairs() {
        let docs = corpus(5, 1);
        let (same, neighbor) = training_examples(&docs, &LexicalResource::default());
        let total: usize = docs.iter().map(|d| d.gold_graph().edge_count()).sum();
        assert_eq!(same.len() + neighbor.len(), total);
    }

    #[test]
    fn greedy_records_match_graph() {
        let docs = corpus(10, 2);
        let lex = LexicalResource::default();
        let models = train_models(&docs, &lex, &TrainOptions::default()).unwrap();
        let (out, stats) = infer_corpus(&docs, &models, &lex, None, &InferenceConfig::default(), 2).unwrap();
        assert_eq!(stats.documents, 10);
        for (d, inf) in docs.iter().zip(&out) {
            assert_eq!(inf.records.len(), inf.graph.edge_count());
            let near = TemporalGraph::from_edges(
                inf.graph.node_count(),
                inf.graph.edges().filter(|&(m, n, _)| d.sentence_distance(m, n) <= 1),
            )
            .unwrap();
            assert_eq!(inf.labeled(d).gold_graph(), near);
        }
    }

    #[test]
    fn ilp_requires_kb() {
        let docs = corpus(3, 3);
        let lex = LexicalResource::default();
        let models = LocalModels::<f64> {
            same: PerceptronModel::empty(Bucket::Same),
            neighbor: PerceptronModel::empty(Bucket::Neighbor),
        };
        let config = InferenceConfig {
            mode: Mode::Ilp,
            ..InferenceConfig::default()
        };
        assert!(matches!(
            infer_corpus(&docs, &models, &lex, None, &config, 1),
            Err(PipelineError::MissingKb)
        ));
        let no_prior = InferenceConfig { lambda: 0.0, ..config };
        assert!(infer_corpus(&docs, &models, &lex, None, &no_prior, 1).is_ok());
    }

    #[test]
    fn kb_independent_of_threads() {
        let docs = corpus(30, 4);
        let lex = LexicalResource::default();
        let models = train_models(&docs, &lex, &TrainOptions::default()).unwrap();
        let config = InferenceConfig::default();
        let (one, _) = build_kb(&docs, &models, &lex, None, &config, 1).unwrap();
        let (four, _) = build_kb(&docs, &models, &lex, None, &config, 4).unwrap();
        assert_eq!(one.to_text(), four.to_text());
        assert_eq!(one.graph_count(), 30);
    }
}
