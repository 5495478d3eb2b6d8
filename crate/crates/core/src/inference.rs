//! Document-level inference: greedy labeling interleaved with closure, and
//! exact prior-regularized ILP solved by branch and bound.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::algebra::{check_consistent, close_in_place, CompositionTable};
use crate::document::{Bucket, CandidatePair, Document};
use crate::features::{add_prior_features, extract, LexicalResource};
use crate::graph::TemporalGraph;
use crate::kb::KnowledgeBase;
use crate::perceptron::{PerceptronModel, ScoredPrediction};
use crate::relation::{Relation, RelationSet};
use crate::scalar::Real;

/// Default weight of the knowledge-base prior in the ILP objective.
pub const DEFAULT_LAMBDA: f64 = 0.5;

const BOUND_SLACK: f64 = 1e-12;

/// Scores one candidate pair of a document.
pub trait PairScorer<S> {
    fn score(&self, doc: &Document, pair: CandidatePair) -> ScoredPrediction<S>;
}

impl<S, F> PairScorer<S> for F
where
    F: Fn(&Document, CandidatePair) -> ScoredPrediction<S>,
{
    fn score(&self, doc: &Document, pair: CandidatePair) -> ScoredPrediction<S> {
        self(doc, pair)
    }
}

/// The same-sentence and neighboring-sentence models.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModels<S> {
    pub same: PerceptronModel<S>,
    pub neighbor: PerceptronModel<S>,
}

impl<S> LocalModels<S> {
    pub fn for_bucket(&self, bucket: Bucket) -> &PerceptronModel<S> {
        match bucket {
            Bucket::Same => &self.same,
            Bucket::Neighbor => &self.neighbor,
        }
    }
}

/// Perceptron scorer over extracted features, optionally with
/// knowledge-base prior features.
pub struct LocalClassifier<'a, S> {
    pub models: &'a LocalModels<S>,
    pub lexicon: &'a LexicalResource,
    pub prior_features: Option<&'a KnowledgeBase>,
}

impl<S: Real> PairScorer<S> for LocalClassifier<'_, S> {
    fn score(&self, doc: &Document, pair: CandidatePair) -> ScoredPrediction<S> {
        let mut fv = extract(doc, pair.source, pair.target, self.lexicon);
        if let Some(kb) = self.prior_features {
            add_prior_features(
                &mut fv,
                kb,
                &doc.events[pair.source].frame,
                &doc.events[pair.target].frame,
            );
        }
        self.models.for_bucket(pair.bucket).predict(&fv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome<S> {
    pub graph: TemporalGraph,
    /// Classifier output for every pair the classifier was asked about.
    pub predictions: BTreeMap<(usize, usize), ScoredPrediction<S>>,
    pub classifier_edges: usize,
    pub closure_edges: usize,
    /// Classifier labels replaced because they would have made the graph
    /// inconsistent.
    pub constrained: usize,
}

/// Labels same-sentence pairs, then neighboring-sentence pairs, each in
/// `(source, target)` order, closing the graph after every new label.
/// Pairs already labeled by closure are skipped.
///
/// The classifier's label is kept unless adding it (and closing) would make
/// some triangle inconsistent; then the next best label that keeps the graph
/// consistent is used. `vague` never creates an inconsistency, so the graph
/// stays consistent throughout.
pub fn infer_greedy<S: Real>(
    doc: &Document,
    scorer: &impl PairScorer<S>,
    table: &CompositionTable,
) -> GreedyOutcome<S> {
    let mut graph = TemporalGraph::new(doc.events.len());
    let mut out = GreedyOutcome {
        graph: TemporalGraph::new(0),
        predictions: BTreeMap::new(),
        classifier_edges: 0,
        closure_edges: 0,
        constrained: 0,
    };
    let pairs = doc.candidate_pairs();
    for bucket in [Bucket::Same, Bucket::Neighbor] {
        for pair in pairs.iter().filter(|p| p.bucket == bucket) {
            let (m, n) = (pair.source, pair.target);
            if graph.contains(m, n) {
                continue;
            }
            let pred = scorer.score(doc, *pair);
            let allowed = table.allowed(&graph, m, n);
            let mut ranked: Vec<Relation> = Relation::ALL.to_vec();
            ranked.sort_by(|a, b| {
                pred.scores[b.index()]
                    .partial_cmp(&pred.scores[a.index()])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut accepted = None;
            for label in ranked {
                if label.is_vague() {
                    let mut g = graph.clone();
                    g.insert(m, n, label).expect("pair was unlabeled");
                    accepted = Some((g, 0));
                    break;
                }
                if !allowed.contains(label) {
                    continue;
                }
                let mut trial = graph.clone();
                trial.insert(m, n, label).expect("pair was unlabeled");
                if let Ok(added) = close_in_place(&mut trial, table) {
                    if check_consistent(&trial, table).is_empty() {
                        accepted = Some((trial, added));
                        break;
                    }
                }
            }
            let (next, added) = accepted.expect("vague is always acceptable");
            if next.get(m, n) != Some(pred.label) {
                out.constrained += 1;
            }
            graph = next;
            out.predictions.insert((m, n), pred);
            out.classifier_edges += 1;
            out.closure_edges += added;
        }
    }
    debug_assert!(check_consistent(&graph, table).is_empty());
    out.graph = graph;
    out
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum IlpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// Candidate pairs with local scores `x_r(ij)`, priors `f_r(ij)` and the
/// prior weight `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpProblem<S> {
    node_count: usize,
    pairs: Vec<(usize, usize)>,
    scores: Vec<[S; 6]>,
    priors: Vec<[S; 6]>,
    lambda: S,
}

impl<S: Real> IlpProblem<S> {
    pub fn new(
        node_count: usize,
        pairs: Vec<(usize, usize)>,
        scores: Vec<[S; 6]>,
        priors: Vec<[S; 6]>,
        lambda: S,
    ) -> Result<Self, IlpError> {
        let bad = |m: String| Err(IlpError::InvalidProblem(m));
        if scores.len() != pairs.len() || priors.len() != pairs.len() {
            return bad(format!(
                "{} pairs but {} score rows and {} prior rows",
                pairs.len(),
                scores.len(),
                priors.len()
            ));
        }
        if lambda.is_nan() || lambda < S::zero() || !lambda.is_finite() {
            return bad(format!("lambda must be a non-negative number, got {lambda:?}"));
        }
        let mut seen = std::collections::HashSet::new();
        for &(m, n) in &pairs {
            if m >= n || n >= node_count {
                return bad(format!("pair ({m}, {n}) must satisfy m < n < {node_count}"));
            }
            if !seen.insert((m, n)) {
                return bad(format!("pair ({m}, {n}) listed twice"));
            }
        }
        for (what, rows) in [("scores", &scores), ("priors", &priors)] {
            for (row, &(m, n)) in rows.iter().zip(&pairs) {
                let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
                let in_range = row.iter().all(|v| *v >= S::zero() && *v <= S::one());
                if !in_range || (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("{what} of pair ({m}, {n}) are not a distribution"));
                }
            }
        }
        Ok(Self {
            node_count,
            pairs,
            scores,
            priors,
            lambda,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn scores(&self) -> &[[S; 6]] {
        &self.scores
    }

    pub fn priors(&self) -> &[[S; 6]] {
        &self.priors
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    /// `x_r + lambda * f_r` for pair `p`.
    pub fn coefficient(&self, p: usize, r: Relation) -> S {
        self.scores[p][r.index()] + self.lambda * self.priors[p][r.index()]
    }

    /// Objective of a full labeling, summed in pair order.
    pub fn objective(&self, labels: &[Relation]) -> S {
        labels
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (p, r)| acc + self.coefficient(p, *r))
    }

    /// Same problem with a different prior weight.
    pub fn with_lambda(&self, lambda: S) -> Self {
        Self { lambda, ..self.clone() }
    }

    /// Index triples `(ij, jk, ik)` of candidate pairs forming a triangle.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let index: HashMap<(usize, usize), usize> = self.pairs.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut out = Vec::new();
        let mut sorted: Vec<(usize, usize)> = self.pairs.clone();
        sorted.sort_unstable();
        for &(i, j) in &sorted {
            for &(j2, k) in sorted.iter().filter(|(a, _)| *a == j) {
                debug_assert_eq!(j, j2);
                if let Some(&ik) = index.get(&(i, k)) {
                    out.push([index[&(i, j)], index[&(j, k)], ik]);
                }
            }
        }
        out
    }
}

/// Labels one per pair, aligned with [`IlpProblem::pairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<S> {
    pub labels: Vec<Relation>,
    pub objective: S,
    /// False when the node budget ran out before the search finished.
    pub optimal: bool,
    pub nodes: u64,
}

impl<S> Assignment<S> {
    pub fn to_graph(&self, problem: &IlpProblem<S>) -> TemporalGraph {
        let mut g = TemporalGraph::new(problem.node_count);
        for (&(m, n), &r) in problem.pairs.iter().zip(&self.labels) {
            g.insert(m, n, r).expect("pairs are distinct");
        }
        g
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverOptions {
    /// Stop after this many search nodes and return the incumbent.
    pub node_budget: Option<u64>,
}

struct Search<'a, S> {
    problem: &'a IlpProblem<S>,
    table: &'a CompositionTable,
    triangles: Vec<[usize; 3]>,
    by_pair: Vec<Vec<usize>>,
    order: Vec<usize>,
    coef: Vec<[S; 6]>,
    domains: Vec<RelationSet>,
    assigned: Vec<Option<Relation>>,
    trail: Vec<(usize, RelationSet)>,
    incumbent: Option<(S, Vec<Relation>)>,
    nodes: u64,
    budget: Option<u64>,
    exhausted: bool,
}

impl<S: Real> Search<'_, S> {
    /// Labels for the unassigned member of a triangle given the other two.
    fn supported(&self, tri: [usize; 3], free: usize) -> RelationSet {
        let [ij, jk, ik] = tri;
        let label = |p: usize| self.assigned[p].expect("two of three assigned");
        let t = self.table;
        if free == ik {
            t.compose(label(ij), label(jk))
        } else if free == jk {
            let (a, c) = (label(ij), label(ik));
            Relation::ALL.into_iter().filter(|&y| t.consistent(a, y, c)).collect()
        } else {
            let (b, c) = (label(jk), label(ik));
            Relation::ALL.into_iter().filter(|&x| t.consistent(x, b, c)).collect()
        }
    }

    /// Narrows domains around a fresh assignment of `p`. False on a wipe-out.
    fn propagate(&mut self, p: usize) -> bool {
        for t in 0..self.by_pair[p].len() {
            let tri = self.triangles[self.by_pair[p][t]];
            let free: Vec<usize> = tri.iter().copied().filter(|&q| self.assigned[q].is_none()).collect();
            if free.len() != 1 {
                continue;
            }
            let q = free[0];
            let narrowed = self.domains[q].intersect(self.supported(tri, q));
            if narrowed != self.domains[q] {
                self.trail.push((q, self.domains[q]));
                self.domains[q] = narrowed;
                if narrowed.is_empty() {
                    return false;
                }
            }
        }
        true
    }

    fn remaining_bound(&self, depth: usize) -> S {
        self.order[depth..].iter().fold(S::zero(), |acc, &q| {
            let best = self.domains[q]
                .iter()
                .map(|r| self.coef[q][r.index()])
                .fold(S::neg_infinity(), S::max);
            acc + best
        })
    }

    fn improves(&self, value: S) -> bool {
        self.incumbent.as_ref().is_none_or(|(best, _)| value > *best)
    }

    /// Bound test with a little slack: the bound and the incumbent sum the
    /// same coefficients in different orders, so exact ties can differ by
    /// rounding and would otherwise defeat pruning.
    fn bound_improves(&self, bound: S) -> bool {
        self.incumbent.as_ref().is_none_or(|(best, _)| {
            let slack = S::from_f64(BOUND_SLACK) * best.abs().max(S::one());
            bound > *best + slack
        })
    }

    fn run(&mut self, depth: usize, value: S) {
        if self.exhausted {
            return;
        }
        if depth == self.order.len() {
            if self.improves(value) {
                let labels = self.assigned.iter().map(|r| r.expect("complete")).collect();
                self.incumbent = Some((value, labels));
            }
            return;
        }
        let p = self.order[depth];
        let mut candidates: Vec<Relation> = self.domains[p].iter().collect();
        // stable: equal coefficients keep the fixed label order
        candidates.sort_by(|a, b| {
            self.coef[p][b.index()]
                .partial_cmp(&self.coef[p][a.index()])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for r in candidates {
            if let Some(budget) = self.budget {
                if self.nodes >= budget {
                    self.exhausted = true;
                    return;
                }
            }
            self.nodes += 1;
            let mark = self.trail.len();
            self.assigned[p] = Some(r);
            self.trail.push((p, self.domains[p]));
            self.domains[p] = RelationSet::single(r);
            let value_here = value + self.coef[p][r.index()];
            if self.propagate(p) {
                let bound = value_here + self.remaining_bound(depth + 1);
                if self.bound_improves(bound) {
                    self.run(depth + 1, value_here);
                }
            }
            while self.trail.len() > mark {
                let (q, d) = self.trail.pop().expect("trail above mark");
                self.domains[q] = d;
            }
            self.assigned[p] = None;
            if self.exhausted {
                return;
            }
        }
    }
}

/// Exact maximizer of `sum (x_r + lambda f_r) I_r` subject to one label per
/// pair and transitivity on every triangle of candidate pairs.
///
/// Depth-first branch and bound: pairs by decreasing gap between their two
/// best coefficients, labels by decreasing coefficient, forward checking on
/// triangles, and an optimistic bound of the best remaining coefficient per
/// undecided pair. The first optimum found is kept.
pub fn infer_ilp<S: Real>(problem: &IlpProblem<S>, table: &CompositionTable, options: SolverOptions) -> Assignment<S> {
    let n = problem.pairs.len();
    let coef: Vec<[S; 6]> = (0..n)
        .map(|p| std::array::from_fn(|r| problem.coefficient(p, Relation::from_index(r))))
        .collect();
    let gap = |c: &[S; 6]| {
        let mut sorted = *c;
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        sorted[0] - sorted[1]
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        gap(&coef[b])
            .partial_cmp(&gap(&coef[a]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let triangles = problem.triangles();
    let mut by_pair = vec![Vec::new(); n];
    for (t, tri) in triangles.iter().enumerate() {
        for &p in tri {
            by_pair[p].push(t);
        }
    }
    let mut search = Search {
        problem,
        table,
        triangles,
        by_pair,
        order,
        coef,
        domains: vec![RelationSet::FULL; n],
        assigned: vec![None; n],
        trail: Vec::new(),
        incumbent: None,
        nodes: 0,
        budget: options.node_budget,
        exhausted: false,
    };
    search.run(0, S::zero());
    let optimal = !search.exhausted;
    let nodes = search.nodes;
    let labels = match search.incumbent {
        Some((_, labels)) => labels,
        // all-vague satisfies every triangle
        None => vec![Relation::Vague; n],
    };
    Assignment {
        objective: search.problem.objective(&labels),
        labels,
        optimal,
        nodes,
    }
}

/// Scores every candidate pair and attaches knowledge-base priors
/// (uniform when `kb` is `None` or the frame pair is unseen).
pub fn build_problem<S: Real>(
    doc: &Document,
    scorer: &impl PairScorer<S>,
    kb: Option<&KnowledgeBase>,
    lambda: S,
) -> Result<IlpProblem<S>, IlpError> {
    let candidates = doc.candidate_pairs();
    let mut pairs = Vec::with_capacity(candidates.len());
    let mut scores = Vec::with_capacity(candidates.len());
    let mut priors = Vec::with_capacity(candidates.len());
    for c in candidates {
        pairs.push((c.source, c.target));
        scores.push(scorer.score(doc, c).scores);
        let prior = match kb {
            Some(kb) => kb.prior_distribution::<S>(&doc.events[c.source].frame, &doc.events[c.target].frame),
            None => crate::kb::PriorDistribution::uniform(),
        };
        priors.push(prior.probs);
    }
    IlpProblem::new(doc.events.len(), pairs, scores, priors, lambda)
}
