//! Scoring predicted graphs against gold, significance testing, and the
//! knowledge-base-only baselines.

use std::fmt;

use thiserror::Error;

use crate::algebra::{check_consistent, close, CompositionTable, ConflictError};
use crate::graph::TemporalGraph;
use crate::kb::KnowledgeBase;
use crate::relation::Relation;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction has {pred} nodes but gold has {gold}")]
    NodeMismatch { pred: usize, gold: usize },
    #[error("{which} graph is inconsistent: {detail}")]
    Conflict { which: &'static str, detail: String },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("threshold {0} outside [0.5, 1)")]
    InvalidThreshold(f64),
    #[error("unknown causal label `{0}`")]
    UnknownLabel(String),
}

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Prf {
    pub fn from_counts(correct_pred: u64, predicted: u64, correct_gold: u64, gold: u64) -> Self {
        Self::new(ratio(correct_pred, predicted), ratio(correct_gold, gold))
    }

    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

impl fmt::Display for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}\t{:.4}\t{:.4}", self.precision, self.recall, self.f1)
    }
}

/// Gold label (row) by predicted label (column); a missing prediction
/// counts as vague.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub counts: [[u64; 6]; 6],
}

impl Confusion {
    pub fn add(&mut self, gold: Relation, pred: Relation) {
        self.counts[gold.index()][pred.index()] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(orow) {
                *a += b;
            }
        }
    }

    pub fn gold_total(&self, r: Relation) -> u64 {
        self.counts[r.index()].iter().sum()
    }

    pub fn pred_total(&self, r: Relation) -> u64 {
        self.counts.iter().map(|row| row[r.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..6).map(|i| self.counts[i][i]).sum()
    }

    /// Micro P/R/F1 with vague as abstention.
    pub fn standard(&self) -> Prf {
        let informative = || Relation::ALL.into_iter().filter(|r| !r.is_vague());
        let correct: u64 = informative().map(|r| self.counts[r.index()][r.index()]).sum();
        let predicted: u64 = informative().map(|r| self.pred_total(r)).sum();
        let gold: u64 = informative().map(|r| self.gold_total(r)).sum();
        Prf::from_counts(correct, predicted, correct, gold)
    }

    pub fn per_label(&self, r: Relation) -> Prf {
        let hit = self.counts[r.index()][r.index()];
        Prf::from_counts(hit, self.pred_total(r), hit, self.gold_total(r))
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }
}

/// Labels of `pred` on every gold pair accepted by `keep`.
pub fn score_where(
    pred: &TemporalGraph,
    gold: &TemporalGraph,
    keep: impl Fn(usize, usize) -> bool,
) -> Result<Confusion, EvalError> {
    if pred.node_count() != gold.node_count() {
        return Err(EvalError::NodeMismatch {
            pred: pred.node_count(),
            gold: gold.node_count(),
        });
    }
    let mut c = Confusion::default();
    for (m, n, g) in gold.edges() {
        if keep(m, n) {
            c.add(g, pred.get(m, n).unwrap_or(Relation::Vague));
        }
    }
    Ok(c)
}

pub fn score(pred: &TemporalGraph, gold: &TemporalGraph) -> Result<Confusion, EvalError> {
    score_where(pred, gold, |_, _| true)
}

/// Counts behind the temporal awareness score; sums across documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AwarenessCounts {
    /// `|reduce(pred) ∩ close(gold)|`
    pub pred_hits: u64,
    /// `|reduce(pred)|`
    pub pred_reduced: u64,
    /// `|reduce(gold) ∩ close(pred)|`
    pub gold_hits: u64,
    /// `|reduce(gold)|`
    pub gold_reduced: u64,
}

impl AwarenessCounts {
    pub fn merge(&mut self, other: &AwarenessCounts) {
        self.pred_hits += other.pred_hits;
        self.pred_reduced += other.pred_reduced;
        self.gold_hits += other.gold_hits;
        self.gold_reduced += other.gold_reduced;
    }

    pub fn prf(&self) -> Prf {
        Prf::from_counts(self.pred_hits, self.pred_reduced, self.gold_hits, self.gold_reduced)
    }
}

/// Edges of `close(graph)` (vague dropped) minus every edge, taken in sorted
/// order, that closure of the remaining edges recovers.
pub fn reduce(graph: &TemporalGraph, table: &CompositionTable) -> Result<TemporalGraph, ConflictError> {
    let closed = close(&graph.without_vague(), table)?;
    let mut kept = closed.clone();
    for (m, n, r) in closed.edges() {
        let mut trial = kept.clone();
        trial.remove(m, n);
        if close(&trial, table)?.get(m, n) == Some(r) {
            kept = trial;
        }
    }
    Ok(kept)
}

fn hits(reduced: &TemporalGraph, closed: &TemporalGraph) -> u64 {
    reduced.edges().filter(|&(m, n, r)| closed.get(m, n) == Some(r)).count() as u64
}

/// Temporal awareness counts of `pred` against `gold`.
pub fn awareness(
    pred: &TemporalGraph,
    gold: &TemporalGraph,
    table: &CompositionTable,
) -> Result<AwarenessCounts, EvalError> {
    if pred.node_count() != gold.node_count() {
        return Err(EvalError::NodeMismatch {
            pred: pred.node_count(),
            gold: gold.node_count(),
        });
    }
    let prepare = |g: &TemporalGraph, which: &'static str| -> Result<(TemporalGraph, TemporalGraph), EvalError> {
        let conflict = |detail: String| EvalError::Conflict { which, detail };
        if let Some(v) = check_consistent(g, table).first() {
            return Err(conflict(format!("triangle ({}, {}, {})", v.i, v.j, v.k)));
        }
        let closed = close(&g.without_vague(), table).map_err(|e| conflict(e.to_string()))?;
        let reduced = reduce(g, table).map_err(|e| conflict(e.to_string()))?;
        Ok((closed, reduced))
    };
    let (pred_closed, pred_reduced) = prepare(pred, "predicted")?;
    let (gold_closed, gold_reduced) = prepare(gold, "gold")?;
    Ok(AwarenessCounts {
        pred_hits: hits(&pred_reduced, &gold_closed),
        pred_reduced: pred_reduced.edge_count() as u64,
        gold_hits: hits(&gold_reduced, &pred_closed),
        gold_reduced: gold_reduced.edge_count() as u64,
    })
}

/// Aggregate scores for a set of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub standard: Prf,
    pub per_label: [Prf; 6],
    pub awareness: Option<Prf>,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn new(confusion: Confusion, awareness: Option<AwarenessCounts>) -> Self {
        Self {
            standard: confusion.standard(),
            per_label: std::array::from_fn(|i| confusion.per_label(Relation::from_index(i))),
            awareness: awareness.map(|a| a.prf()),
            confusion,
        }
    }

    /// Tab-separated metric table, then the per-label block and the confusion matrix.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tP\tR\tF1\n");
        out.push_str(&format!("standard\t{}\n", self.standard));
        if let Some(a) = self.awareness {
            out.push_str(&format!("awareness\t{a}\n"));
        }
        out.push_str("\nlabel\tP\tR\tF1\n");
        for r in Relation::ALL {
            out.push_str(&format!("{}\t{}\n", r.name(), self.per_label[r.index()]));
        }
        out.push_str("\ngold\\pred");
        for r in Relation::ALL {
            out.push_str(&format!("\t{}", r.name()));
        }
        out.push('\n');
        for g in Relation::ALL {
            out.push_str(g.name());
            for p in Relation::ALL {
                out.push_str(&format!("\t{}", self.confusion.counts[g.index()][p.index()]));
            }
            out.push('\n');
        }
        out
    }
}

/// Predicts before/after from the knowledge base alone when the ratio
/// clears `tau`, vague otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPredictor {
    tau: f64,
}

impl ThresholdPredictor {
    pub fn new(tau: f64) -> Result<Self, EvalError> {
        if (0.5..1.0).contains(&tau) {
            Ok(Self { tau })
        } else {
            Err(EvalError::InvalidThreshold(tau))
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn predict_one(&self, kb: &KnowledgeBase, frame1: &str, frame2: &str) -> Relation {
        let eta = kb.eta::<f64>(frame1, frame2);
        if eta.before > self.tau {
            Relation::Before
        } else if eta.after > self.tau {
            Relation::After
        } else {
            Relation::Vague
        }
    }

    pub fn predict<A: AsRef<str>, B: AsRef<str>>(&self, kb: &KnowledgeBase, pairs: &[(A, B)]) -> Vec<Relation> {
        pairs
            .iter()
            .map(|(a, b)| self.predict_one(kb, a.as_ref(), b.as_ref()))
            .collect()
    }
}

pub fn threshold_predict<A: AsRef<str>, B: AsRef<str>>(
    kb: &KnowledgeBase,
    pairs: &[(A, B)],
    tau: f64,
) -> Result<Vec<Relation>, EvalError> {
    Ok(ThresholdPredictor::new(tau)?.predict(kb, pairs))
}

pub fn constant_baseline<T>(pairs: &[T], label: Relation) -> Vec<Relation> {
    vec![label; pairs.len()]
}

/// Confusion of parallel prediction/gold label lists.
pub fn confusion_of(pred: &[Relation], gold: &[Relation]) -> Result<Confusion, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch(pred.len(), gold.len()));
    }
    let mut c = Confusion::default();
    for (p, g) in pred.iter().zip(gold) {
        c.add(*g, *p);
    }
    Ok(c)
}

/// Maps `causes` to before and `caused_by` to after.
pub fn causal_to_temprel<A: Clone, B: Clone>(records: &[(A, B, &str)]) -> Result<Vec<(A, B, Relation)>, EvalError> {
    records
        .iter()
        .map(|(a, b, label)| {
            let r = match *label {
                "causes" => Relation::Before,
                "caused_by" => Relation::After,
                other => return Err(EvalError::UnknownLabel(other.to_string())),
            };
            Ok((a.clone(), b.clone(), r))
        })
        .collect()
}

/// Outcome of McNemar's test on paired correctness vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemar {
    /// Items the first system gets right and the second wrong.
    pub b: u64,
    /// Items the first system gets wrong and the second right.
    pub c: u64,
    pub p_value: f64,
    /// Whether the exact binomial form was used.
    pub exact: bool,
}

/// Exact two-sided binomial test below 25 discordant pairs, continuity
/// corrected chi-square otherwise.
pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemar, EvalError> {
    if correct_a.len() != correct_b.len() {
        return Err(EvalError::LengthMismatch(correct_a.len(), correct_b.len()));
    }
    let b = correct_a.iter().zip(correct_b).filter(|(a, b)| **a && !**b).count() as u64;
    let c = correct_a.iter().zip(correct_b).filter(|(a, b)| !**a && **b).count() as u64;
    Ok(mcnemar_from_counts(b, c))
}

pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemar {
    let n = b + c;
    if n == 0 {
        return McNemar {
            b,
            c,
            p_value: 1.0,
            exact: true,
        };
    }
    if n < 25 {
        let k = b.min(c);
        // P(X <= k) for X ~ Bin(n, 1/2), summing C(n, i) iteratively
        let mut coef = 1.0f64;
        let mut tail = 0.0;
        for i in 0..=k {
            if i > 0 {
                coef = coef * (n - i + 1) as f64 / i as f64;
            }
            tail += coef;
        }
        let p = (2.0 * tail * 0.5f64.powi(n as i32)).min(1.0);
        McNemar {
            b,
            c,
            p_value: p,
            exact: true,
        }
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let stat = diff.max(0.0).powi(2) / n as f64;
        // chi-square survival with one degree of freedom
        let p = statrs::function::erf::erfc((stat / 2.0).sqrt());
        McNemar {
            b,
            c,
            p_value: p.min(1.0),
            exact: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Relation::*;

    fn g(n: usize, edges: &[(usize, usize, Relation)]) -> TemporalGraph {
        TemporalGraph::from_edges(n, edges.iter().copied()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gold = g(3, &[(0, 1, Before), (1, 2, Includes)]);
        let c = score(&gold, &gold).unwrap();
        assert_eq!(c.standard(), Prf::new(1.0, 1.0));
    }

    #[test]
    fn all_vague_prediction() {
        let gold = g(3, &[(0, 1, Before), (1, 2, After)]);
        let pred = g(3, &[(0, 1, Vague), (1, 2, Vague)]);
        let s = score(&pred, &gold).unwrap().standard();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_right() {
        let gold = g(3, &[(0, 1, Before), (1, 2, After)]);
        let pred = g(3, &[(0, 1, Before), (1, 2, Before)]);
        let c = score(&pred, &gold).unwrap();
        let s = c.standard();
        assert_eq!((s.precision, s.recall), (0.5, 0.5));
        assert_eq!(c.gold_total(Before), 1);
        assert_eq!(c.gold_total(After), 1);
        assert_eq!(c.per_label(Before), Prf::new(0.5, 1.0));
    }

    #[test]
    fn node_mismatch() {
        assert!(matches!(
            score(&g(2, &[]), &g(3, &[])),
            Err(EvalError::NodeMismatch { pred: 2, gold: 3 })
        ));
    }

    #[test]
    fn awareness_chain() {
        let t = CompositionTable::shared();
        let gold = g(3, &[(0, 1, Before), (1, 2, Before)]);
        let closed = close(&gold, t).unwrap();
        assert_eq!(awareness(&closed, &gold, t).unwrap().prf(), Prf::new(1.0, 1.0));

        // gold given with its implied edge; prediction without it
        let gold_full = closed.clone();
        assert_eq!(awareness(&gold, &gold_full, t).unwrap().prf(), Prf::new(1.0, 1.0));

        let contradicted = g(3, &[(0, 1, Before), (1, 2, After)]);
        let a = awareness(&contradicted, &gold, t).unwrap();
        assert_eq!(
            a,
            AwarenessCounts {
                pred_hits: 1,
                pred_reduced: 2,
                gold_hits: 1,
                gold_reduced: 2
            }
        );
        assert_eq!(a.prf(), Prf::new(0.5, 0.5));
    }

    #[test]
    fn awareness_rejects_inconsistent() {
        let t = CompositionTable::shared();
        let bad = g(3, &[(0, 1, Before), (1, 2, Before), (0, 2, After)]);
        assert!(matches!(awareness(&bad, &bad, t), Err(EvalError::Conflict { .. })));
    }

    #[test]
    fn reduce_drops_implied_edges() {
        let t = CompositionTable::shared();
        let chain = g(4, &[(0, 1, Before), (1, 2, Before), (2, 3, Before)]);
        let reduced = reduce(&close(&chain, t).unwrap(), t).unwrap();
        assert_eq!(reduced, chain);
    }

    #[test]
    fn threshold_examples() {
        let mut kb = KnowledgeBase::new();
        kb.add("chop.01", "taste.01", Before, 133);
        kb.add("chop.01", "taste.01", After, 8);
        let pairs = [("chop.01", "taste.01"), ("x.01", "y.01")];
        assert_eq!(threshold_predict(&kb, &pairs, 0.9).unwrap(), vec![Before, Vague]);
        assert_eq!(threshold_predict(&kb, &pairs, 0.5).unwrap(), vec![Before, Vague]);
        assert!(threshold_predict(&kb, &pairs, 1.0).is_err());
        assert!(threshold_predict(&kb, &pairs, 0.4).is_err());
    }

    #[test]
    fn constant_baselines() {
        let gold: Vec<Relation> = (0..1000).map(|i| if i < 547 { Before } else { After }).collect();
        let before = confusion_of(&constant_baseline(&gold, Before), &gold).unwrap();
        let after = confusion_of(&constant_baseline(&gold, After), &gold).unwrap();
        assert!((before.accuracy() - 0.547).abs() < 1e-12);
        assert!((after.accuracy() - 0.453).abs() < 1e-12);
        assert!(constant_baseline::<u8>(&[], Before).is_empty());
    }

    #[test]
    fn causal_conversion() {
        let recs = [("a", "b", "causes"), ("c", "d", "caused_by")];
        assert_eq!(
            causal_to_temprel(&recs).unwrap(),
            vec![("a", "b", Before), ("c", "d", After)]
        );
        assert!(causal_to_temprel::<&str, &str>(&[]).unwrap().is_empty());
        assert!(matches!(
            causal_to_temprel(&[("a", "b", "enables")]),
            Err(EvalError::UnknownLabel(_))
        ));
    }

    #[test]
    fn mcnemar_examples() {
        let same = vec![true, false, true];
        assert_eq!(mcnemar(&same, &same).unwrap().p_value, 1.0);

        let m = mcnemar_from_counts(0, 10);
        assert!(m.exact);
        assert!((m.p_value - 2.0 / 1024.0).abs() < 1e-15);

        assert_eq!(mcnemar_from_counts(5, 5).p_value, 1.0);
        assert!(mcnemar(&[true], &[true, false]).is_err());
    }

    #[test]
    fn mcnemar_chi_square_branch() {
        // b=30, c=10: (|20| - 1)^2 / 40 = 9.025
        let m = mcnemar_from_counts(30, 10);
        assert!(!m.exact);
        // survival of chi2(1) at 9.025, from the normal tail: 2 * (1 - Phi(sqrt(9.025)))
        assert!((m.p_value - 0.002663).abs() < 1e-5, "{}", m.p_value);
    }
}
