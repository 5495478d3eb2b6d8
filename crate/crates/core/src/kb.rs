//! The temporal-relation count store and every statistic derived from it.
//!
//! Counts are keyed by frame pairs in text order: `C(a, b, r)` counts edges
//! where an event of frame `a` appears before an event of frame `b` in the
//! text and the two are labeled `r`. `C(a, b, r)` and `C(b, a, reverse(r))`
//! are never merged.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::TemporalGraph;
use crate::relation::Relation;
use crate::scalar::Scalar;

pub const HEADER: &str = "#temprob-kb v1";

/// Minimum before+after support for [`KnowledgeBase::extreme_pairs`].
pub const DEFAULT_MIN_COUNT: u64 = 20;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checksum mismatch: footer says {expected:08x}, data hashes to {found:08x}")]
    ChecksumMismatch { expected: u32, found: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Per-relation counts for one ordered frame pair, indexed by [`Relation::index`].
pub type RelationCounts = [u64; 6];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeBase {
    counts: BTreeMap<(String, String), RelationCounts>,
    graph_count: u64,
}

/// Smoothed before/after ratios of a frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPrior<S> {
    pub before: S,
    pub after: S,
}

/// Smoothed six-label prior of a frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDistribution<S> {
    pub probs: [S; 6],
}

impl<S: Scalar> PriorDistribution<S> {
    pub fn uniform() -> Self {
        let p = S::one() / S::from_count(6);
        Self {
            probs: std::array::from_fn(|_| p.clone()),
        }
    }

    pub fn prob(&self, r: Relation) -> S {
        self.probs[r.index()].clone()
    }

    pub fn sum(&self) -> S {
        self.probs.iter().cloned().fold(S::zero(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Frames `v'` with `v` T-Before `v'`.
    TBefore,
    /// Frames `v'` with `v` T-After `v'`.
    TAfter,
}

impl Direction {
    pub fn relation(self) -> Relation {
        match self {
            Direction::TBefore => Relation::Before,
            Direction::TAfter => Relation::After,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDistribution<S> {
    pub direction: Direction,
    /// `(frame, P(v dir frame | v dir anything))`, most probable first.
    pub entries: Vec<(String, S)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremePair {
    pub frame1: String,
    pub frame2: String,
    pub prior: PairPrior<f64>,
    pub before: u64,
    pub after: u64,
}

impl ExtremePair {
    /// Unsmoothed share of the dominant direction.
    pub fn dominance(&self) -> f64 {
        self.before.max(self.after) as f64 / (self.before + self.after) as f64
    }
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn graph_count(&self) -> u64 {
        self.graph_count
    }

    pub fn pair_count(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty() && self.graph_count == 0
    }

    /// Adds one graph. `frames[i]` is the frame of node `i`.
    pub fn accumulate<F: AsRef<str>>(&mut self, graph: &TemporalGraph, frames: &[F]) {
        assert_eq!(graph.node_count(), frames.len(), "one frame per graph node");
        for (m, n, r) in graph.edges() {
            self.add(frames[m].as_ref(), frames[n].as_ref(), r, 1);
        }
        self.graph_count += 1;
    }

    pub fn add(&mut self, frame1: &str, frame2: &str, r: Relation, count: u64) {
        if count == 0 {
            return;
        }
        let key = (frame1.to_string(), frame2.to_string());
        self.counts.entry(key).or_default()[r.index()] += count;
    }

    pub fn add_graphs(&mut self, n: u64) {
        self.graph_count += n;
    }

    /// Entrywise sum.
    pub fn merge(&mut self, other: &KnowledgeBase) {
        for (key, counts) in &other.counts {
            let entry = self.counts.entry(key.clone()).or_default();
            for (a, b) in entry.iter_mut().zip(counts) {
                *a += b;
            }
        }
        self.graph_count += other.graph_count;
    }

    pub fn merged(mut self, other: KnowledgeBase) -> KnowledgeBase {
        if self.counts.len() < other.counts.len() {
            let mut other = other;
            other.merge(&self);
            return other;
        }
        self.merge(&other);
        self
    }

    pub fn counts(&self, frame1: &str, frame2: &str) -> RelationCounts {
        // BTreeMap<(String, String)> cannot be probed with borrowed strs
        self.counts
            .get(&(frame1.to_string(), frame2.to_string()))
            .copied()
            .unwrap_or_default()
    }

    pub fn count(&self, frame1: &str, frame2: &str, r: Relation) -> u64 {
        self.counts(frame1, frame2)[r.index()]
    }

    /// `(frame1, frame2, counts)` in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &RelationCounts)> {
        self.counts.iter().map(|((a, b), c)| (a.as_str(), b.as_str(), c))
    }

    /// Every frame that occurs in some count.
    pub fn vocab(&self) -> BTreeSet<&str> {
        let mut v = BTreeSet::new();
        for (a, b) in self.counts.keys() {
            v.insert(a.as_str());
            v.insert(b.as_str());
        }
        v
    }

    fn first_frame_range<'a>(&'a self, frame: &'a str) -> impl Iterator<Item = (&'a str, &'a RelationCounts)> + 'a {
        self.counts
            .range((frame.to_string(), String::new())..)
            .take_while(move |((a, _), _)| a == frame)
            .map(|((_, b), c)| (b.as_str(), c))
    }

    /// `C(v, r)`: how often `v` precedes any frame in text with label `r`.
    pub fn marginal(&self, frame: &str, r: Relation) -> u64 {
        self.first_frame_range(frame).map(|(_, c)| c[r.index()]).sum()
    }

    /// Add-one smoothed before/after ratio; `after` is `1 - before`.
    pub fn eta<S: Scalar>(&self, frame1: &str, frame2: &str) -> PairPrior<S> {
        let c = self.counts(frame1, frame2);
        let b = c[Relation::Before.index()];
        let a = c[Relation::After.index()];
        let before = S::from_count(b + 1) / S::from_count(a + b + 2);
        let after = S::one() - before.clone();
        PairPrior { before, after }
    }

    /// Six-label prior smoothed with one pseudo-count per label.
    pub fn prior_distribution<S: Scalar>(&self, frame1: &str, frame2: &str) -> PriorDistribution<S> {
        let c = self.counts(frame1, frame2);
        let total: u64 = c.iter().sum();
        let denom = S::from_count(total + Relation::COUNT as u64);
        PriorDistribution {
            probs: std::array::from_fn(|i| S::from_count(c[i] + 1) / denom.clone()),
        }
    }

    /// Top-`k` frames that `frame` precedes (or follows) in time, conditioned
    /// on it preceding (following) anything. Empty when the marginal is zero.
    pub fn neighbor_distribution<S: Scalar>(
        &self,
        frame: &str,
        direction: Direction,
        k: usize,
    ) -> NeighborDistribution<S> {
        let r = direction.relation();
        let marginal = self.marginal(frame, r);
        let mut entries = Vec::new();
        if marginal > 0 {
            let denom = S::from_count(marginal);
            let mut raw: Vec<(&str, u64)> = self
                .first_frame_range(frame)
                .map(|(b, c)| (b, c[r.index()]))
                .filter(|&(_, c)| c > 0)
                .collect();
            // counts share one denominator, so ordering by count is exact
            raw.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
            entries = raw
                .into_iter()
                .take(k)
                .map(|(b, c)| (b.to_string(), S::from_count(c) / denom.clone()))
                .collect();
        }
        NeighborDistribution { direction, entries }
    }

    /// Pairs with at least `min_count` before+after edges whose dominant
    /// direction holds in more than `threshold` of them, strongest first.
    pub fn extreme_pairs(&self, threshold: f64, min_count: u64) -> Result<Vec<ExtremePair>, KbError> {
        if !(0.5..1.0).contains(&threshold) {
            return Err(KbError::InvalidArgument(format!(
                "threshold {threshold} outside [0.5, 1)"
            )));
        }
        let mut out: Vec<ExtremePair> = self
            .counts
            .iter()
            .filter_map(|((a, b), c)| {
                let before = c[Relation::Before.index()];
                let after = c[Relation::After.index()];
                let support = before + after;
                if support == 0 || support < min_count {
                    return None;
                }
                let pair = ExtremePair {
                    frame1: a.clone(),
                    frame2: b.clone(),
                    prior: self.eta(a, b),
                    before,
                    after,
                };
                (pair.dominance() > threshold).then_some(pair)
            })
            .collect();
        out.sort_by(|x, y| {
            y.dominance()
                .total_cmp(&x.dominance())
                .then_with(|| (&x.frame1, &x.frame2).cmp(&(&y.frame1, &y.frame2)))
        });
        Ok(out)
    }

    fn data_section(&self) -> String {
        let mut rels = Relation::ALL;
        rels.sort_by_key(|r| r.name());
        let mut data = String::new();
        for ((a, b), c) in &self.counts {
            for r in rels {
                let n = c[r.index()];
                if n > 0 {
                    writeln!(data, "{a}\t{b}\t{}\t{n}", r.name()).unwrap();
                }
            }
        }
        data
    }

    pub fn to_text(&self) -> String {
        let data = self.data_section();
        let crc = crc32fast::hash(data.as_bytes());
        format!("{HEADER}\ngraphs={}\n{data}#crc32={crc:08x}\n", self.graph_count)
    }

    pub fn from_text(text: &str) -> Result<Self, KbError> {
        let perr = |line: usize, message: String| KbError::Parse { line, message };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&HEADER) {
            return Err(perr(1, format!("expected header `{HEADER}`")));
        }
        let graph_count = lines
            .get(1)
            .and_then(|l| l.strip_prefix("graphs="))
            .ok_or_else(|| perr(2, "expected `graphs=<N>`".into()))?
            .parse::<u64>()
            .map_err(|e| perr(2, format!("graph count: {e}")))?;
        let footer_at = lines.len().checked_sub(1).filter(|&i| i >= 2);
        let expected = footer_at
            .and_then(|i| lines[i].strip_prefix("#crc32="))
            .ok_or_else(|| perr(lines.len(), "missing `#crc32=` footer".into()))?;
        let expected = u32::from_str_radix(expected, 16).map_err(|e| perr(lines.len(), format!("checksum: {e}")))?;

        let mut kb = KnowledgeBase {
            counts: BTreeMap::new(),
            graph_count,
        };
        let mut data = String::new();
        let mut seen = BTreeSet::new();
        for (i, line) in lines.iter().enumerate().take(lines.len() - 1).skip(2) {
            let lineno = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(perr(
                    lineno,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let r: Relation = fields[2].parse().map_err(|e| perr(lineno, format!("{e}")))?;
            let n: u64 = fields[3]
                .parse()
                .map_err(|e| perr(lineno, format!("count `{}`: {e}", fields[3])))?;
            if n == 0 {
                return Err(perr(lineno, "count must be positive".into()));
            }
            if !seen.insert((fields[0], fields[1], r)) {
                return Err(perr(lineno, "duplicate entry".into()));
            }
            kb.add(fields[0], fields[1], r, n);
            data.push_str(line);
            data.push('\n');
        }
        let found = crc32fast::hash(data.as_bytes());
        if found != expected {
            return Err(KbError::ChecksumMismatch { expected, found });
        }
        Ok(kb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KbError> {
        let path = path.as_ref();
        let io = |e| KbError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_text().as_bytes()).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KbError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_text(&text)
    }
}

/// A graph together with the frame of each node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramedGraph {
    pub graph: TemporalGraph,
    pub frames: Vec<String>,
}

/// Fold-by-fold priors for one frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBootstrap<S> {
    pub frame1: String,
    pub frame2: String,
    pub folds: Vec<PriorDistribution<S>>,
}

impl<S: Scalar> PairBootstrap<S> {
    /// One value per fold for relation `r`.
    pub fn values(&self, r: Relation) -> Vec<S> {
        self.folds.iter().map(|d| d.prob(r)).collect()
    }

    /// `(min, max)` over folds for relation `r`.
    pub fn envelope(&self, r: Relation) -> Option<(S, S)> {
        let mut values = self.values(r).into_iter();
        let first = values.next()?;
        Some(values.fold((first.clone(), first), |(lo, hi), v| {
            let lo = if v < lo { v.clone() } else { lo };
            let hi = if v > hi { v } else { hi };
            (lo, hi)
        }))
    }
}

/// Resamples `ceil(fraction * N)` graphs with replacement per fold and
/// recomputes the smoothed prior of each requested pair.
pub fn bootstrap_priors<S: Scalar>(
    graphs: &[FramedGraph],
    pairs: &[(String, String)],
    folds: usize,
    fraction: f64,
    seed: u64,
) -> Result<Vec<PairBootstrap<S>>, KbError> {
    if folds == 0 {
        return Err(KbError::InvalidArgument("folds must be at least 1".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(KbError::InvalidArgument(format!("fraction {fraction} outside (0, 1]")));
    }
    let wanted: HashMap<(&str, &str), usize> = pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| ((a.as_str(), b.as_str()), i))
        .collect();
    // per graph, counts restricted to the requested pairs
    let per_graph: Vec<Vec<(usize, Relation)>> = graphs
        .iter()
        .map(|g| {
            g.graph
                .edges()
                .filter_map(|(m, n, r)| {
                    wanted
                        .get(&(g.frames[m].as_str(), g.frames[n].as_str()))
                        .map(|&i| (i, r))
                })
                .collect()
        })
        .collect();

    let sample_size = (fraction * graphs.len() as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<PairBootstrap<S>> = pairs
        .iter()
        .map(|(a, b)| PairBootstrap {
            frame1: a.clone(),
            frame2: b.clone(),
            folds: Vec::with_capacity(folds),
        })
        .collect();
    for _ in 0..folds {
        let mut fold = KnowledgeBase::new();
        for _ in 0..sample_size {
            let g = rng.gen_range(0..graphs.len());
            for &(i, r) in &per_graph[g] {
                fold.add(&pairs[i].0, &pairs[i].1, r, 1);
            }
            fold.graph_count += 1;
        }
        for (i, (a, b)) in pairs.iter().enumerate() {
            out[i].folds.push(fold.prior_distribution(a, b));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use Relation::*;

    #[test]
    fn accumulate_counts_text_order() {
        let mut kb = KnowledgeBase::new();
        let g = TemporalGraph::from_edges(2, [(1, 0, After)]).unwrap();
        kb.accumulate(&g, &["ask.01", "help.01"]);
        kb.accumulate(&g, &["ask.01", "help.01"]);
        assert_eq!(kb.count("ask.01", "help.01", Before), 2);
        assert_eq!(kb.count("help.01", "ask.01", After), 0);
        assert_eq!(kb.graph_count(), 2);

        kb.accumulate(&TemporalGraph::new(0), &[] as &[&str]);
        assert_eq!(kb.graph_count(), 3);
        assert_eq!(kb.pair_count(), 1);
    }

    #[test]
    fn eta_examples() {
        let mut kb = KnowledgeBase::new();
        kb.add("chop.01", "taste.01", Before, 133);
        kb.add("chop.01", "taste.01", After, 8);
        kb.add("achieve.01", "desire.01", Before, 7);
        kb.add("achieve.01", "desire.01", After, 104);
        assert_eq!(
            kb.eta::<Rational64>("chop.01", "taste.01").before,
            Rational64::new(134, 143)
        );
        assert_eq!(
            kb.eta::<Rational64>("achieve.01", "desire.01").after,
            Rational64::new(105, 113)
        );
        assert_eq!(kb.eta::<f64>("x.01", "y.01").before, 0.5);
    }

    #[test]
    fn prior_examples() {
        let mut kb = KnowledgeBase::new();
        assert_eq!(
            kb.prior_distribution::<Rational64>("a.01", "b.01"),
            PriorDistribution::uniform()
        );
        kb.add("a.01", "b.01", Before, 4);
        let p = kb.prior_distribution::<Rational64>("a.01", "b.01");
        assert_eq!(p.prob(Before), Rational64::new(1, 2));
        for r in [After, Includes, Included, Equal, Vague] {
            assert_eq!(p.prob(r), Rational64::new(1, 10));
        }
        assert_eq!(p.sum(), Rational64::from_integer(1));
    }

    #[test]
    fn neighbor_examples() {
        let mut kb = KnowledgeBase::new();
        kb.add("v.01", "a.01", Before, 2);
        kb.add("v.01", "c.01", Before, 1);
        kb.add("v.01", "b.01", Before, 1);
        kb.add("v.01", "d.01", After, 3);
        kb.add("w.01", "a.01", Before, 9);
        let d = kb.neighbor_distribution::<f64>("v.01", Direction::TBefore, 10);
        assert_eq!(
            d.entries,
            vec![
                ("a.01".to_string(), 0.5),
                ("b.01".to_string(), 0.25),
                ("c.01".to_string(), 0.25)
            ]
        );
        let d = kb.neighbor_distribution::<f64>("v.01", Direction::TAfter, 10);
        assert_eq!(d.entries, vec![("d.01".to_string(), 1.0)]);
        assert!(kb
            .neighbor_distribution::<f64>("a.01", Direction::TBefore, 3)
            .entries
            .is_empty());
        assert_eq!(
            kb.neighbor_distribution::<f64>("v.01", Direction::TBefore, 1)
                .entries
                .len(),
            1
        );
    }

    #[test]
    fn extreme_pairs_threshold() {
        let mut kb = KnowledgeBase::new();
        assert!(kb.extreme_pairs(0.9, 20).unwrap().is_empty());
        kb.add("a.01", "b.01", Before, 95);
        kb.add("a.01", "b.01", After, 5);
        kb.add("c.01", "d.01", Before, 50);
        kb.add("c.01", "d.01", After, 50);
        kb.add("e.01", "f.01", After, 10);
        let got = kb.extreme_pairs(0.9, 20).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].before, got[0].after), (95, 5));
        assert_eq!(kb.extreme_pairs(0.9, 5).unwrap().len(), 2);
        assert!(kb.extreme_pairs(1.0, 5).is_err());
    }

    #[test]
    fn file_round_trip_and_errors() {
        let empty = KnowledgeBase::new();
        assert_eq!(KnowledgeBase::from_text(&empty.to_text()).unwrap(), empty);

        let mut kb = KnowledgeBase::new();
        kb.add("b.01", "a.01", Before, 3);
        kb.add("a.01", "b.01", Vague, 1);
        kb.add("a.01", "b.01", After, 2);
        kb.add_graphs(7);
        let text = kb.to_text();
        let data: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("graphs="))
            .collect();
        assert_eq!(
            data,
            vec!["a.01\tb.01\tafter\t2", "a.01\tb.01\tvague\t1", "b.01\ta.01\tbefore\t3"]
        );
        assert_eq!(KnowledgeBase::from_text(&text).unwrap(), kb);

        let corrupted = text.replace("after\t2", "after\tx2");
        match KnowledgeBase::from_text(&corrupted) {
            Err(KbError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let tampered = text.replace("after\t2", "after\t4");
        assert!(matches!(
            KnowledgeBase::from_text(&tampered),
            Err(KbError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn bootstrap_single_graph_folds_identical() {
        let g = FramedGraph {
            graph: TemporalGraph::from_edges(2, [(0, 1, Before)]).unwrap(),
            frames: vec!["a.01".into(), "b.01".into()],
        };
        let pairs = vec![("a.01".to_string(), "b.01".to_string())];
        let res = bootstrap_priors::<f64>(&[g], &pairs, 4, 1.0, 1).unwrap();
        assert_eq!(res[0].folds.len(), 4);
        assert!(res[0].folds.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(res[0].envelope(Before), Some((2.0 / 7.0, 2.0 / 7.0)));
    }

    #[test]
    fn bootstrap_rejects_bad_arguments() {
        assert!(bootstrap_priors::<f64>(&[], &[], 0, 0.5, 1).is_err());
        assert!(bootstrap_priors::<f64>(&[], &[], 1, 0.0, 1).is_err());
        assert!(bootstrap_priors::<f64>(&[], &[], 1, 1.5, 1).is_err());
    }
}
