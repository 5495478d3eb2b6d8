//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use temprel_core::inference::IlpProblem;
use temprel_core::{CompositionTable, Relation, TemporalGraph};

/// Half-open interval `[start, end)` on an integer grid, `start < end`.
pub type Interval = (i32, i32);

/// Relation between two intervals under strict endpoint semantics.
pub fn interval_relation(a: Interval, b: Interval) -> Relation {
    let ((s1, e1), (s2, e2)) = (a, b);
    if e1 < s2 {
        Relation::Before
    } else if s1 > e2 {
        Relation::After
    } else if s1 == s2 && e1 == e2 {
        Relation::Equal
    } else if s1 < s2 && e2 < e1 {
        Relation::Includes
    } else if s2 < s1 && e1 < e2 {
        Relation::Included
    } else {
        Relation::Vague
    }
}

pub fn grid_intervals(size: i32) -> Vec<Interval> {
    let mut out = Vec::new();
    for s in 0..size {
        for e in s + 1..size {
            out.push((s, e));
        }
    }
    out
}

/// A graph over `n` random intervals with each pair kept with probability
/// `keep`; consistent by construction.
pub fn random_consistent_graph(rng: &mut impl Rng, n: usize, keep: f64) -> TemporalGraph {
    let intervals: Vec<Interval> = (0..n)
        .map(|_| {
            let s = rng.gen_range(0..12);
            (s, s + rng.gen_range(1..6))
        })
        .collect();
    let mut g = TemporalGraph::new(n);
    for m in 0..n {
        for k in m + 1..n {
            if rng.gen_bool(keep) {
                g.insert(m, k, interval_relation(intervals[m], intervals[k])).unwrap();
            }
        }
    }
    g
}

pub fn random_distribution(rng: &mut impl Rng) -> [f64; 6] {
    let raw: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.001..1.0));
    let total: f64 = raw.iter().sum();
    raw.map(|x| x / total)
}

/// Best assignment by enumerating all `6^|pairs|` labelings; ties keep the
/// first in lexicographic label order.
pub fn brute_force(problem: &IlpProblem<f64>, table: &CompositionTable) -> (Vec<Relation>, f64) {
    let pairs = problem.pairs();
    let k = pairs.len();
    let index = |a: usize, b: usize| pairs.iter().position(|&p| p == (a, b));
    let mut triangles = Vec::new();
    for i in 0..problem.node_count() {
        for j in i + 1..problem.node_count() {
            for l in j + 1..problem.node_count() {
                if let (Some(ij), Some(jl), Some(il)) = (index(i, j), index(j, l), index(i, l)) {
                    triangles.push((ij, jl, il));
                }
            }
        }
    }
    let mut best: Option<(Vec<Relation>, f64)> = None;
    for code in 0..6usize.pow(k as u32) {
        let labels: Vec<Relation> = (0..k)
            .map(|p| Relation::from_index(code / 6usize.pow((k - 1 - p) as u32) % 6))
            .collect();
        let ok = triangles
            .iter()
            .all(|&(a, b, c)| table.compose(labels[a], labels[b]).contains(labels[c]));
        if !ok {
            continue;
        }
        let value: f64 = (0..k)
            .map(|p| problem.scores()[p][labels[p].index()] + problem.lambda() * problem.priors()[p][labels[p].index()])
            .sum();
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((labels, value));
        }
    }
    best.expect("all-vague is always feasible")
}

/// A random problem over at most four events and at most four pairs.
pub fn random_problem(rng: &mut impl Rng) -> IlpProblem<f64> {
    let nodes = rng.gen_range(2..=4usize);
    let mut all = Vec::new();
    for a in 0..nodes {
        for b in a + 1..nodes {
            all.push((a, b));
        }
    }
    let k = rng.gen_range(1..=all.len().min(4));
    let mut pairs = Vec::new();
    while pairs.len() < k {
        let p = all[rng.gen_range(0..all.len())];
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    pairs.sort();
    let scores = (0..k).map(|_| random_distribution(rng)).collect();
    let priors = (0..k).map(|_| random_distribution(rng)).collect();
    let lambda = if rng.gen_bool(0.2) {
        0.0
    } else {
        rng.gen_range(0.0..1.5)
    };
    IlpProblem::new(nodes, pairs, scores, priors, lambda).unwrap()
}
