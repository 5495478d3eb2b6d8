//! Labeled temporal graphs over events in text order.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::relation::Relation;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {node} out of range for graph with {len} nodes")]
    NodeOutOfRange { node: usize, len: usize },
    #[error("self loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) already labeled")]
    AlreadyLabeled(usize, usize),
}

/// Events `0..len` in text-appearance order plus labeled edges.
///
/// Only the `m < n` orientation is stored; `get(n, m)` answers with the
/// reversed label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemporalGraph {
    len: usize,
    edges: BTreeMap<(usize, usize), Relation>,
}

impl TemporalGraph {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            edges: BTreeMap::new(),
        }
    }

    /// Builds a graph from `(source, target, label)` triples in either orientation.
    pub fn from_edges<I>(len: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, Relation)>,
    {
        let mut g = Self::new(len);
        for (a, b, r) in edges {
            g.insert(a, b, r)?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.len
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    fn check(&self, a: usize, b: usize) -> Result<(), GraphError> {
        for node in [a, b] {
            if node >= self.len {
                return Err(GraphError::NodeOutOfRange { node, len: self.len });
            }
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        Ok(())
    }

    /// Labels an unlabeled edge. Existing labels are never overwritten.
    pub fn insert(&mut self, a: usize, b: usize, r: Relation) -> Result<(), GraphError> {
        self.check(a, b)?;
        let (key, label) = if a < b { ((a, b), r) } else { ((b, a), r.reverse()) };
        if self.edges.contains_key(&key) {
            return Err(GraphError::AlreadyLabeled(key.0, key.1));
        }
        self.edges.insert(key, label);
        Ok(())
    }

    /// Sets a label, replacing whatever was there.
    pub fn set(&mut self, a: usize, b: usize, r: Relation) -> Result<Option<Relation>, GraphError> {
        self.check(a, b)?;
        Ok(if a < b {
            self.edges.insert((a, b), r)
        } else {
            self.edges.insert((b, a), r.reverse()).map(Relation::reverse)
        })
    }

    pub fn remove(&mut self, a: usize, b: usize) -> Option<Relation> {
        if a < b {
            self.edges.remove(&(a, b))
        } else {
            self.edges.remove(&(b, a)).map(Relation::reverse)
        }
    }

    pub fn get(&self, a: usize, b: usize) -> Option<Relation> {
        if a < b {
            self.edges.get(&(a, b)).copied()
        } else {
            self.edges.get(&(b, a)).map(|r| r.reverse())
        }
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.get(a, b).is_some()
    }

    /// Stored edges `(m, n, label)` with `m < n`, sorted by `(m, n)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Relation)> + '_ {
        self.edges.iter().map(|(&(m, n), &r)| (m, n, r))
    }

    /// Copy without vague edges.
    pub fn without_vague(&self) -> TemporalGraph {
        TemporalGraph {
            len: self.len,
            edges: self
                .edges
                .iter()
                .filter(|(_, r)| !r.is_vague())
                .map(|(k, r)| (*k, *r))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_query() {
        let mut g = TemporalGraph::new(3);
        g.insert(2, 0, Relation::Before).unwrap();
        assert_eq!(g.get(0, 2), Some(Relation::After));
        assert_eq!(g.get(2, 0), Some(Relation::Before));
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 2, Relation::After)]);
    }

    #[test]
    fn insert_never_overwrites() {
        let mut g = TemporalGraph::new(2);
        g.insert(0, 1, Relation::Before).unwrap();
        assert_eq!(g.insert(1, 0, Relation::After), Err(GraphError::AlreadyLabeled(0, 1)));
        assert_eq!(g.get(0, 1), Some(Relation::Before));
    }

    #[test]
    fn rejects_bad_nodes() {
        let mut g = TemporalGraph::new(2);
        assert_eq!(g.insert(1, 1, Relation::Equal), Err(GraphError::SelfLoop(1)));
        assert!(matches!(
            g.insert(0, 5, Relation::Equal),
            Err(GraphError::NodeOutOfRange { .. })
        ));
    }
}
