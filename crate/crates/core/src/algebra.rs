//! Composition of temporal relations and closure over temporal graphs.
//!
//! The composition table is derived, not written down: each non-vague label
//! is a set of endpoint orderings between two intervals of positive duration,
//! and `compose(r1, r2)` collects the labels of every realizable third edge.

use std::sync::OnceLock;

use thiserror::Error;

use crate::graph::TemporalGraph;
use crate::relation::{Relation, RelationSet};

/// A derived label contradicts one already on the graph.
#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("closure through ({i}, {j}, {k}) derives {derived} for ({i}, {k}) but it is labeled {existing}")]
pub struct ConflictError {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub derived: Relation,
    pub existing: Relation,
}

/// A sorted triple `i < j < k` whose three labels cannot hold together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Ordering of one endpoint relative to another.
use std::cmp::Ordering as Cmp;

/// Endpoint configuration of an interval pair `(a, b)`:
/// `(start_a ? start_b, start_a ? end_b, end_a ? start_b, end_a ? end_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Atom([Cmp; 4]);

impl Atom {
    fn start_start(self) -> Cmp {
        self.0[0]
    }
    fn start_end(self) -> Cmp {
        self.0[1]
    }
    fn end_start(self) -> Cmp {
        self.0[2]
    }
    fn end_end(self) -> Cmp {
        self.0[3]
    }

    fn label(self) -> Relation {
        use std::cmp::Ordering::*;
        if self.end_start() == Less {
            Relation::Before
        } else if self.start_end() == Greater {
            Relation::After
        } else if self.start_start() == Less && self.end_end() == Greater {
            Relation::Includes
        } else if self.start_start() == Greater && self.end_end() == Less {
            Relation::Included
        } else if self.start_start() == Equal && self.end_end() == Equal {
            Relation::Equal
        } else {
            Relation::Vague
        }
    }
}

/// Complete comparison data over a set of points, checked for realizability
/// as a weak order: equalities merged by union-find, strict edges acyclic.
struct PointOrder {
    n: usize,
    constraints: Vec<(usize, usize, Cmp)>,
}

impl PointOrder {
    fn new(n: usize) -> Self {
        Self {
            n,
            constraints: Vec::new(),
        }
    }

    fn add(&mut self, a: usize, b: usize, c: Cmp) {
        self.constraints.push((a, b, c));
    }

    fn realizable(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b, c) in &self.constraints {
            if c == Cmp::Equal {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let mut succ = vec![Vec::new(); self.n];
        for &(a, b, c) in &self.constraints {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            match c {
                Cmp::Equal => {}
                _ if ra == rb => return false,
                Cmp::Less => succ[ra].push(rb),
                Cmp::Greater => succ[rb].push(ra),
            }
        }
        // Kahn's algorithm over class representatives.
        let reps: Vec<usize> = (0..self.n).filter(|&x| find(&mut parent, x) == x).collect();
        let mut indeg = vec![0usize; self.n];
        for &r in &reps {
            for &s in &succ[r] {
                indeg[s] += 1;
            }
        }
        let mut stack: Vec<usize> = reps.iter().copied().filter(|&r| indeg[r] == 0).collect();
        let mut seen = 0;
        while let Some(r) = stack.pop() {
            seen += 1;
            for &s in &succ[r] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    stack.push(s);
                }
            }
        }
        seen == reps.len()
    }
}

const CMPS: [Cmp; 3] = [Cmp::Less, Cmp::Equal, Cmp::Greater];

/// Constrains points `(2a, 2a+1)` and `(2b, 2b+1)` (start, end of intervals a, b).
fn constrain(order: &mut PointOrder, a: usize, b: usize, atom: Atom) {
    let (sa, ea, sb, eb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
    order.add(sa, sb, atom.start_start());
    order.add(sa, eb, atom.start_end());
    order.add(ea, sb, atom.end_start());
    order.add(ea, eb, atom.end_end());
}

/// Every realizable endpoint configuration of two positive-length intervals.
fn atoms() -> Vec<Atom> {
    let mut out = Vec::new();
    for a in CMPS {
        for b in CMPS {
            for c in CMPS {
                for d in CMPS {
                    let atom = Atom([a, b, c, d]);
                    let mut order = PointOrder::new(4);
                    order.add(0, 1, Cmp::Less);
                    order.add(2, 3, Cmp::Less);
                    constrain(&mut order, 0, 1, atom);
                    if order.realizable() {
                        out.push(atom);
                    }
                }
            }
        }
    }
    out
}

/// `compose(r1, r2)`: the labels `r3` such that `r1` on (a, b) and `r2` on
/// (b, c) can hold together with `r3` on (a, c).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionTable {
    entries: [[RelationSet; 6]; 6],
}

impl CompositionTable {
    /// Derives the table from endpoint semantics.
    pub fn derive() -> Self {
        let atoms = atoms();
        let mut entries = [[RelationSet::FULL; 6]; 6];
        for r1 in Relation::ALL {
            for r2 in Relation::ALL {
                if r1.is_vague() || r2.is_vague() {
                    continue;
                }
                let mut set = RelationSet::EMPTY;
                for &a12 in atoms.iter().filter(|a| a.label() == r1) {
                    for &a23 in atoms.iter().filter(|a| a.label() == r2) {
                        for &a13 in &atoms {
                            if set.contains(a13.label()) {
                                continue;
                            }
                            let mut order = PointOrder::new(6);
                            for i in 0..3 {
                                order.add(2 * i, 2 * i + 1, Cmp::Less);
                            }
                            constrain(&mut order, 0, 1, a12);
                            constrain(&mut order, 1, 2, a23);
                            constrain(&mut order, 0, 2, a13);
                            if order.realizable() {
                                set.insert(a13.label());
                            }
                        }
                    }
                }
                entries[r1.index()][r2.index()] = set;
            }
        }
        Self { entries }
    }

    /// Process-wide table, derived on first use.
    pub fn shared() -> &'static CompositionTable {
        static TABLE: OnceLock<CompositionTable> = OnceLock::new();
        TABLE.get_or_init(CompositionTable::derive)
    }

    #[inline]
    pub fn compose(&self, r1: Relation, r2: Relation) -> RelationSet {
        self.entries[r1.index()][r2.index()]
    }

    /// Whether labels `ab`, `bc`, `ac` on a triangle can hold together.
    #[inline]
    pub fn consistent(&self, ab: Relation, bc: Relation, ac: Relation) -> bool {
        self.compose(ab, bc).contains(ac)
    }

    /// Labels for (a, c) consistent with every two-edge path a → b → c in `graph`.
    pub fn allowed(&self, graph: &TemporalGraph, a: usize, c: usize) -> RelationSet {
        let mut allowed = RelationSet::FULL;
        for b in 0..graph.node_count() {
            if b == a || b == c {
                continue;
            }
            if let (Some(ab), Some(bc)) = (graph.get(a, b), graph.get(b, c)) {
                allowed = allowed.intersect(self.compose(ab, bc));
            }
        }
        allowed
    }
}

impl Default for CompositionTable {
    fn default() -> Self {
        Self::derive()
    }
}

/// Adds every edge forced by a singleton composition until nothing changes.
///
/// Returns the number of edges added. Ordered triples `(i, j, k)` are visited
/// in sorted order on every pass, so the result does not depend on how the
/// graph was built.
pub fn close_in_place(graph: &mut TemporalGraph, table: &CompositionTable) -> Result<usize, ConflictError> {
    let n = graph.node_count();
    let mut added = 0;
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let Some(r1) = graph.get(i, j) else { continue };
                if r1.is_vague() {
                    continue;
                }
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let Some(r2) = graph.get(j, k) else { continue };
                    let Some(x) = table.compose(r1, r2).singleton() else {
                        continue;
                    };
                    if x.is_vague() {
                        continue;
                    }
                    match graph.get(i, k) {
                        None => {
                            graph.insert(i, k, x).expect("unlabeled in-range edge accepts a label");
                            added += 1;
                            changed = true;
                        }
                        Some(existing) if existing != x => {
                            return Err(ConflictError {
                                i,
                                j,
                                k,
                                derived: x,
                                existing,
                            });
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        if !changed {
            return Ok(added);
        }
    }
}

/// Transitive closure of `graph`; see [`close_in_place`].
pub fn close(graph: &TemporalGraph, table: &CompositionTable) -> Result<TemporalGraph, ConflictError> {
    let mut out = graph.clone();
    close_in_place(&mut out, table)?;
    Ok(out)
}

/// All fully labeled triangles whose labels cannot hold together.
pub fn check_consistent(graph: &TemporalGraph, table: &CompositionTable) -> Vec<Violation> {
    let n = graph.node_count();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let Some(ij) = graph.get(i, j) else { continue };
            for k in j + 1..n {
                let (Some(jk), Some(ik)) = (graph.get(j, k), graph.get(i, k)) else {
                    continue;
                };
                if !table.consistent(ij, jk, ik) {
                    out.push(Violation { i, j, k });
                }
            }
        }
    }
    out
}
