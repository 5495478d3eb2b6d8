mod common;

use std::collections::BTreeMap;

use common::{grid_intervals, interval_relation};
use temprel_core::{CompositionTable, Relation, RelationSet};

/// Composition sets collected from every triple of grid intervals.
fn sampled_table() -> BTreeMap<(Relation, Relation), RelationSet> {
    let intervals = grid_intervals(8);
    let mut out: BTreeMap<(Relation, Relation), RelationSet> = BTreeMap::new();
    for &a in &intervals {
        for &b in &intervals {
            let ab = interval_relation(a, b);
            for &c in &intervals {
                let entry = out.entry((ab, interval_relation(b, c))).or_insert(RelationSet::EMPTY);
                entry.insert(interval_relation(a, c));
            }
        }
    }
    out
}

#[test]
fn derived_table_matches_sampling() {
    let sampled = sampled_table();
    let table = CompositionTable::derive();
    for r1 in Relation::ALL {
        for r2 in Relation::ALL {
            let expected = if r1.is_vague() || r2.is_vague() {
                RelationSet::FULL
            } else {
                sampled[&(r1, r2)]
            };
            assert_eq!(table.compose(r1, r2), expected, "({r1}, {r2})");
        }
    }
}

#[test]
fn spot_entries() {
    let t = CompositionTable::derive();
    use Relation::*;
    assert_eq!(t.compose(Before, Includes), RelationSet::single(Before));
    assert_eq!(t.compose(Before, After), RelationSet::FULL);
    assert_eq!(t.compose(Equal, Included), RelationSet::single(Included));
}
