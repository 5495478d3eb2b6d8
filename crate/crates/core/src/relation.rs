//! The six temporal relation labels and small sets over them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A temporal relation between two events, read as "first REL second".
///
/// Variant order is the fixed tie-breaking order used everywhere a choice
/// between equally scored labels has to be made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Before,
    After,
    Includes,
    Included,
    Equal,
    Vague,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown relation label `{0}`")]
pub struct UnknownRelation(pub String);

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Before,
        Relation::After,
        Relation::Includes,
        Relation::Included,
        Relation::Equal,
        Relation::Vague,
    ];

    pub const COUNT: usize = 6;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Relation {
        Relation::ALL[i]
    }

    pub fn reverse(self) -> Relation {
        match self {
            Relation::Before => Relation::After,
            Relation::After => Relation::Before,
            Relation::Includes => Relation::Included,
            Relation::Included => Relation::Includes,
            Relation::Equal => Relation::Equal,
            Relation::Vague => Relation::Vague,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Before => "before",
            Relation::After => "after",
            Relation::Includes => "includes",
            Relation::Included => "included",
            Relation::Equal => "equal",
            Relation::Vague => "vague",
        }
    }

    pub fn is_vague(self) -> bool {
        self == Relation::Vague
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| UnknownRelation(s.to_string()))
    }
}

/// A subset of the six relations, stored as a bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RelationSet(u8);

impl RelationSet {
    pub const EMPTY: RelationSet = RelationSet(0);
    pub const FULL: RelationSet = RelationSet(0b11_1111);

    pub fn single(r: Relation) -> RelationSet {
        RelationSet(1 << r.index())
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, r: Relation) -> bool {
        self.0 & (1 << r.index()) != 0
    }

    pub fn insert(&mut self, r: Relation) {
        self.0 |= 1 << r.index();
    }

    pub fn remove(&mut self, r: Relation) {
        self.0 &= !(1 << r.index());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// The only member, if there is exactly one.
    pub fn singleton(self) -> Option<Relation> {
        if self.len() == 1 {
            Some(Relation::from_index(self.0.trailing_zeros() as usize))
        } else {
            None
        }
    }

    pub fn intersect(self, other: RelationSet) -> RelationSet {
        RelationSet(self.0 & other.0)
    }

    pub fn union(self, other: RelationSet) -> RelationSet {
        RelationSet(self.0 | other.0)
    }

    /// Elements in the fixed label order.
    pub fn iter(self) -> impl Iterator<Item = Relation> {
        Relation::ALL.into_iter().filter(move |r| self.contains(*r))
    }

    pub fn reversed(self) -> RelationSet {
        self.iter().map(Relation::reverse).collect()
    }
}

impl FromIterator<Relation> for RelationSet {
    fn from_iter<I: IntoIterator<Item = Relation>>(iter: I) -> Self {
        let mut set = RelationSet::EMPTY;
        for r in iter {
            set.insert(r);
        }
        set
    }
}

impl fmt::Debug for RelationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(Relation::name)).finish()
    }
}
