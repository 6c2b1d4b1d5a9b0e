//! Abstract cache states for LRU caches and their Join/Update operations.
//!
//! An [`AbstractCacheState`] maps memory blocks to ages, per cache set. The
//! meaning of an age depends on the [`Flavor`]:
//!
//! * Must: upper bound of the block's LRU age on every path; blocks not in the
//!   state are not guaranteed to be cached.
//! * May: lower bound of the age on every path where the block is cached;
//!   blocks not in the state are cached on no path.
//! * Persistence: upper bound of the age on every path where the block has
//!   been loaded. Age `ways + 1` is the virtual line: the block may have been
//!   evicted. Blocks not in the state have been loaded on no path.
//!
//! Persistence lines also carry which other blocks of the set were accessed
//! on every path that accessed them. An update only leaves an older block
//! un-aged when the accessed block is known to have been accessed on all of
//! that block's paths; a plain union of ages cannot tell a block that is
//! young on some paths from one that was never loaded on others, and the
//! textbook update under-ages in that case.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flavor {
    Must,
    May,
    Persistence,
}

impl Flavor {
    pub const ALL: [Flavor; 3] = [Flavor::Must, Flavor::May, Flavor::Persistence];

    pub fn name(self) -> &'static str {
        match self {
            Flavor::Must => "must",
            Flavor::May => "may",
            Flavor::Persistence => "persistence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub sets: u32,
    pub ways: u32,
}

impl Geometry {
    pub fn set_of(&self, block: u64) -> u32 {
        (block % u64::from(self.sets)) as u32
    }

    /// Largest age a block may carry under `flavor`.
    pub fn max_age(&self, flavor: Flavor) -> u32 {
        match flavor {
            Flavor::Must | Flavor::May => self.ways,
            Flavor::Persistence => self.ways + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("cannot combine a {0:?} state with a {1:?} state")]
    FlavorMismatch(Flavor, Flavor),
    #[error("cannot combine states of different cache geometries")]
    GeometryMismatch,
    #[error("block {block}: age {age} outside 1..={max}")]
    AgeOutOfRange { block: u64, age: u32, max: u32 },
    #[error("block {block}: companion {companion} is not a block of the same set in the state")]
    BadCompanion { block: u64, companion: u64 },
    #[error("block {0}: only persistence lines carry path information")]
    UnexpectedPathInfo(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Line {
    pub age: u32,
    /// Persistence only: the block was accessed on every path.
    pub on_all_paths: bool,
    /// Persistence only: blocks of the same set accessed on every path that
    /// accessed this block.
    pub accessed_with: BTreeSet<u64>,
}

impl Line {
    pub fn with_age(age: u32) -> Self {
        Line { age, ..Line::default() }
    }
}

type SetLines = BTreeMap<u64, Line>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractCacheState {
    flavor: Flavor,
    geometry: Geometry,
    sets: BTreeMap<u32, SetLines>,
}

impl AbstractCacheState {
    /// State at the start of the task: no information, the cache is cold.
    pub fn empty(flavor: Flavor, geometry: Geometry) -> Self {
        AbstractCacheState { flavor, geometry, sets: BTreeMap::new() }
    }

    pub fn from_ages(flavor: Flavor, geometry: Geometry, ages: &[(u64, u32)]) -> Result<Self, DomainError> {
        Self::from_lines(flavor, geometry, ages.iter().map(|&(b, a)| (b, Line::with_age(a))))
    }

    pub fn from_lines(
        flavor: Flavor,
        geometry: Geometry,
        lines: impl IntoIterator<Item = (u64, Line)>,
    ) -> Result<Self, DomainError> {
        let mut state = AbstractCacheState::empty(flavor, geometry);
        for (block, line) in lines {
            state.sets.entry(geometry.set_of(block)).or_default().insert(block, line);
        }
        state.validate()?;
        Ok(state)
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.sets.values().map(BTreeMap::len).sum()
    }

    pub fn line(&self, block: u64) -> Option<&Line> {
        self.sets.get(&self.geometry.set_of(block))?.get(&block)
    }

    pub fn age(&self, block: u64) -> Option<u32> {
        self.line(block).map(|l| l.age)
    }

    pub fn contains(&self, block: u64) -> bool {
        self.line(block).is_some()
    }

    /// All lines, ordered by set then block number.
    pub fn lines(&self) -> impl Iterator<Item = (u64, &Line)> {
        self.sets.values().flat_map(|s| s.iter().map(|(b, l)| (*b, l)))
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let max = self.geometry.max_age(self.flavor);
        for (set, lines) in &self.sets {
            for (&block, line) in lines {
                debug_assert_eq!(self.geometry.set_of(block), *set);
                if line.age == 0 || line.age > max {
                    return Err(DomainError::AgeOutOfRange { block, age: line.age, max });
                }
                if self.flavor != Flavor::Persistence {
                    if line.on_all_paths || !line.accessed_with.is_empty() {
                        return Err(DomainError::UnexpectedPathInfo(block));
                    }
                    continue;
                }
                for &c in &line.accessed_with {
                    if c == block || !lines.contains_key(&c) {
                        return Err(DomainError::BadCompanion { block, companion: c });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<(), DomainError> {
        if self.flavor != other.flavor {
            return Err(DomainError::FlavorMismatch(self.flavor, other.flavor));
        }
        if self.geometry != other.geometry {
            return Err(DomainError::GeometryMismatch);
        }
        Ok(())
    }

    /// Abstract effect of accessing `block` (a block number at this level).
    pub fn update(&self, block: u64) -> Self {
        let mut out = self.clone();
        out.update_in_place(block);
        out
    }

    pub fn update_in_place(&mut self, block: u64) {
        let ways = self.geometry.ways;
        let set = self.geometry.set_of(block);
        let lines = self.sets.entry(set).or_default();
        let accessed = lines.remove(&block);
        match self.flavor {
            Flavor::Must => {
                let h = accessed.map(|l| l.age);
                for line in lines.values_mut() {
                    if h.is_none_or(|h| line.age < h) {
                        line.age += 1;
                    }
                }
                lines.retain(|_, l| l.age <= ways);
                lines.insert(block, Line::with_age(1));
            }
            Flavor::May => {
                let h = accessed.map(|l| l.age);
                for line in lines.values_mut() {
                    if h.is_none_or(|h| line.age <= h) {
                        line.age += 1;
                    }
                }
                lines.retain(|_, l| l.age <= ways);
                lines.insert(block, Line::with_age(1));
            }
            Flavor::Persistence => {
                // Age bound of the accessed block, usable only while it is
                // below the virtual line.
                let h = accessed.as_ref().map(|l| l.age).filter(|&a| a <= ways);
                let mut companions = BTreeSet::new();
                for (&other, line) in lines.iter_mut() {
                    let refreshed_since = h.is_some_and(|h| line.age >= h && line.accessed_with.contains(&block));
                    if !refreshed_since {
                        line.age = (line.age + 1).min(ways + 1);
                    }
                    if line.on_all_paths {
                        companions.insert(other);
                    }
                    line.accessed_with.insert(block);
                }
                lines.insert(block, Line { age: 1, on_all_paths: true, accessed_with: companions });
            }
        }
        if lines.is_empty() {
            self.sets.remove(&set);
        }
        debug_assert_eq!(self.validate(), Ok(()));
    }

    /// Least upper bound of two states of the same flavor and geometry.
    pub fn join(&self, other: &Self) -> Result<Self, DomainError> {
        self.check_compatible(other)?;
        let mut sets = BTreeMap::new();
        let keys: BTreeSet<u32> = self.sets.keys().chain(other.sets.keys()).copied().collect();
        let none = SetLines::new();
        for set in keys {
            let a = self.sets.get(&set).unwrap_or(&none);
            let b = other.sets.get(&set).unwrap_or(&none);
            let joined = match self.flavor {
                Flavor::Must => a
                    .iter()
                    .filter_map(|(k, la)| b.get(k).map(|lb| (*k, Line::with_age(la.age.max(lb.age)))))
                    .collect::<SetLines>(),
                Flavor::May => {
                    let mut out = a.clone();
                    for (k, lb) in b {
                        out.entry(*k).and_modify(|l| l.age = l.age.min(lb.age)).or_insert_with(|| lb.clone());
                    }
                    out
                }
                Flavor::Persistence => {
                    let mut out = SetLines::new();
                    for k in a.keys().chain(b.keys()) {
                        if out.contains_key(k) {
                            continue;
                        }
                        let line = match (a.get(k), b.get(k)) {
                            (Some(la), Some(lb)) => Line {
                                age: la.age.max(lb.age),
                                on_all_paths: la.on_all_paths && lb.on_all_paths,
                                accessed_with: la.accessed_with.intersection(&lb.accessed_with).copied().collect(),
                            },
                            (Some(l), None) | (None, Some(l)) => Line { on_all_paths: false, ..l.clone() },
                            (None, None) => unreachable!(),
                        };
                        out.insert(*k, line);
                    }
                    out
                }
            };
            if !joined.is_empty() {
                sets.insert(set, joined);
            }
        }
        let out = AbstractCacheState { flavor: self.flavor, geometry: self.geometry, sets };
        debug_assert_eq!(out.validate(), Ok(()));
        Ok(out)
    }

    /// Domain order: `self ⊑ other` when `self` is at least as precise.
    pub fn leq(&self, other: &Self) -> Result<bool, DomainError> {
        self.check_compatible(other)?;
        Ok(match self.flavor {
            Flavor::Must => other.lines().all(|(b, lb)| self.age(b).is_some_and(|a| a <= lb.age)),
            Flavor::May => self.lines().all(|(b, la)| other.age(b).is_some_and(|a| a <= la.age)),
            Flavor::Persistence => {
                self.lines().all(|(b, la)| {
                    other.line(b).is_some_and(|lb| {
                        la.age <= lb.age
                            && (!lb.on_all_paths || la.on_all_paths)
                            && lb.accessed_with.is_subset(&la.accessed_with)
                    })
                }) && other.lines().all(|(b, lb)| !lb.on_all_paths || self.contains(b))
            }
        })
    }

    /// One line per non-empty set, ages youngest first, the virtual line as `T`:
    /// `set 0: 1:{8} 2:{0,16} T:{4}`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let virtual_line = self.geometry.ways + 1;
        for (set, lines) in &self.sets {
            let mut by_age: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
            for (b, l) in lines {
                by_age.entry(l.age).or_default().push(*b);
            }
            out.push_str(&format!("set {set}:"));
            for (age, blocks) in by_age {
                let names: Vec<String> = blocks.iter().map(|b| format!("{b}")).collect();
                if age == virtual_line {
                    out.push_str(&format!(" T:{{{}}}", names.join(",")));
                } else {
                    out.push_str(&format!(" {age}:{{{}}}", names.join(",")));
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for AbstractCacheState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const A: u64 = 0;
    const B: u64 = 1;
    const C: u64 = 2;
    const D: u64 = 3;

    fn one_set(ways: u32) -> Geometry {
        Geometry { sets: 1, ways }
    }

    fn acs(flavor: Flavor, ages: &[(u64, u32)]) -> AbstractCacheState {
        AbstractCacheState::from_ages(flavor, one_set(2), ages).unwrap()
    }

    #[test]
    fn must_join_keeps_common_blocks_at_max_age() {
        let j = acs(Flavor::Must, &[(A, 1), (B, 2)]).join(&acs(Flavor::Must, &[(B, 1), (C, 2)])).unwrap();
        assert_eq!(j, acs(Flavor::Must, &[(B, 2)]));
    }

    #[test]
    fn may_join_is_union_at_min_age() {
        let j = acs(Flavor::May, &[(A, 1), (B, 2)]).join(&acs(Flavor::May, &[(B, 1), (C, 2)])).unwrap();
        assert_eq!(j, acs(Flavor::May, &[(A, 1), (B, 1), (C, 2)]));
    }

    #[test]
    fn join_rejects_mismatches() {
        let must = acs(Flavor::Must, &[]);
        let may = acs(Flavor::May, &[]);
        assert!(matches!(must.join(&may), Err(DomainError::FlavorMismatch(..))));
        let other = AbstractCacheState::empty(Flavor::Must, one_set(4));
        assert_eq!(must.join(&other), Err(DomainError::GeometryMismatch));
    }

    #[test]
    fn must_update_evicts_oldest() {
        let s = acs(Flavor::Must, &[(A, 1), (B, 2)]).update(C);
        assert_eq!(s, acs(Flavor::Must, &[(C, 1), (A, 2)]));
        let s = acs(Flavor::Must, &[(A, 2), (B, 1)]).update(A);
        assert_eq!(s, acs(Flavor::Must, &[(A, 1), (B, 2)]));
    }

    #[test]
    fn may_update_ages_blocks_up_to_accessed_age() {
        let s = acs(Flavor::May, &[(A, 1), (B, 1), (C, 2)]).update(B);
        assert_eq!(s, acs(Flavor::May, &[(B, 1), (A, 2), (C, 2)]));
    }

    #[test]
    fn persistence_keeps_evicted_blocks_on_virtual_line() {
        let s = acs(Flavor::Persistence, &[(A, 2)]).update(C).update(D);
        assert_eq!(s.age(A), Some(3));
        assert_eq!(s.age(C), Some(2));
        assert_eq!(s.age(D), Some(1));
        assert!(s.dump().contains("T:{0}"));
    }

    #[test]
    fn persistence_ages_blocks_when_accessed_block_was_not_loaded_on_their_paths() {
        // Path 1 loads y then x; path 2 loads y then z.
        let empty = AbstractCacheState::empty(Flavor::Persistence, one_set(2));
        let (x, y, z) = (A, B, C);
        let p1 = empty.update(y).update(x);
        let p2 = empty.update(y).update(z);
        let joined = p1.join(&p2).unwrap();
        // On path 2 accessing x evicts y from a 2-way set.
        let after = joined.update(x);
        assert_eq!(after.age(y), Some(3));
    }

    #[test]
    fn persistence_loop_body_is_persistent() {
        // Loop over a, b, a in a 2-way set: both blocks stay cached.
        let mut head = AbstractCacheState::empty(Flavor::Persistence, one_set(2));
        let entry = head.clone();
        for _ in 0..5 {
            let out = head.update(A).update(B).update(A);
            head = entry.join(&out).unwrap();
        }
        let out = head.update(A).update(B);
        assert!(out.age(A).unwrap() <= 2);
        assert!(out.age(B).unwrap() <= 2);
    }

    #[test]
    fn leq_examples() {
        let x = acs(Flavor::Must, &[(A, 1), (B, 2)]);
        assert!(x.leq(&x).unwrap());
        assert!(x.leq(&acs(Flavor::Must, &[(B, 2)])).unwrap());
        assert!(!acs(Flavor::Must, &[(B, 2)]).leq(&x).unwrap());
    }

    #[test]
    fn out_of_range_ages_are_rejected() {
        assert!(AbstractCacheState::from_ages(Flavor::Must, one_set(2), &[(A, 3)]).is_err());
        assert!(AbstractCacheState::from_ages(Flavor::Persistence, one_set(2), &[(A, 3)]).is_ok());
        assert!(AbstractCacheState::from_ages(Flavor::May, one_set(2), &[(A, 0)]).is_err());
    }

    fn arb_state(flavor: Flavor) -> impl Strategy<Value = AbstractCacheState> {
        let g = Geometry { sets: 2, ways: 2 };
        let max = g.max_age(flavor);
        proptest::collection::vec((0u64..6, 1..=max, any::<bool>(), any::<u8>()), 0..6).prop_map(move |raw| {
            let blocks: Vec<u64> = raw.iter().map(|r| r.0).collect();
            let lines = raw.iter().map(|&(b, age, all, mask)| {
                let mut line = Line::with_age(age);
                if flavor == Flavor::Persistence {
                    line.on_all_paths = all;
                    line.accessed_with = blocks
                        .iter()
                        .enumerate()
                        .filter(|&(i, &c)| mask & (1 << i) != 0 && c != b && c % 2 == b % 2)
                        .map(|(_, &c)| c)
                        .collect();
                }
                (b, line)
            });
            AbstractCacheState::from_lines(flavor, g, lines.collect::<Vec<_>>()).unwrap()
        })
    }

    fn arb_flavored() -> impl Strategy<Value = (AbstractCacheState, AbstractCacheState, AbstractCacheState)> {
        prop_oneof![Just(Flavor::Must), Just(Flavor::May), Just(Flavor::Persistence)]
            .prop_flat_map(|f| (arb_state(f), arb_state(f), arb_state(f)))
    }

    proptest! {
        #[test]
        fn join_is_a_semilattice((a, b, c) in arb_flavored()) {
            prop_assert_eq!(a.join(&a).unwrap(), a.clone());
            prop_assert_eq!(a.join(&b).unwrap(), b.join(&a).unwrap());
            prop_assert_eq!(
                a.join(&b).unwrap().join(&c).unwrap(),
                a.join(&b.join(&c).unwrap()).unwrap()
            );
        }

        #[test]
        fn join_is_an_upper_bound((a, b, _c) in arb_flavored()) {
            let j = a.join(&b).unwrap();
            prop_assert!(a.leq(&j).unwrap());
            prop_assert!(b.leq(&j).unwrap());
        }

        #[test]
        fn update_and_join_are_monotone((a, b, c) in arb_flavored(), r in 0u64..6) {
            let hi = a.join(&b).unwrap();
            prop_assert!(a.update(r).leq(&hi.update(r)).unwrap());
            prop_assert!(a.join(&c).unwrap().leq(&hi.join(&c).unwrap()).unwrap());
        }
    }

    #[test]
    fn dump_format() {
        let s = AbstractCacheState::from_ages(
            Flavor::Persistence,
            Geometry { sets: 4, ways: 2 },
            &[(8, 1), (0, 2), (16, 2), (4, 3)],
        )
        .unwrap();
        assert_eq!(s.dump(), "set 0: 1:{8} 2:{0,16} T:{4}\n");
        let _ = vec![0];
    }
}
