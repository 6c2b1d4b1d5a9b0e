//! Per-level classification of instruction fetches in a cache hierarchy.
//!
//! Level 1 sees every fetch. A fetch reaches level L+1 depending on its
//! access classification (CAC) and hit/miss classification (CHMC) at level
//! L. Fetches that may or may not reach a level are analyzed with both
//! outcomes joined.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::cache::{block_of, CacheLevelConfig, HierarchyConfig, MemoryBlock, Policy};
use crate::domain::{AbstractCacheState, Flavor, Geometry};
use crate::program::{Cfg, RefId};
use crate::solver::{iteration_budget, solve, AnalysisResult, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Chmc {
    AlwaysHit,
    AlwaysMiss,
    FirstHit,
    FirstMiss,
    NotClassified,
}

impl Chmc {
    pub const ALL: [Chmc; 5] =
        [Chmc::AlwaysHit, Chmc::AlwaysMiss, Chmc::FirstHit, Chmc::FirstMiss, Chmc::NotClassified];

    pub fn short(self) -> &'static str {
        match self {
            Chmc::AlwaysHit => "AH",
            Chmc::AlwaysMiss => "AM",
            Chmc::FirstHit => "FH",
            Chmc::FirstMiss => "FM",
            Chmc::NotClassified => "NC",
        }
    }

    pub fn from_short(s: &str) -> Option<Chmc> {
        Chmc::ALL.into_iter().find(|c| c.short() == s)
    }
}

impl fmt::Display for Chmc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cac {
    Always,
    Never,
    Uncertain,
}

impl Cac {
    pub const ALL: [Cac; 3] = [Cac::Always, Cac::Never, Cac::Uncertain];

    pub fn short(self) -> &'static str {
        match self {
            Cac::Always => "A",
            Cac::Never => "N",
            Cac::Uncertain => "U",
        }
    }
}

impl fmt::Display for Cac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalysisMode {
    #[default]
    Safe,
    /// Every fetch that is not an always-hit at some level is treated as a
    /// certain access to the next level. Unsound for associative caches.
    Mueller,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("level {level}: only LRU caches can be analyzed (got {policy})")]
    UnsupportedPolicy { level: usize, policy: &'static str },
    #[error("level {level}: line size {line} is smaller than the instruction width {width}")]
    LineTooSmall { level: usize, line: u32, width: u64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Hit/miss classification from the three pre-states of a fetch.
pub fn classify(
    must: &AbstractCacheState,
    may: &AbstractCacheState,
    persistence: &AbstractCacheState,
    block: u64,
) -> Chmc {
    if must.contains(block) {
        Chmc::AlwaysHit
    } else if !may.contains(block) {
        Chmc::AlwaysMiss
    } else if persistence.age(block).is_some_and(|a| a <= persistence.geometry().ways) {
        Chmc::FirstMiss
    } else {
        Chmc::NotClassified
    }
}

/// Access classification at level L+1 from the classifications at level L.
pub fn cac_next(cac: Cac, chmc: Chmc) -> Cac {
    match (cac, chmc) {
        (Cac::Never, _) | (_, Chmc::AlwaysHit) => Cac::Never,
        (Cac::Always, Chmc::AlwaysMiss) => Cac::Always,
        _ => Cac::Uncertain,
    }
}

pub fn update_m(acs: &AbstractCacheState, block: u64, cac: Cac) -> AbstractCacheState {
    match cac {
        Cac::Always => acs.update(block),
        Cac::Never => acs.clone(),
        Cac::Uncertain => acs.update(block).join(acs).expect("same flavor and geometry"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefClass {
    pub cac: Cac,
    pub chmc: Chmc,
    pub block: MemoryBlock,
}

/// Reference counts of one level. CHMC counts only cover references that
/// may access the level.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LevelSummary {
    pub by_cac: BTreeMap<Cac, usize>,
    pub by_chmc: BTreeMap<Chmc, usize>,
}

impl LevelSummary {
    fn tally(refs: &[Vec<RefClass>]) -> Self {
        let mut s = LevelSummary::default();
        for c in Cac::ALL {
            s.by_cac.insert(c, 0);
        }
        for c in Chmc::ALL {
            s.by_chmc.insert(c, 0);
        }
        for r in refs.iter().flatten() {
            *s.by_cac.get_mut(&r.cac).unwrap() += 1;
            if r.cac != Cac::Never {
                *s.by_chmc.get_mut(&r.chmc).unwrap() += 1;
            }
        }
        s
    }

    pub fn cac(&self, c: Cac) -> usize {
        self.by_cac.get(&c).copied().unwrap_or(0)
    }

    pub fn chmc(&self, c: Chmc) -> usize {
        self.by_chmc.get(&c).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelAnalysis {
    pub level: usize,
    pub geometry: Geometry,
    pub must: AnalysisResult,
    pub may: AnalysisResult,
    pub persistence: AnalysisResult,
    /// Indexed `[block][index]` like the CFG's references.
    pub refs: Vec<Vec<RefClass>>,
    pub summary: LevelSummary,
    /// Block-visit budget each of the three solves had to stay within.
    pub budget: usize,
}

impl LevelAnalysis {
    pub fn class(&self, id: RefId) -> &RefClass {
        &self.refs[id.block][id.index]
    }

    pub fn result(&self, flavor: Flavor) -> &AnalysisResult {
        match flavor {
            Flavor::Must => &self.must,
            Flavor::May => &self.may,
            Flavor::Persistence => &self.persistence,
        }
    }

    pub fn max_iterations(&self) -> usize {
        Flavor::ALL.iter().map(|&f| self.result(f).iterations).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyAnalysis {
    pub mode: AnalysisMode,
    pub levels: Vec<LevelAnalysis>,
}

impl HierarchyAnalysis {
    pub fn class(&self, level: usize, id: RefId) -> &RefClass {
        self.levels[level].class(id)
    }

    /// CHMC of `id` at every level, L1 first.
    pub fn chmcs(&self, id: RefId) -> Vec<Chmc> {
        self.levels.iter().map(|l| l.class(id).chmc).collect()
    }
}

pub fn analyze_hierarchy(cfg: &Cfg, hier: &HierarchyConfig) -> Result<HierarchyAnalysis, AnalysisError> {
    analyze(cfg, hier, AnalysisMode::Safe)
}

pub fn analyze_hierarchy_mueller(cfg: &Cfg, hier: &HierarchyConfig) -> Result<HierarchyAnalysis, AnalysisError> {
    analyze(cfg, hier, AnalysisMode::Mueller)
}

pub fn analyze(cfg: &Cfg, hier: &HierarchyConfig, mode: AnalysisMode) -> Result<HierarchyAnalysis, AnalysisError> {
    let mut cacs: Vec<Vec<Cac>> = cfg.blocks().iter().map(|b| alloc::vec![Cac::Always; b.refs.len()]).collect();
    let mut levels = Vec::with_capacity(hier.levels().len());
    for (li, level) in hier.levels().iter().enumerate() {
        let analysis = analyze_level(cfg, li, level, &cacs)?;
        for (b, refs) in analysis.refs.iter().enumerate() {
            for (i, r) in refs.iter().enumerate() {
                cacs[b][i] = match mode {
                    AnalysisMode::Safe => cac_next(r.cac, r.chmc),
                    AnalysisMode::Mueller if r.cac == Cac::Never || r.chmc == Chmc::AlwaysHit => Cac::Never,
                    AnalysisMode::Mueller => Cac::Always,
                };
            }
        }
        levels.push(analysis);
    }
    Ok(HierarchyAnalysis { mode, levels })
}

fn analyze_level(
    cfg: &Cfg,
    li: usize,
    level: &CacheLevelConfig,
    cacs: &[Vec<Cac>],
) -> Result<LevelAnalysis, AnalysisError> {
    if level.policy != Policy::Lru {
        return Err(AnalysisError::UnsupportedPolicy { level: li + 1, policy: level.policy.name() });
    }
    if u64::from(level.line_size) < cfg.instr_width() {
        return Err(AnalysisError::LineTooSmall { level: li + 1, line: level.line_size, width: cfg.instr_width() });
    }
    let geometry = Geometry { sets: level.sets, ways: level.ways };
    let blocks: Vec<Vec<MemoryBlock>> =
        cfg.blocks().iter().map(|b| b.refs.iter().map(|r| block_of(r.address, li, level)).collect()).collect();

    let mut per_set: BTreeMap<u32, alloc::collections::BTreeSet<u64>> = BTreeMap::new();
    for m in blocks.iter().flatten() {
        per_set.entry(m.set).or_default().insert(m.number);
    }
    let budget = iteration_budget(cfg, geometry, per_set.values().map(|s| s.len()));

    let transfer =
        |r: RefId, s: &AbstractCacheState| update_m(s, blocks[r.block][r.index].number, cacs[r.block][r.index]);
    let run = |flavor| solve(cfg, &AbstractCacheState::empty(flavor, geometry), transfer, budget);
    let must = run(Flavor::Must)?;
    let may = run(Flavor::May)?;
    let persistence = run(Flavor::Persistence)?;

    let refs: Vec<Vec<RefClass>> = cfg
        .blocks()
        .iter()
        .enumerate()
        .map(|(b, block)| {
            block
                .refs
                .iter()
                .map(|r| {
                    let m = blocks[b][r.id.index];
                    RefClass {
                        cac: cacs[b][r.id.index],
                        chmc: classify(must.pre(r.id), may.pre(r.id), persistence.pre(r.id), m.number),
                        block: m,
                    }
                })
                .collect()
        })
        .collect();
    let summary = LevelSummary::tally(&refs);
    Ok(LevelAnalysis { level: li, geometry, must, may, persistence, refs, summary, budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::CacheLevelConfig;
    use crate::program::{BlockSpec, FunctionSpec, LoopSpec, Program};
    use alloc::string::ToString;
    use alloc::vec;

    fn hier() -> HierarchyConfig {
        HierarchyConfig::new(vec![CacheLevelConfig::lru(4, 2, 32, 1), CacheLevelConfig::lru(8, 2, 32, 10)], 100)
            .unwrap()
    }

    fn one_block(addrs: &[u64]) -> Cfg {
        let f = FunctionSpec {
            blocks: vec![BlockSpec { id: "b".to_string(), addrs: addrs.to_vec() }],
            entry: "b".into(),
            exit: "b".into(),
            ..FunctionSpec::default()
        };
        Program::single(4, f).unwrap().to_cfg().unwrap()
    }

    fn tight_loop(bound: u32) -> Cfg {
        let f = FunctionSpec {
            blocks: vec![
                BlockSpec { id: "in".into(), addrs: vec![0x300] },
                BlockSpec { id: "body".into(), addrs: vec![0x100] },
                BlockSpec { id: "out".into(), addrs: vec![0x200] },
            ],
            edges: vec![("in".into(), "body".into()), ("body".into(), "body".into()), ("body".into(), "out".into())],
            entry: "in".into(),
            exit: "out".into(),
            loops: vec![LoopSpec { header: "body".into(), members: vec!["body".into()], bound }],
            ..FunctionSpec::default()
        };
        Program::single(4, f).unwrap().to_cfg().unwrap()
    }

    const R0: RefId = RefId { block: 0, index: 0 };

    #[test]
    fn table_cells() {
        use Cac::*;
        use Chmc::*;
        let expected = [
            (
                Always,
                [
                    (AlwaysMiss, Always),
                    (AlwaysHit, Never),
                    (FirstHit, Uncertain),
                    (FirstMiss, Uncertain),
                    (NotClassified, Uncertain),
                ],
            ),
            (
                Uncertain,
                [
                    (AlwaysMiss, Uncertain),
                    (AlwaysHit, Never),
                    (FirstHit, Uncertain),
                    (FirstMiss, Uncertain),
                    (NotClassified, Uncertain),
                ],
            ),
            (
                Never,
                [
                    (AlwaysMiss, Never),
                    (AlwaysHit, Never),
                    (FirstHit, Never),
                    (FirstMiss, Never),
                    (NotClassified, Never),
                ],
            ),
        ];
        for (row, cells) in expected {
            for (chmc, want) in cells {
                assert_eq!(cac_next(row, chmc), want, "{row} {chmc}");
            }
        }
    }

    #[test]
    fn classify_priorities() {
        let g = Geometry { sets: 1, ways: 2 };
        let acs = |f, ages: &[(u64, u32)]| AbstractCacheState::from_ages(f, g, ages).unwrap();
        let empty_may = acs(Flavor::May, &[]);
        let may = acs(Flavor::May, &[(7, 1)]);
        let pers = acs(Flavor::Persistence, &[(7, 2)]);
        let evicted = acs(Flavor::Persistence, &[(7, 3)]);
        assert_eq!(classify(&acs(Flavor::Must, &[(7, 1)]), &may, &pers, 7), Chmc::AlwaysHit);
        assert_eq!(classify(&acs(Flavor::Must, &[]), &empty_may, &pers, 7), Chmc::AlwaysMiss);
        assert_eq!(classify(&acs(Flavor::Must, &[]), &may, &pers, 7), Chmc::FirstMiss);
        assert_eq!(classify(&acs(Flavor::Must, &[]), &may, &evicted, 7), Chmc::NotClassified);
    }

    #[test]
    fn update_m_cases() {
        let g = Geometry { sets: 1, ways: 2 };
        let x = AbstractCacheState::from_ages(Flavor::Must, g, &[(0, 1)]).unwrap();
        assert_eq!(update_m(&x, 1, Cac::Never), x);
        assert_eq!(update_m(&x, 1, Cac::Always), x.update(1));
        let u = update_m(&x, 1, Cac::Uncertain);
        assert_eq!(u, AbstractCacheState::from_ages(Flavor::Must, g, &[(0, 2)]).unwrap());
    }

    #[test]
    fn single_reference_misses_everywhere() {
        let cfg = one_block(&[0]);
        let a = analyze_hierarchy(&cfg, &hier()).unwrap();
        assert_eq!(a.class(0, R0).chmc, Chmc::AlwaysMiss);
        assert_eq!(a.class(1, R0).cac, Cac::Always);
        assert_eq!(a.class(1, R0).chmc, Chmc::AlwaysMiss);
    }

    #[test]
    fn l1_hit_is_never_seen_by_l2() {
        let cfg = one_block(&[0, 4]);
        let a = analyze_hierarchy(&cfg, &hier()).unwrap();
        let second = RefId { block: 0, index: 1 };
        assert_eq!(a.class(0, second).chmc, Chmc::AlwaysHit);
        assert_eq!(a.class(1, second).cac, Cac::Never);
        assert_eq!(a.levels[1].summary.cac(Cac::Never), 1);
    }

    #[test]
    fn tight_loop_is_first_miss_then_uncertain() {
        let cfg = tight_loop(5);
        let body = RefId { block: 1, index: 0 };
        let a = analyze_hierarchy(&cfg, &hier()).unwrap();
        assert_eq!(a.class(0, body).chmc, Chmc::FirstMiss);
        assert_eq!(a.class(1, body).cac, Cac::Uncertain);
        let m = analyze_hierarchy_mueller(&cfg, &hier()).unwrap();
        assert_eq!(m.class(1, body).cac, Cac::Always);
    }

    #[test]
    fn rejects_fifo_and_short_lines() {
        let cfg = one_block(&[0]);
        let mut fifo = CacheLevelConfig::lru(4, 2, 32, 1);
        fifo.policy = Policy::Fifo;
        let h = HierarchyConfig::new(vec![fifo], 100).unwrap();
        assert!(matches!(analyze_hierarchy(&cfg, &h), Err(AnalysisError::UnsupportedPolicy { .. })));
        let h = HierarchyConfig::new(vec![CacheLevelConfig::lru(4, 2, 2, 1)], 100).unwrap();
        assert!(matches!(analyze_hierarchy(&cfg, &h), Err(AnalysisError::LineTooSmall { .. })));
    }
}
