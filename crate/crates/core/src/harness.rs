//! Ground truth for the analysis: exhaustive path enumeration on the concrete
//! simulator, and construction of programs on which the filtered multi-level
//! analysis under-estimates the cache contribution.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::{analyze, AnalysisError, AnalysisMode, Chmc, HierarchyAnalysis};
use crate::cache::{set_reuse_distance, AccessOutcome, HierarchyConfig, HierarchyState, LevelCounts};
use crate::cost::{wcet_contribution, CostModel, WcetContribution};
use crate::program::{BlockSpec, Cfg, FunctionSpec, Program, ProgramError, RefId};

pub const DEFAULT_MAX_PATHS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("more than {0} paths through the program")]
    PathExplosion(usize),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("no counterexample found: {0}")]
    NoWitness(String),
}

/// One complete path from entry to exit, as seen by the visitor.
#[derive(Debug)]
pub struct PathRun<'a> {
    pub blocks: &'a [usize],
    pub refs: &'a [RefId],
    pub addresses: &'a [u64],
    pub outcomes: &'a [AccessOutcome],
    pub cycles: u64,
}

struct Pending {
    block: usize,
    state: HierarchyState,
    iterations: Vec<u32>,
    depth: usize,
    refs: usize,
    cycles: u64,
}

/// Runs every entry-to-exit path of `cfg` through a cold hierarchy and
/// hands it to `visit`, in lexicographic order of block indices. A loop
/// with bound `k` executes its header at most `k` times per entry. Returns
/// the number of paths.
pub fn for_each_path(
    cfg: &Cfg,
    hier: &HierarchyConfig,
    max_paths: usize,
    mut visit: impl FnMut(&PathRun),
) -> Result<usize, HarnessError> {
    let mut blocks = Vec::new();
    let mut refs = Vec::new();
    let mut addresses = Vec::new();
    let mut outcomes = Vec::new();
    let mut paths = 0;
    let mut stack = vec![Pending {
        block: cfg.entry(),
        state: HierarchyState::cold(hier),
        iterations: vec![0; cfg.loops().len()],
        depth: 0,
        refs: 0,
        cycles: 0,
    }];
    while let Some(p) = stack.pop() {
        blocks.truncate(p.depth);
        refs.truncate(p.refs);
        addresses.truncate(p.refs);
        outcomes.truncate(p.refs);
        let Pending { block, mut state, iterations, mut cycles, .. } = p;
        blocks.push(block);
        for r in &cfg.block(block).refs {
            let o = state.access(r.address);
            cycles += o.cycles;
            refs.push(r.id);
            addresses.push(r.address);
            outcomes.push(o);
        }
        if block == cfg.exit() {
            paths += 1;
            if paths > max_paths {
                return Err(HarnessError::PathExplosion(max_paths));
            }
            visit(&PathRun { blocks: &blocks, refs: &refs, addresses: &addresses, outcomes: &outcomes, cycles });
            continue;
        }
        for &s in cfg.succs(block).iter().rev() {
            let mut it = iterations.clone();
            let mut allowed = true;
            for (l, lp) in cfg.loops().iter().enumerate().filter(|(_, lp)| lp.header == s) {
                if lp.members.contains(&block) {
                    allowed = it[l] < lp.bound;
                    it[l] += 1;
                } else {
                    it[l] = 1;
                }
            }
            if allowed {
                stack.push(Pending {
                    block: s,
                    state: state.clone(),
                    iterations: it,
                    depth: blocks.len(),
                    refs: refs.len(),
                    cycles,
                });
            }
        }
    }
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorstCase {
    pub cycles: u64,
    pub blocks: Vec<usize>,
    pub refs: Vec<RefId>,
    pub addresses: Vec<u64>,
    pub outcomes: Vec<AccessOutcome>,
    pub levels: Vec<LevelCounts>,
    pub paths: usize,
}

/// Costliest path; ties go to the lexicographically first one.
pub fn enumerate_worst(cfg: &Cfg, hier: &HierarchyConfig, max_paths: usize) -> Result<WorstCase, HarnessError> {
    let mut best: Option<WorstCase> = None;
    let paths = for_each_path(cfg, hier, max_paths, |run| {
        if best.as_ref().is_none_or(|b| run.cycles > b.cycles) {
            best = Some(WorstCase {
                cycles: run.cycles,
                blocks: run.blocks.to_vec(),
                refs: run.refs.to_vec(),
                addresses: run.addresses.to_vec(),
                outcomes: run.outcomes.to_vec(),
                levels: Vec::new(),
                paths: 0,
            });
        }
    })?;
    let mut worst = best.expect("a validated CFG has at least one path");
    worst.levels = LevelCounts::tally(worst.outcomes.iter().copied(), hier.levels().len());
    worst.paths = paths;
    Ok(worst)
}

/// A fetch of the repeated block, as classified by both pipelines and as
/// observed on the worst concrete path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FocusRef {
    pub id: RefId,
    pub name: String,
    pub mueller: Vec<Chmc>,
    pub safe: Vec<Chmc>,
    pub mueller_cost: u64,
    pub safe_cost: u64,
    /// Cycles of this fetch on the worst path; `None` if the path skips it.
    pub concrete_cost: Option<u64>,
    /// Level that served the fetch on the worst path (`levels` = memory).
    pub concrete_level: Option<usize>,
    /// Set reuse distance per cache level on the worst path, where probed.
    pub reuse_distance: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsafetyWitness {
    pub mueller_cost: u64,
    pub safe_cost: u64,
    pub concrete_worst_cost: u64,
    pub worst_path: Vec<String>,
    pub focus: Vec<FocusRef>,
}

impl UnsafetyWitness {
    /// The filtered analysis under-estimates and the safe one does not.
    pub fn is_witness(&self) -> bool {
        self.mueller_cost < self.concrete_worst_cost && self.concrete_worst_cost <= self.safe_cost
    }

    pub fn focus_mueller_cost(&self) -> u64 {
        self.focus.iter().map(|f| f.mueller_cost).sum()
    }

    pub fn focus_safe_cost(&self) -> u64 {
        self.focus.iter().map(|f| f.safe_cost).sum()
    }

    pub fn focus_concrete_cost(&self) -> u64 {
        self.focus.iter().filter_map(|f| f.concrete_cost).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub program: Program,
    pub cfg: Cfg,
    pub hierarchy: HierarchyConfig,
    pub safe: HierarchyAnalysis,
    pub mueller: HierarchyAnalysis,
    pub witness: UnsafetyWitness,
}

/// Evaluates both pipelines and the exhaustive oracle on `program`. The
/// focus references are the fetches of `address` that may follow another
/// fetch of it.
pub fn evaluate_candidate(
    program: Program,
    hier: &HierarchyConfig,
    address: u64,
    max_paths: usize,
) -> Result<Counterexample, HarnessError> {
    let cfg = program.to_cfg()?;
    let model = CostModel::from_hierarchy(hier);
    let safe = analyze(&cfg, hier, AnalysisMode::Safe)?;
    let mueller = analyze(&cfg, hier, AnalysisMode::Mueller)?;
    let safe_cost: WcetContribution = wcet_contribution(&cfg, &safe, &model);
    let mueller_cost = wcet_contribution(&cfg, &mueller, &model);
    let worst = enumerate_worst(&cfg, hier, max_paths)?;

    let xs: Vec<RefId> = cfg.refs().filter(|r| r.address == address).map(|r| r.id).collect();
    let focus = xs
        .iter()
        .filter(|&&x| xs.iter().any(|&y| cfg.may_precede(y, x)))
        .map(|&id| {
            let at = worst.refs.iter().position(|&r| r == id);
            let outcome = at.map(|i| worst.outcomes[i]);
            let reuse_distance = (0..hier.levels().len())
                .map(|l| at.and_then(|i| set_reuse_distance(hier, &worst.addresses, i, l).ok()))
                .collect();
            FocusRef {
                id,
                name: cfg.ref_name(id),
                mueller: mueller.chmcs(id),
                safe: safe.chmcs(id),
                mueller_cost: mueller_cost.cost(id).worst(),
                safe_cost: safe_cost.cost(id).worst(),
                concrete_cost: outcome.map(|o| o.cycles),
                concrete_level: outcome.map(|o| o.hit_level.unwrap_or(hier.levels().len())),
                reuse_distance,
            }
        })
        .collect();
    let witness = UnsafetyWitness {
        mueller_cost: mueller_cost.total,
        safe_cost: safe_cost.total,
        concrete_worst_cost: worst.cycles,
        worst_path: worst.blocks.iter().map(|&b| cfg.block(b).name.clone()).collect(),
        focus,
    };
    Ok(Counterexample { program, cfg, hierarchy: hier.clone(), safe, mueller, witness })
}

/// Single-fetch blocks `p` -> {`left`, `right`} -> `suffix`, as a program.
/// Empty arms become direct edges.
fn diamond_program(prefix: u64, left: &[u64], right: &[u64], suffix: &[u64]) -> Result<Program, ProgramError> {
    let mut blocks = Vec::new();
    let mut edges = Vec::new();
    let add = |name: String, addr: u64, blocks: &mut Vec<BlockSpec>| {
        blocks.push(BlockSpec { id: name.clone(), addrs: vec![addr] });
        name
    };
    let fork = add("p".to_string(), prefix, &mut blocks);
    let join = "s0".to_string();
    let arm = |tag: &str, arm: &[u64], blocks: &mut Vec<BlockSpec>, edges: &mut Vec<(String, String)>| {
        let mut prev = fork.clone();
        for (i, &a) in arm.iter().enumerate() {
            let name = add(format!("{tag}{i}"), a, blocks);
            edges.push((prev, name.clone()));
            prev = name;
        }
        edges.push((prev, join.clone()));
    };
    arm("l", left, &mut blocks, &mut edges);
    arm("r", right, &mut blocks, &mut edges);
    let mut prev: Option<String> = None;
    for (i, &a) in suffix.iter().enumerate() {
        let name = add(format!("s{i}"), a, &mut blocks);
        if let Some(p) = prev {
            edges.push((p, name.clone()));
        }
        prev = Some(name);
    }
    let f =
        FunctionSpec { blocks, edges, entry: fork, exit: prev.expect("non-empty suffix"), ..FunctionSpec::default() };
    Program::single(4, f)
}

/// Roles of fetches relative to the repeated block `x` at address 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Role {
    X,
    /// Same L1 set and same L2 set as `x`.
    A,
    /// Same L1 set as `x`, other L2 set.
    B,
    /// Other L1 set.
    F,
}

const ROLES: [Role; 4] = [Role::X, Role::A, Role::B, Role::F];

/// Fresh addresses for every role, one per occurrence.
struct RoleAddresses {
    /// Address stride that keeps the L1 and L2 set index at 0.
    both: u64,
    l1: u64,
    l1_line: u64,
    distinct_b: bool,
    distinct_f: bool,
}

impl RoleAddresses {
    fn new(hier: &HierarchyConfig) -> Self {
        let span = |i: usize| hier.levels().get(i).map_or(1, |l| u64::from(l.line_size) * u64::from(l.sets));
        let l1 = span(0);
        let both = l1.max(span(1));
        let l1_line = u64::from(hier.level(0).line_size);
        RoleAddresses { both, l1, l1_line, distinct_b: both > l1, distinct_f: hier.level(0).sets > 1 }
    }

    fn available(&self, r: Role) -> bool {
        match r {
            Role::B => self.distinct_b,
            Role::F => self.distinct_f,
            _ => true,
        }
    }

    fn address(&self, r: Role, occurrence: u64) -> u64 {
        match r {
            Role::X => 0,
            Role::A => (occurrence + 1) * self.both,
            Role::B => (2 * occurrence + 1) * self.l1,
            Role::F => self.l1_line + occurrence * self.both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpace {
    /// Largest number of fetches in a candidate.
    pub max_refs: usize,
    pub stop_at_first: bool,
    pub max_paths: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace { max_refs: 9, stop_at_first: true, max_paths: DEFAULT_MAX_PATHS }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub witness: Option<Counterexample>,
    pub candidates: usize,
    /// Candidates where the safe analysis fell below the concrete worst case.
    pub violations: Vec<Program>,
    /// Candidates where the filtered analysis fell below the concrete worst case.
    pub unsafe_candidates: usize,
}

/// Enumerates programs of the shape `p -> {left, right} -> suffix` with one
/// fetch per block, `p` a single fetch, arms of at most 2 fetches and a
/// suffix of at most 4, in increasing size. Fetches take one of four roles
/// relative to a repeated block `x`; fillers never repeat. Only candidates
/// that fetch `x` at least twice, at least once after the branch, are run.
pub fn search_unsafety_witness(space: &SearchSpace, hier: &HierarchyConfig) -> Result<SearchOutcome, HarnessError> {
    let roles = RoleAddresses::new(hier);
    let alphabet: Vec<Role> = ROLES.into_iter().filter(|&r| roles.available(r)).collect();
    let mut out = SearchOutcome { witness: None, candidates: 0, violations: Vec::new(), unsafe_candidates: 0 };
    for total in 2..=space.max_refs {
        for left_len in 0..=2usize {
            for right_len in left_len..=2usize {
                if left_len + right_len == 0 || 1 + left_len + right_len >= total {
                    continue;
                }
                let suffix_len = total - 1 - left_len - right_len;
                if suffix_len > 4 {
                    continue;
                }
                let mut word = vec![0usize; total];
                'words: loop {
                    let w: Vec<Role> = word.iter().map(|&i| alphabet[i]).collect();
                    let (p, rest) = w.split_first().unwrap();
                    let (left, rest) = rest.split_at(left_len);
                    let (right, suffix) = rest.split_at(right_len);
                    let xs = w.iter().filter(|&&r| r == Role::X).count();
                    let symmetric_dup = left_len == right_len && left > right;
                    if xs >= 2 && suffix.contains(&Role::X) && !symmetric_dup {
                        out.candidates += 1;
                        let mut seen = [0u64; 4];
                        let mut addr = |r: Role| {
                            let a = roles.address(r, seen[r as usize]);
                            seen[r as usize] += 1;
                            a
                        };
                        let pa = addr(*p);
                        let la: Vec<u64> = left.iter().map(|&r| addr(r)).collect();
                        let ra: Vec<u64> = right.iter().map(|&r| addr(r)).collect();
                        let sa: Vec<u64> = suffix.iter().map(|&r| addr(r)).collect();
                        let program = diamond_program(pa, &la, &ra, &sa)?;
                        let c = evaluate_candidate(program, hier, 0, space.max_paths)?;
                        let w = &c.witness;
                        if w.safe_cost < w.concrete_worst_cost {
                            out.violations.push(c.program.clone());
                        }
                        if w.mueller_cost < w.concrete_worst_cost {
                            out.unsafe_candidates += 1;
                            if out.witness.is_none() && w.is_witness() {
                                out.witness = Some(c);
                                if space.stop_at_first {
                                    return Ok(out);
                                }
                            }
                        }
                    }
                    // next word in lexicographic order
                    for i in (0..total).rev() {
                        word[i] += 1;
                        if word[i] < alphabet.len() {
                            continue 'words;
                        }
                        word[i] = 0;
                    }
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Builds the two-level counterexample directly when L1 and L2 are 2-way
/// LRU caches with equal line sizes and L2 has at least twice the sets of L1;
/// otherwise searches for one.
///
/// The program fetches `x`, then either `b, d` or `a, f`, then `x, c, d', x`.
/// `a` and `c` share `x`'s set at both levels, `b`, `d` and `d'` only at L1,
/// `f` maps elsewhere. On the `a, f` path the second `x` hits L1 and is not
/// seen by L2, so `c` evicts `x` from L2 and the third `x` misses both
/// levels, whereas the filtered analysis counts the second `x` as an L2
/// access and keeps `x` in L2.
pub fn build_counterexample(hier: &HierarchyConfig) -> Result<Counterexample, HarnessError> {
    let levels = hier.levels();
    let direct = levels.len() == 2
        && levels.iter().all(|l| l.ways == 2)
        && levels[0].line_size == levels[1].line_size
        && levels[0].sets >= 2
        && levels[1].sets >= 2 * levels[0].sets;
    if direct {
        let line = u64::from(levels[0].line_size);
        let (s1, s2) = (u64::from(levels[0].sets), u64::from(levels[1].sets));
        let (x, f, a, c) = (0, line, s2 * line, 2 * s2 * line);
        let (b, d, d2) = (s1 * line, 3 * s1 * line, 5 * s1 * line);
        let program = diamond_program(x, &[b, d], &[a, f], &[x, c, d2, x])?;
        let candidate = evaluate_candidate(program, hier, x, DEFAULT_MAX_PATHS)?;
        if candidate.witness.is_witness() {
            return Ok(candidate);
        }
    }
    let outcome = search_unsafety_witness(&SearchSpace::default(), hier)?;
    outcome.witness.ok_or_else(|| HarnessError::NoWitness(format!("{} candidates examined", outcome.candidates)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{simulate_hierarchy, CacheLevelConfig};
    use crate::program::LoopSpec;

    fn hier() -> HierarchyConfig {
        HierarchyConfig::new(vec![CacheLevelConfig::lru(4, 2, 32, 1), CacheLevelConfig::lru(8, 2, 32, 10)], 100)
            .unwrap()
    }

    #[test]
    fn straight_line_has_one_path() {
        let p = diamond_program(0, &[], &[64], &[128, 0]).unwrap();
        let cfg = p.to_cfg().unwrap();
        let w = enumerate_worst(&cfg, &hier(), 10).unwrap();
        assert_eq!(w.paths, 2);
        let sim = simulate_hierarchy(&hier(), &[0, 64, 128, 0]);
        assert_eq!(w.cycles, sim.total_cycles);
    }

    #[test]
    fn identical_arms_tie_to_first_path() {
        let p = diamond_program(0, &[64], &[64], &[128]).unwrap();
        let cfg = p.to_cfg().unwrap();
        let mut costs = Vec::new();
        for_each_path(&cfg, &hier(), 10, |r| costs.push(r.cycles)).unwrap();
        assert_eq!(costs.len(), 2);
        assert_eq!(costs[0], costs[1]);
        let w = enumerate_worst(&cfg, &hier(), 10).unwrap();
        assert_eq!(w.blocks, vec![0, 1, 3]);
    }

    #[test]
    fn loop_bound_limits_header_executions() {
        let f = FunctionSpec {
            blocks: vec![
                BlockSpec { id: "in".into(), addrs: vec![64] },
                BlockSpec { id: "h".into(), addrs: vec![0] },
                BlockSpec { id: "x".into(), addrs: vec![4] },
            ],
            edges: vec![("in".into(), "h".into()), ("h".into(), "h".into()), ("h".into(), "x".into())],
            entry: "in".into(),
            exit: "x".into(),
            loops: vec![LoopSpec { header: "h".into(), members: vec!["h".into()], bound: 3 }],
            ..FunctionSpec::default()
        };
        let cfg = Program::single(4, f).unwrap().to_cfg().unwrap();
        let mut lens = Vec::new();
        for_each_path(&cfg, &hier(), 10, |r| lens.push(r.blocks.len())).unwrap();
        assert_eq!(lens, vec![5, 4, 3]);
        assert_eq!(for_each_path(&cfg, &hier(), 2, |_| ()), Err(HarnessError::PathExplosion(2)));
    }

    #[test]
    fn probes_follow_misses() {
        let p = diamond_program(0, &[128, 384], &[256, 32], &[0, 512, 640, 0]).unwrap();
        let w = enumerate_worst(&p.to_cfg().unwrap(), &hier(), 10).unwrap();
        assert_eq!(w.levels[1].probes, w.levels[0].misses);
    }
}
