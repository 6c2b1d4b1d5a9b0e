//! Randomized property suites and the exhaustive soundness sweep.
//!
//! Every check counts its cases and failures and keeps the smallest failing
//! case it saw, so a report stays readable when something breaks.

use std::collections::{BTreeMap, BTreeSet};

use mlcache_core::analysis::{analyze, AnalysisMode, HierarchyAnalysis};
use mlcache_core::harness::for_each_path;
use mlcache_core::{
    l1_only_contribution, solve_with_order, update_m, wcet_contribution, AbstractCacheState, AnalysisError, Cac, Cfg,
    Chmc, CostModel, Flavor, Geometry, HierarchyConfig, HierarchyState, Line, Program, RefId, SolverError,
    WorklistOrder,
};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use crate::gen::{random_hierarchy, random_program, ProgramShape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>) -> Self {
        Check { name: name.into(), cases: 0, failures: 0, example: None }
    }

    pub fn record(&mut self, ok: bool, example: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            let e = example();
            if self.example.as_ref().is_none_or(|old| e.len() < old.len()) {
                self.example = Some(e);
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Checks keyed by name, in insertion order of first use.
#[derive(Debug, Clone, Default)]
pub struct Checks {
    order: Vec<String>,
    by_name: BTreeMap<String, Check>,
}

impl Checks {
    pub fn get(&mut self, name: &str) -> &mut Check {
        if !self.by_name.contains_key(name) {
            self.order.push(name.to_string());
            self.by_name.insert(name.to_string(), Check::new(name));
        }
        self.by_name.get_mut(name).unwrap()
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.by_name.get(name)
    }

    pub fn into_vec(mut self) -> Vec<Check> {
        self.order.iter().map(|n| self.by_name.remove(n).unwrap()).collect()
    }
}

pub const UPDATE_MONOTONE: &str = "update_m preserves the order";
pub const JOIN_MONOTONE: &str = "join preserves the order";
pub const JOIN_UPPER_BOUND: &str = "join is an upper bound";
pub const JOIN_IDEMPOTENT: &str = "join is idempotent";
pub const JOIN_COMMUTATIVE: &str = "join is commutative";
pub const JOIN_ASSOCIATIVE: &str = "join is associative";

pub fn flavor_check(name: &str, flavor: Flavor) -> String {
    format!("{name} ({})", flavor.name())
}

fn random_geometry<R: Rng>(rng: &mut R) -> Geometry {
    Geometry { sets: *[1, 2].choose(rng).unwrap(), ways: rng.random_range(1..=4) }
}

/// Blocks drawn from a small universe so that states overlap often.
fn universe(g: Geometry) -> u64 {
    u64::from(g.sets) * (u64::from(g.ways) + 2)
}

fn arbitrary_state<R: Rng>(rng: &mut R, flavor: Flavor, g: Geometry) -> AbstractCacheState {
    let n = universe(g);
    let blocks: Vec<u64> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
    let lines: Vec<(u64, Line)> = blocks
        .iter()
        .map(|&b| {
            let mut line = Line::with_age(rng.random_range(1..=g.max_age(flavor)));
            if flavor == Flavor::Persistence {
                line.on_all_paths = rng.random_bool(0.5);
                line.accessed_with = blocks
                    .iter()
                    .copied()
                    .filter(|&c| c != b && g.set_of(c) == g.set_of(b) && rng.random_bool(0.5))
                    .collect();
            }
            (b, line)
        })
        .collect();
    AbstractCacheState::from_lines(flavor, g, lines).expect("generated lines are valid")
}

/// State produced by running random accesses and merges from the empty state.
fn reachable_state<R: Rng>(rng: &mut R, flavor: Flavor, g: Geometry, depth: u32) -> AbstractCacheState {
    let n = universe(g);
    let mut s = AbstractCacheState::empty(flavor, g);
    for _ in 0..rng.random_range(0..8) {
        s = if depth > 0 && rng.random_bool(0.2) {
            s.join(&reachable_state(rng, flavor, g, depth - 1)).unwrap()
        } else {
            let cac = *Cac::ALL.choose(rng).unwrap();
            update_m(&s, rng.random_range(0..n), cac)
        };
    }
    s
}

fn random_state<R: Rng>(rng: &mut R, flavor: Flavor, g: Geometry) -> AbstractCacheState {
    if rng.random_bool(0.5) {
        arbitrary_state(rng, flavor, g)
    } else {
        reachable_state(rng, flavor, g, 2)
    }
}

fn show(s: &AbstractCacheState) -> String {
    let d = s.dump();
    if d.is_empty() {
        "{}".to_string()
    } else {
        d.trim_end().replace('\n', "; ")
    }
}

/// `cases` random ordered pairs per flavor: `update_m` (for each access
/// classification) and `join` must preserve the order, and `join` must be a
/// semilattice operation.
pub fn monotonicity_suite<R: Rng>(rng: &mut R, cases: usize) -> Vec<Check> {
    let mut checks = Checks::default();
    for flavor in Flavor::ALL {
        for _ in 0..cases {
            let g = random_geometry(rng);
            let a = random_state(rng, flavor, g);
            let c = random_state(rng, flavor, g);
            let d = random_state(rng, flavor, g);
            let mut b = a.join(&c).unwrap();
            let mut a = a;
            // apply a common random prefix so pairs are not all joins
            for _ in 0..rng.random_range(0..3) {
                let r = rng.random_range(0..universe(g));
                let cac = *Cac::ALL.choose(rng).unwrap();
                a = update_m(&a, r, cac);
                b = update_m(&b, r, cac);
            }
            let pair = || format!("a = [{}], b = [{}]", show(&a), show(&b));
            if !a.leq(&b).unwrap() {
                checks.get(&flavor_check("ordered pair generation", flavor)).record(false, pair);
                continue;
            }
            let r = rng.random_range(0..universe(g));
            for cac in Cac::ALL {
                let (ua, ub) = (update_m(&a, r, cac), update_m(&b, r, cac));
                checks
                    .get(&flavor_check(UPDATE_MONOTONE, flavor))
                    .record(ua.leq(&ub).unwrap(), || format!("{}, access {r} ({cac})", pair()));
            }
            let (ja, jb) = (a.join(&d).unwrap(), b.join(&d).unwrap());
            checks
                .get(&flavor_check(JOIN_MONOTONE, flavor))
                .record(ja.leq(&jb).unwrap(), || format!("{}, d = [{}]", pair(), show(&d)));
            let ab = a.join(&b).unwrap();
            checks
                .get(&flavor_check(JOIN_UPPER_BOUND, flavor))
                .record(a.leq(&ab).unwrap() && b.leq(&ab).unwrap(), pair);
            checks.get(&flavor_check(JOIN_IDEMPOTENT, flavor)).record(a.join(&a).unwrap() == a, pair);
            checks
                .get(&flavor_check(JOIN_COMMUTATIVE, flavor))
                .record(c.join(&d).unwrap() == d.join(&c).unwrap(), || {
                    format!("c = [{}], d = [{}]", show(&c), show(&d))
                });
            checks
                .get(&flavor_check(JOIN_ASSOCIATIVE, flavor))
                .record(a.join(&c).unwrap().join(&d).unwrap() == a.join(&c.join(&d).unwrap()).unwrap(), || {
                    format!("a = [{}], c = [{}], d = [{}]", show(&a), show(&c), show(&d))
                });
        }
    }
    checks.into_vec()
}

pub const AGGREGATE_BOUND: &str = "safe contribution >= worst concrete cost";
pub const ALWAYS_HIT: &str = "always-hit references never miss";
pub const ALWAYS_MISS: &str = "references absent from May never hit";
pub const FIRST_MISS: &str = "first-miss references miss at most once per path";
pub const ACCESS_CLASS: &str = "N references never reach the level, A references always do";
pub const MUST_STATE: &str = "cached ages within Must bounds";
pub const MAY_STATE: &str = "cached ages within May bounds";
pub const PERSISTENCE_STATE: &str = "loaded blocks within Persistence bounds";
pub const PROBES_FOLLOW_MISSES: &str = "probes at L+1 equal misses at L";
pub const HIERARCHY_BENEFIT: &str = "L1+L2 contribution <= L1-only contribution";
pub const ITERATION_BUDGET: &str = "fixpoints within the iteration budget";
pub const ORDER_INDEPENDENT: &str = "fixpoint independent of worklist order";
pub const PATH_CAP: &str = "path enumeration within the cap";

/// Facts that are reported but not required to hold.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Observations {
    /// Runs where the filtered analysis charged more than the safe one.
    pub mueller_above_safe: u64,
    /// Runs where the filtered analysis charged less than the worst path.
    pub mueller_below_concrete: u64,
    /// Solves that needed more visits than blocks * (ways + 2) * (most
    /// distinct blocks in one set).
    pub above_simple_iteration_formula: u64,
    pub solves: u64,
    /// Largest fraction of the iteration budget used by any solve.
    pub max_budget_use: f64,
    pub paths: u64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub programs: usize,
    pub hierarchies: usize,
    pub max_paths: usize,
    pub shape: ProgramShape,
    /// Re-solve with every worklist order on every n-th run.
    pub order_check_every: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            programs: 1000,
            hierarchies: 5,
            max_paths: mlcache_core::harness::DEFAULT_MAX_PATHS,
            shape: ProgramShape::default(),
            order_check_every: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: u64,
    pub checks: Vec<Check>,
    pub observations: Observations,
}

impl SweepReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

pub fn soundness_sweep<R: Rng>(rng: &mut R, config: &SweepConfig) -> SweepReport {
    let mut checks = Checks::default();
    let mut obs = Observations::default();
    let mut runs = 0u64;
    for _ in 0..config.programs {
        let program = random_program(rng, config.shape);
        let cfg = program.to_cfg().expect("generated programs are valid");
        for _ in 0..config.hierarchies {
            let hier = random_hierarchy(rng);
            let order_check = config.order_check_every > 0 && runs.is_multiple_of(config.order_check_every as u64);
            check_run(&program, &cfg, &hier, config.max_paths, order_check, &mut checks, &mut obs);
            runs += 1;
        }
    }
    SweepReport { runs, checks: checks.into_vec(), observations: obs }
}

fn describe(program: &Program, hier: &HierarchyConfig) -> String {
    format!(
        "program {} / hierarchy {}",
        serde_json::to_string(&crate::formats::ProgramFile::from_program(program)).unwrap(),
        serde_json::to_string(&crate::formats::HierarchyFile::from_config(hier)).unwrap()
    )
}

/// Runs every check of the sweep on one program and hierarchy.
pub fn check_run(
    program: &Program,
    cfg: &Cfg,
    hier: &HierarchyConfig,
    max_paths: usize,
    order_check: bool,
    checks: &mut Checks,
    obs: &mut Observations,
) {
    let what = || describe(program, hier);
    let safe = match analyze(cfg, hier, AnalysisMode::Safe) {
        Ok(a) => a,
        Err(AnalysisError::Solver(SolverError::IterationBudgetExceeded { .. })) => {
            checks.get(ITERATION_BUDGET).record(false, what);
            return;
        }
        Err(e) => panic!("analysis failed on generated input: {e}"),
    };
    checks.get(ITERATION_BUDGET).record(true, what);
    record_iterations(cfg, &safe, obs);

    let model = CostModel::from_hierarchy(hier);
    let cost = wcet_contribution(cfg, &safe, &model);
    let l1_only = l1_only_contribution(
        cfg,
        &safe.levels[0],
        hier.level(0).hit_latency,
        crate::report::l1_only_miss_latency(hier),
    );
    checks.get(HIERARCHY_BENEFIT).record(cost.total <= l1_only, || format!("{} > {l1_only}: {}", cost.total, what()));
    let mueller = analyze(cfg, hier, AnalysisMode::Mueller).ok().map(|m| wcet_contribution(cfg, &m, &model).total);

    let mut worst = 0u64;
    let mut path_checks = PathChecker::new(cfg, hier, &safe);
    let result = for_each_path(cfg, hier, max_paths, |run| {
        worst = worst.max(run.cycles);
        path_checks.check(run.refs, run.addresses);
    });
    checks.get(PATH_CAP).record(result.is_ok(), what);
    let Ok(paths) = result else { return };
    obs.paths += paths as u64;
    path_checks.finish(checks, &what);

    checks.get(AGGREGATE_BOUND).record(cost.total >= worst, || format!("{} < {worst}: {}", cost.total, what()));
    if let Some(m) = mueller {
        obs.mueller_above_safe += u64::from(m > cost.total);
        obs.mueller_below_concrete += u64::from(m < worst);
    }
    if order_check {
        check_orders(cfg, &safe, checks, &what);
    }
}

fn record_iterations(cfg: &Cfg, a: &HierarchyAnalysis, obs: &mut Observations) {
    for level in &a.levels {
        let mut per_set: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
        for r in level.refs.iter().flatten() {
            per_set.entry(r.block.set).or_default().insert(r.block.number);
        }
        let widest = per_set.values().map(BTreeSet::len).max().unwrap_or(0);
        let simple = cfg.blocks().len() * (level.geometry.ways as usize + 2) * widest;
        for f in Flavor::ALL {
            let it = level.result(f).iterations;
            obs.solves += 1;
            obs.above_simple_iteration_formula += u64::from(it > simple);
            obs.max_budget_use = obs.max_budget_use.max(it as f64 / level.budget as f64);
        }
    }
}

fn check_orders(cfg: &Cfg, a: &HierarchyAnalysis, checks: &mut Checks, what: &dyn Fn() -> String) {
    for level in &a.levels {
        let transfer = |r: RefId, s: &AbstractCacheState| {
            let c = level.class(r);
            update_m(s, c.block.number, c.cac)
        };
        for f in Flavor::ALL {
            let reference = level.result(f);
            let initial = AbstractCacheState::empty(f, level.geometry);
            for order in WorklistOrder::ALL {
                let other = solve_with_order(cfg, &initial, transfer, level.budget, order);
                let same = other.is_ok_and(|o| o.block_in == reference.block_in && o.ref_pre == reference.ref_pre);
                checks.get(ORDER_INDEPENDENT).record(same, || format!("{order:?} {}: {}", f.name(), what()));
            }
        }
    }
}

/// Compares every concrete access of every path with the classifications
/// and the abstract pre-states of its reference.
struct PathChecker<'a> {
    cfg: &'a Cfg,
    hier: &'a HierarchyConfig,
    a: &'a HierarchyAnalysis,
    fails: BTreeMap<&'static str, (u64, u64, String)>,
}

impl<'a> PathChecker<'a> {
    fn new(cfg: &'a Cfg, hier: &'a HierarchyConfig, a: &'a HierarchyAnalysis) -> Self {
        PathChecker { cfg, hier, a, fails: BTreeMap::new() }
    }

    fn note(&mut self, name: &'static str, ok: bool, detail: impl FnOnce() -> String) {
        let e = self.fails.entry(name).or_insert((0, 0, String::new()));
        e.0 += 1;
        if !ok {
            e.1 += 1;
            if e.2.is_empty() {
                e.2 = detail();
            }
        }
    }

    fn check(&mut self, refs: &[RefId], addresses: &[u64]) {
        let levels = self.hier.levels().len();
        let mut state = HierarchyState::cold(self.hier);
        let mut loaded: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); levels];
        let mut fm_misses: BTreeMap<(usize, RefId), u32> = BTreeMap::new();
        let mut probe_counts = vec![0u64; levels + 1];
        let mut miss_counts = vec![0u64; levels];
        for (&r, &addr) in refs.iter().zip(addresses) {
            for (l, seen) in loaded.iter().enumerate() {
                self.check_states(l, r, &state, seen);
            }
            let outcome = state.access(addr);
            let name = || self.cfg.ref_name(r);
            for l in 0..levels {
                let class = *self.a.class(l, r);
                let probed = outcome.probes(l);
                let hit = outcome.hits(l);
                if probed {
                    probe_counts[l] += 1;
                    miss_counts[l] += u64::from(!hit);
                    loaded[l].insert(class.block.number);
                }
                match class.cac {
                    Cac::Never => self.note(ACCESS_CLASS, !probed, || format!("{} reached L{}", name(), l + 1)),
                    Cac::Always => self.note(ACCESS_CLASS, probed, || format!("{} skipped L{}", name(), l + 1)),
                    Cac::Uncertain => {}
                }
                if !probed {
                    continue;
                }
                match class.chmc {
                    Chmc::AlwaysHit => self.note(ALWAYS_HIT, hit, || format!("{} missed L{}", name(), l + 1)),
                    Chmc::AlwaysMiss => self.note(ALWAYS_MISS, !hit, || format!("{} hit L{}", name(), l + 1)),
                    Chmc::FirstMiss if !hit => {
                        *fm_misses.entry((l, r)).or_default() += 1;
                    }
                    _ => {}
                }
            }
            if outcome.hit_level.is_none() {
                probe_counts[levels] += 1;
            }
        }
        for l in 0..levels {
            for r in self.cfg.refs().filter(|r| self.a.class(l, r.id).chmc == Chmc::FirstMiss) {
                let n = fm_misses.get(&(l, r.id)).copied().unwrap_or(0);
                self.note(FIRST_MISS, n <= 1, || format!("{} missed L{} {n} times", self.cfg.ref_name(r.id), l + 1));
            }
            let ok = probe_counts[l + 1] == miss_counts[l];
            self.note(PROBES_FOLLOW_MISSES, ok, || format!("level {}", l + 1));
        }
    }

    fn check_states(&mut self, l: usize, r: RefId, state: &HierarchyState, loaded: &BTreeSet<u64>) {
        let level = &self.a.levels[l];
        let concrete = state.level(l);
        let name = || self.cfg.ref_name(r);
        let must = level.must.pre(r);
        let ok = must.lines().all(|(b, line)| concrete.position(b).is_some_and(|p| p <= line.age as usize));
        self.note(MUST_STATE, ok, || format!("before {} at L{}: Must [{}]", name(), l + 1, show(must)));
        let may = level.may.pre(r);
        let sets = self.hier.level(l).sets;
        let ok = (0..sets)
            .all(|s| concrete.set(s).iter().enumerate().all(|(i, &b)| may.age(b).is_some_and(|a| a as usize <= i + 1)));
        self.note(MAY_STATE, ok, || format!("before {} at L{}: May [{}]", name(), l + 1, show(may)));
        let pers = level.persistence.pre(r);
        let ways = level.geometry.ways;
        let ok = pers.lines().all(|(b, line)| {
            line.age > ways || !loaded.contains(&b) || concrete.position(b).is_some_and(|p| p <= line.age as usize)
        });
        self.note(PERSISTENCE_STATE, ok, || format!("before {} at L{}: Persistence [{}]", name(), l + 1, show(pers)));
    }

    fn finish(self, checks: &mut Checks, what: &dyn Fn() -> String) {
        for (name, (cases, failures, detail)) in self.fails {
            let c = checks.get(name);
            if failures == 0 {
                c.cases += cases;
            } else {
                c.record(false, || format!("{detail}: {}", what()));
                c.cases += cases - 1;
                c.failures += failures - 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn check_keeps_smallest_example() {
        let mut c = Check::new("x");
        c.record(true, || unreachable!());
        c.record(false, || "longer example".into());
        c.record(false, || "short".into());
        assert_eq!((c.cases, c.failures), (3, 2));
        assert_eq!(c.example.as_deref(), Some("short"));
    }

    #[test]
    fn small_suites_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in monotonicity_suite(&mut rng, 300) {
            assert!(c.passed(), "{c:?}");
        }
        let report = soundness_sweep(&mut rng, &SweepConfig { programs: 30, hierarchies: 2, ..Default::default() });
        for c in &report.checks {
            assert!(c.passed(), "{c:?}");
        }
        assert!(report.check(AGGREGATE_BOUND).unwrap().cases == 60);
    }
}
