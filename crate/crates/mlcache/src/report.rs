//! Versioned JSON reports and their text renderings.
//!
//! Text is always rendered from the report structs, never from the analysis
//! results directly, so both formats carry the same numbers.

use std::fmt::Write as _;

use mlcache_core::{
    Cac, Cfg, Chmc, Counterexample, HierarchyAnalysis, HierarchyConfig, LevelCounts, SimulationResult,
    WcetContribution, WorstCase,
};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::formats::{HierarchyFile, ProgramFile};
use crate::suites::{Check, Observations, SweepReport};

pub const ANALYSIS_SCHEMA: &str = "mlcache.analysis/1";
pub const SIMULATION_SCHEMA: &str = "mlcache.simulation/1";
pub const VERIFY_SCHEMA: &str = "mlcache.verify/1";
pub const WITNESS_SCHEMA: &str = "mlcache.witness/1";

/// Map serialized in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordered<T>(pub Vec<(String, T)>);

impl<T: Serialize> Serialize for Ordered<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

/// Miss latency of an L1-only system: everything below L1 is paid on a miss.
pub fn l1_only_miss_latency(hier: &HierarchyConfig) -> u64 {
    hier.levels()[1..].iter().map(|l| l.hit_latency).sum::<u64>() + hier.memory_latency()
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub sets: u32,
    pub ways: u32,
    pub line: u32,
    pub cac: Ordered<usize>,
    pub chmc: Ordered<usize>,
    pub iterations: usize,
    pub iteration_budget: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub cac: String,
    pub chmc: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceReport {
    pub address: u64,
    pub levels: Vec<ClassReport>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RefCost {
    pub cost_first: u64,
    pub cost_next: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub per_reference: Ordered<RefCost>,
    pub total_cycles: u64,
    pub l1_only_cycles: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasuredReport {
    pub worst_cycles: u64,
    pub worst_path: Vec<String>,
    pub paths: usize,
    pub levels: Vec<LevelCountsReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema: &'static str,
    pub mode: &'static str,
    pub hierarchy: HierarchyFile,
    pub levels: Vec<LevelReport>,
    pub references: Ordered<ReferenceReport>,
    pub cost: CostReport,
    /// Exhaustive worst path, absent when the path cap was hit.
    pub measured: Option<MeasuredReport>,
}

impl AnalysisReport {
    pub fn new(
        cfg: &Cfg,
        hier: &HierarchyConfig,
        analysis: &HierarchyAnalysis,
        cost: &WcetContribution,
        l1_only: u64,
        worst: Option<&WorstCase>,
    ) -> Self {
        let levels = analysis
            .levels
            .iter()
            .map(|l| {
                let c = hier.level(l.level);
                LevelReport {
                    level: l.level + 1,
                    sets: c.sets,
                    ways: c.ways,
                    line: c.line_size,
                    cac: Ordered(Cac::ALL.iter().map(|&k| (k.short().to_string(), l.summary.cac(k))).collect()),
                    chmc: Ordered(Chmc::ALL.iter().map(|&k| (k.short().to_string(), l.summary.chmc(k))).collect()),
                    iterations: l.max_iterations(),
                    iteration_budget: l.budget,
                }
            })
            .collect();
        let references = cfg
            .refs()
            .map(|r| {
                let levels = analysis
                    .levels
                    .iter()
                    .map(|l| {
                        let c = l.class(r.id);
                        ClassReport { cac: c.cac.short().into(), chmc: c.chmc.short().into() }
                    })
                    .collect();
                (cfg.ref_name(r.id), ReferenceReport { address: r.address, levels })
            })
            .collect();
        let per_reference = cfg
            .refs()
            .map(|r| {
                let c = cost.cost(r.id);
                (cfg.ref_name(r.id), RefCost { cost_first: c.first, cost_next: c.next })
            })
            .collect();
        AnalysisReport {
            schema: ANALYSIS_SCHEMA,
            mode: match analysis.mode {
                mlcache_core::AnalysisMode::Safe => "safe",
                mlcache_core::AnalysisMode::Mueller => "mueller",
            },
            hierarchy: HierarchyFile::from_config(hier),
            levels,
            references: Ordered(references),
            cost: CostReport {
                per_reference: Ordered(per_reference),
                total_cycles: cost.total,
                l1_only_cycles: l1_only,
            },
            measured: worst.map(|w| MeasuredReport {
                worst_cycles: w.cycles,
                worst_path: w.blocks.iter().map(|&b| cfg.block(b).name.clone()).collect(),
                paths: w.paths,
                levels: LevelCountsReport::all(&w.levels, w.outcomes.len()),
            }),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode);
        for l in &self.levels {
            let _ = writeln!(
                s,
                "L{} ({} sets x {} ways x {} B): {} | {} | {} of {} solver visits",
                l.level,
                l.sets,
                l.ways,
                l.line,
                counts(&l.chmc),
                counts(&l.cac),
                l.iterations,
                l.iteration_budget
            );
        }
        let _ = writeln!(s);
        let mut header = format!("{:<16} {:>10}", "reference", "address");
        for l in &self.levels {
            let _ = write!(header, " {:>6}", format!("L{}", l.level));
        }
        let _ = writeln!(s, "{header} {:>8} {:>8}", "first", "next");
        for ((name, r), (_, c)) in self.references.0.iter().zip(&self.cost.per_reference.0) {
            let _ = write!(s, "{name:<16} {:>10}", format!("{:#x}", r.address));
            for class in &r.levels {
                let _ = write!(s, " {:>6}", format!("{}/{}", class.cac, class.chmc));
            }
            let _ = writeln!(s, " {:>8} {:>8}", c.cost_first, c.cost_next);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "cache contribution to WCET, full hierarchy: {} cycles", self.cost.total_cycles);
        let _ = writeln!(s, "cache contribution to WCET, L1 only: {} cycles", self.cost.l1_only_cycles);
        match &self.measured {
            Some(m) => {
                let _ = writeln!(
                    s,
                    "measured worst path: {} cycles over {} paths ({})",
                    m.worst_cycles,
                    m.paths,
                    m.worst_path.join(" ")
                );
                for l in &m.levels {
                    let _ = writeln!(s, "  {}", l.to_text());
                }
            }
            None => {
                let _ = writeln!(s, "measured worst path: not enumerated (path cap reached)");
            }
        }
        s
    }
}

fn counts(m: &Ordered<usize>) -> String {
    m.0.iter().map(|(k, v)| format!("{k} {v}")).collect::<Vec<_>>().join("  ")
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelCountsReport {
    /// 1-based cache level; `None` for main memory.
    pub level: Option<usize>,
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
}

impl LevelCountsReport {
    pub fn all(levels: &[LevelCounts], accesses: usize) -> Vec<Self> {
        let mut out: Vec<Self> = levels
            .iter()
            .enumerate()
            .map(|(i, c)| LevelCountsReport { level: Some(i + 1), accesses: c.probes, hits: c.hits, misses: c.misses })
            .collect();
        let to_memory = levels.last().map_or(accesses as u64, |c| c.misses);
        out.push(LevelCountsReport { level: None, accesses: to_memory, hits: to_memory, misses: 0 });
        out
    }

    pub fn to_text(&self) -> String {
        match self.level {
            Some(l) => format!("L{l}: {} accesses, {} hits, {} misses", self.accesses, self.hits, self.misses),
            None => format!("memory: {} accesses", self.accesses),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub schema: &'static str,
    pub hierarchy: HierarchyFile,
    pub accesses: usize,
    pub levels: Vec<LevelCountsReport>,
    pub total_cycles: u64,
    /// Block names when a program path was simulated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<String>>,
}

impl SimulationReport {
    pub fn new(hier: &HierarchyConfig, sim: &SimulationResult, path: Option<Vec<String>>) -> Self {
        SimulationReport {
            schema: SIMULATION_SCHEMA,
            hierarchy: HierarchyFile::from_config(hier),
            accesses: sim.outcomes.len(),
            levels: LevelCountsReport::all(&sim.levels, sim.outcomes.len()),
            total_cycles: sim.total_cycles,
            path,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.path {
            let _ = writeln!(s, "path: {}", p.join(" "));
        }
        let _ = writeln!(s, "accesses: {}", self.accesses);
        for l in &self.levels {
            let _ = writeln!(s, "{}", l.to_text());
        }
        let _ = writeln!(s, "total cycles: {}", self.total_cycles);
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSection {
    pub programs: usize,
    pub hierarchies: usize,
    pub runs: u64,
    pub checks: Vec<Check>,
    pub observations: Observations,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotonicity: Option<Vec<Check>>,
    pub sweep: SweepSection,
    pub passed: bool,
}

impl VerifyReport {
    pub fn new(
        seed: u64,
        monotonicity: Option<Vec<Check>>,
        programs: usize,
        hierarchies: usize,
        sweep: SweepReport,
    ) -> Self {
        let passed = monotonicity.iter().flatten().all(Check::passed) && sweep.passed();
        VerifyReport {
            schema: VERIFY_SCHEMA,
            seed,
            monotonicity,
            sweep: SweepSection {
                programs,
                hierarchies,
                runs: sweep.runs,
                checks: sweep.checks,
                observations: sweep.observations,
            },
            passed,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed {}", self.seed);
        let line = |s: &mut String, c: &Check| {
            let verdict = if c.passed() { "ok  " } else { "FAIL" };
            let _ = writeln!(s, "{verdict} {:<72} {:>9} cases {:>5} failures", c.name, c.cases, c.failures);
            if let Some(e) = &c.example {
                let _ = writeln!(s, "     smallest failing case: {e}");
            }
        };
        if let Some(m) = &self.monotonicity {
            let _ = writeln!(s, "domain properties:");
            for c in m {
                line(&mut s, c);
            }
        }
        let sw = &self.sweep;
        let _ = writeln!(
            s,
            "soundness sweep: {} programs x {} hierarchies = {} runs",
            sw.programs, sw.hierarchies, sw.runs
        );
        for c in &sw.checks {
            line(&mut s, c);
        }
        let o = &sw.observations;
        let _ = writeln!(s, "observed:");
        let _ = writeln!(s, "  enumerated paths: {}", o.paths);
        let _ = writeln!(s, "  filtered cost above safe cost: {} runs", o.mueller_above_safe);
        let _ = writeln!(s, "  filtered cost below measured worst: {} runs", o.mueller_below_concrete);
        let _ = writeln!(
            s,
            "  solves above blocks*(ways+2)*widest set: {} of {}",
            o.above_simple_iteration_formula, o.solves
        );
        let _ = writeln!(s, "  largest share of the iteration budget used: {:.3}", o.max_budget_use);
        let _ = writeln!(s, "{}", if self.passed { "all checks passed" } else { "SOUNDNESS CHECKS FAILED" });
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FocusReport {
    pub reference: String,
    pub address: u64,
    pub mueller: Vec<String>,
    pub safe: Vec<String>,
    pub mueller_cost: u64,
    pub safe_cost: u64,
    pub concrete_cost: Option<u64>,
    /// 1-based level that served the fetch on the worst path; `None` for
    /// memory or when the fetch is not on that path.
    pub concrete_hit_level: Option<usize>,
    pub reuse_distance: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub schema: &'static str,
    pub program: ProgramFile,
    pub hierarchy: HierarchyFile,
    pub mueller_cost: u64,
    pub safe_cost: u64,
    pub concrete_worst_cost: u64,
    pub worst_path: Vec<String>,
    pub focus: Vec<FocusReport>,
    pub focus_mueller_cost: u64,
    pub focus_concrete_cost: u64,
    pub focus_safe_cost: u64,
}

impl WitnessReport {
    pub fn new(c: &Counterexample) -> Self {
        let w = &c.witness;
        let names = |v: &[Chmc]| v.iter().map(|x| x.short().to_string()).collect();
        let memory = c.hierarchy.levels().len();
        WitnessReport {
            schema: WITNESS_SCHEMA,
            program: ProgramFile::from_program(&c.program),
            hierarchy: HierarchyFile::from_config(&c.hierarchy),
            mueller_cost: w.mueller_cost,
            safe_cost: w.safe_cost,
            concrete_worst_cost: w.concrete_worst_cost,
            worst_path: w.worst_path.clone(),
            focus: w
                .focus
                .iter()
                .map(|f| FocusReport {
                    reference: f.name.clone(),
                    address: c.cfg.instruction(f.id).address,
                    mueller: names(&f.mueller),
                    safe: names(&f.safe),
                    mueller_cost: f.mueller_cost,
                    safe_cost: f.safe_cost,
                    concrete_cost: f.concrete_cost,
                    concrete_hit_level: f.concrete_level.filter(|&l| l < memory).map(|l| l + 1),
                    reuse_distance: f.reuse_distance.clone(),
                })
                .collect(),
            focus_mueller_cost: w.focus_mueller_cost(),
            focus_concrete_cost: w.focus_concrete_cost(),
            focus_safe_cost: w.focus_safe_cost(),
        }
    }

    pub fn is_witness(&self) -> bool {
        self.mueller_cost < self.concrete_worst_cost && self.concrete_worst_cost <= self.safe_cost
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "worst path: {}", self.worst_path.join(" "));
        let levels = self.hierarchy.levels.len();
        for f in &self.focus {
            let served = match f.concrete_hit_level {
                Some(l) => format!("hit in L{l}"),
                None if f.concrete_cost.is_some() => "served by memory".to_string(),
                None => "not on the worst path".to_string(),
            };
            let _ = writeln!(
                s,
                "{} at {:#x}: filtered {} ({} cycles), safe {} ({} cycles), worst path {} ({} cycles)",
                f.reference,
                f.address,
                f.mueller.join("/"),
                f.mueller_cost,
                f.safe.join("/"),
                f.safe_cost,
                served,
                f.concrete_cost.map_or("-".to_string(), |c| c.to_string())
            );
        }
        let _ = writeln!(s, "{}", summarize_focus(&self.focus, levels));
        let _ = writeln!(
            s,
            "repeated reference: filtered {} < worst path {} <= safe {} cycles",
            self.focus_mueller_cost, self.focus_concrete_cost, self.focus_safe_cost
        );
        let _ = writeln!(
            s,
            "whole program: filtered {}, worst path {}, safe {} cycles",
            self.mueller_cost, self.concrete_worst_cost, self.safe_cost
        );
        let verdict = if self.is_witness() {
            "the filtered analysis under-estimates the worst path"
        } else {
            "no under-estimation"
        };
        let _ = writeln!(s, "{verdict}");
        s
    }
}

/// "filtered: 2 misses in L1 + 2 hits in L2" style summary of the focus
/// fetches, as predicted by the filtered analysis and as seen on the worst
/// path.
pub fn summarize_focus(focus: &[FocusReport], levels: usize) -> String {
    let mut predicted_miss = vec![0usize; levels];
    let mut predicted_hit = vec![0usize; levels];
    for f in focus {
        for (l, c) in f.mueller.iter().enumerate() {
            if c == "AH" {
                predicted_hit[l] += 1;
                break;
            }
            predicted_miss[l] += 1;
        }
    }
    let mut seen_miss = vec![0usize; levels];
    let mut seen_hit = vec![0usize; levels];
    for f in focus.iter().filter(|f| f.concrete_cost.is_some()) {
        let served = f.concrete_hit_level.map_or(levels, |l| l - 1);
        for m in seen_miss.iter_mut().take(served) {
            *m += 1;
        }
        if served < levels {
            seen_hit[served] += 1;
        }
    }
    let phrase = |hit: &[usize], miss: &[usize]| {
        let mut parts = Vec::new();
        for l in 0..levels {
            if hit[l] > 0 {
                parts.push(format!("{} hit{} in L{}", hit[l], if hit[l] == 1 { "" } else { "s" }, l + 1));
            }
            if miss[l] > 0 {
                parts.push(format!("{} miss{} in L{}", miss[l], if miss[l] == 1 { "" } else { "es" }, l + 1));
            }
        }
        parts.join(" + ")
    };
    format!(
        "filtered analysis predicts {}; worst path performs {}",
        phrase(&predicted_hit, &predicted_miss),
        phrase(&seen_hit, &seen_miss)
    )
}
