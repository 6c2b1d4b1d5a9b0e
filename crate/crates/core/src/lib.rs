//! Static analysis of multi-level set-associative instruction caches.
//!
//! The crate classifies every instruction fetch of a program, at every level
//! of an LRU cache hierarchy, using Must, May and Persistence abstract
//! interpretation. Accesses whose occurrence at a level is uncertain are
//! handled by joining the "accessed" and "not accessed" outcomes, which keeps
//! the per-level analyses safe for any associativity. The classifications are
//! turned into first/next cycle costs per reference and aggregated along the
//! worst path of the control flow graph.
//!
//! A concrete LRU hierarchy simulator and an exhaustive path enumerator are
//! included as the ground truth the analysis is checked against.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod cache;
pub mod cost;
pub mod domain;
pub mod harness;
pub mod program;
pub mod solver;

pub use analysis::{
    analyze, analyze_hierarchy, analyze_hierarchy_mueller, cac_next, classify, update_m, AnalysisError, AnalysisMode,
    Cac, Chmc, HierarchyAnalysis, LevelAnalysis, LevelSummary, RefClass,
};
pub use cache::{
    block_of, set_reuse_distance, simulate_hierarchy, AccessOutcome, CacheError, CacheLevelConfig, ConcreteCacheState,
    HierarchyConfig, HierarchyState, LevelCounts, MemoryBlock, Policy, SimulationResult,
};
pub use cost::{
    aggregate, l1_only_contribution, presence_vectors, reference_cost, wcet_contribution, CostModel, Presence,
    ReferenceCost, WcetContribution,
};
pub use domain::{AbstractCacheState, DomainError, Flavor, Geometry, Line};
pub use harness::{
    build_counterexample, enumerate_worst, evaluate_candidate, for_each_path, search_unsafety_witness, Counterexample,
    FocusRef, HarnessError, PathRun, SearchOutcome, SearchSpace, UnsafetyWitness, WorstCase,
};
pub use program::{BlockSpec, CallSpec, Cfg, FunctionSpec, InstructionRef, LoopSpec, Program, ProgramError, RefId};
pub use solver::{iteration_budget, solve, solve_with_order, AnalysisResult, SolverError, WorklistOrder};
