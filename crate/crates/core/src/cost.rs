//! Cycle costs of instruction fetches and their aggregation over the CFG.
//!
//! Every reference gets two costs: `first`, the worst cost of any single
//! execution, and `next`, the worst cost of an execution that is not the
//! reference's first one in the whole run.
//!
//! A loop with bound `k` costs, per entry, the minimum of
//!
//! * `k * iter_first`, every iteration charged with first costs, and
//! * `iter_first + (k - 1) * iter_next + extra`, where `extra` charges the
//!   first cost once more for every reference of the loop that may run for
//!   the first time after the first iteration.
//!
//! `iter_first` and `iter_next` are the costliest paths through one
//! iteration. Inner loops count as single nodes weighing their own bound.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::{Chmc, HierarchyAnalysis, LevelAnalysis};
use crate::cache::HierarchyConfig;
use crate::program::{Cfg, RefId};

/// Hit latency of every level, main memory last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostModel {
    pub latencies: Vec<u64>,
}

impl CostModel {
    pub fn from_hierarchy(hier: &HierarchyConfig) -> Self {
        let mut latencies: Vec<u64> = hier.levels().iter().map(|l| l.hit_latency).collect();
        latencies.push(hier.memory_latency());
        CostModel { latencies }
    }

    /// One cache level backed by a memory of latency `miss_latency`.
    pub fn single_level(hit_latency: u64, miss_latency: u64) -> Self {
        CostModel { latencies: vec![hit_latency, miss_latency] }
    }
}

/// Which levels a reference's first / later executions may reach, memory last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Presence {
    pub first: Vec<bool>,
    pub next: Vec<bool>,
}

/// `chmcs` holds one classification per cache level; the result has one
/// more entry for main memory.
pub fn presence_vectors(chmcs: &[Chmc]) -> Presence {
    let mut first = vec![true];
    let mut next = vec![true];
    for &c in chmcs {
        let f = *first.last().unwrap();
        let n = *next.last().unwrap();
        first.push(f && matches!(c, Chmc::AlwaysMiss | Chmc::FirstMiss | Chmc::NotClassified));
        next.push(n && matches!(c, Chmc::AlwaysMiss | Chmc::FirstHit | Chmc::NotClassified));
    }
    Presence { first, next }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceCost {
    pub first: u64,
    pub next: u64,
    pub presence: Presence,
}

impl ReferenceCost {
    /// Bound on any single execution.
    pub fn worst(&self) -> u64 {
        self.first.max(self.next)
    }
}

pub fn reference_cost(presence: &Presence, model: &CostModel) -> ReferenceCost {
    assert_eq!(presence.first.len(), model.latencies.len(), "one latency per level and memory");
    let dot = |p: &[bool]| -> u64 { p.iter().zip(&model.latencies).filter(|(p, _)| **p).map(|(_, t)| t).sum() };
    ReferenceCost { first: dot(&presence.first), next: dot(&presence.next), presence: presence.clone() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WcetContribution {
    /// Indexed `[block][index]`.
    pub per_reference: Vec<Vec<ReferenceCost>>,
    pub total: u64,
}

impl WcetContribution {
    pub fn cost(&self, id: RefId) -> &ReferenceCost {
        &self.per_reference[id.block][id.index]
    }
}

pub fn wcet_contribution(cfg: &Cfg, analysis: &HierarchyAnalysis, model: &CostModel) -> WcetContribution {
    let per_reference: Vec<Vec<ReferenceCost>> = cfg
        .blocks()
        .iter()
        .map(|b| b.refs.iter().map(|r| reference_cost(&presence_vectors(&analysis.chmcs(r.id)), model)).collect())
        .collect();
    let total = aggregate(cfg, &per_reference);
    WcetContribution { per_reference, total }
}

/// Contribution when the hierarchy is reduced to its first level, every L1
/// miss costing `miss_latency`.
pub fn l1_only_contribution(cfg: &Cfg, l1: &LevelAnalysis, hit_latency: u64, miss_latency: u64) -> u64 {
    let model = CostModel::single_level(hit_latency, miss_latency);
    let costs: Vec<Vec<ReferenceCost>> = l1
        .refs
        .iter()
        .map(|refs| refs.iter().map(|c| reference_cost(&presence_vectors(&[c.chmc]), &model)).collect())
        .collect();
    aggregate(cfg, &costs)
}

/// Worst total cost of one run of the program.
pub fn aggregate(cfg: &Cfg, costs: &[Vec<ReferenceCost>]) -> u64 {
    Aggregator::new(cfg, costs).total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Block(usize),
    Loop(usize),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    First,
    Next,
}

struct LoopCost {
    /// Bound on one complete execution of the loop.
    total: u64,
    iter_next: u64,
}

struct Aggregator<'a> {
    cfg: &'a Cfg,
    costs: &'a [Vec<ReferenceCost>],
    loops: BTreeMap<usize, LoopCost>,
}

impl<'a> Aggregator<'a> {
    fn new(cfg: &'a Cfg, costs: &'a [Vec<ReferenceCost>]) -> Self {
        let mut agg = Aggregator { cfg, costs, loops: BTreeMap::new() };
        let mut order: Vec<usize> = (0..cfg.loops().len()).collect();
        order.sort_by_key(|&l| cfg.loops()[l].members.len());
        for l in order {
            let cost = agg.loop_cost(l);
            agg.loops.insert(l, cost);
        }
        agg
    }

    fn total(&self) -> u64 {
        let region = Region::new(self.cfg, None);
        region.longest(|n| self.weight(n, Mode::First)).into_iter().max().unwrap_or(0)
    }

    fn block_weight(&self, b: usize, mode: Mode) -> u64 {
        self.costs[b]
            .iter()
            .map(|c| match mode {
                Mode::First => c.worst(),
                Mode::Next => c.next,
            })
            .sum()
    }

    fn weight(&self, n: Node, mode: Mode) -> u64 {
        match (n, mode) {
            (Node::Block(b), _) => self.block_weight(b, mode),
            (Node::Loop(l), Mode::First) => self.loops[&l].total,
            (Node::Loop(l), Mode::Next) => u64::from(self.cfg.loops()[l].bound) * self.loops[&l].iter_next,
        }
    }

    fn loop_cost(&self, l: usize) -> LoopCost {
        let cfg = self.cfg;
        let lp = &cfg.loops()[l];
        let k = u64::from(lp.bound);
        let region = Region::new(cfg, Some(l));
        let iter_first = region.longest(|n| self.weight(n, Mode::First)).into_iter().max().unwrap_or(0);
        let iter_next = region.longest(|n| self.weight(n, Mode::Next)).into_iter().max().unwrap_or(0);

        let mut mandatory: BTreeSet<usize> = BTreeSet::new();
        for n in region.latch_dominators() {
            match n {
                Node::Block(b) => mandatory.insert(b),
                Node::Loop(c) => mandatory.insert(cfg.loops()[c].header),
            };
        }
        let extra: u64 =
            lp.members.iter().filter(|b| !mandatory.contains(b)).map(|&b| self.block_weight(b, Mode::First)).sum();
        let every_first = k * iter_first;
        let split = iter_first + (k - 1) * iter_next + extra;
        LoopCost { total: every_first.min(split), iter_next }
    }
}

/// The acyclic graph of one loop body (or of the whole function) in which
/// directly nested loops are collapsed into single nodes.
struct Region {
    nodes: Vec<Node>,
    /// Topological order, header first.
    succs: Vec<BTreeSet<usize>>,
    latches: BTreeSet<usize>,
}

impl Region {
    fn new(cfg: &Cfg, l: Option<usize>) -> Self {
        let in_region = |b: usize| l.is_none_or(|l| cfg.loops()[l].members.contains(&b));
        let header = l.map_or(cfg.entry(), |l| cfg.loops()[l].header);
        let node_of = |b: usize| -> Node {
            let mut inner = cfg.innermost_loop(b);
            while let Some(i) = inner {
                if cfg.loops()[i].parent == l {
                    return Node::Loop(i);
                }
                inner = cfg.loops()[i].parent;
            }
            Node::Block(b)
        };

        let mut index: BTreeMap<Node, usize> = BTreeMap::new();
        let mut nodes = Vec::new();
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut latches = BTreeSet::new();
        let mut intern = |n: Node, nodes: &mut Vec<Node>| {
            *index.entry(n).or_insert_with(|| {
                nodes.push(n);
                nodes.len() - 1
            })
        };
        let h = intern(node_of(header), &mut nodes);
        for u in (0..cfg.blocks().len()).filter(|&u| in_region(u)) {
            let nu = intern(node_of(u), &mut nodes);
            for &v in cfg.succs(u) {
                if !in_region(v) {
                    continue;
                }
                if l.is_some() && v == header {
                    latches.insert(nu);
                    continue;
                }
                let nv = intern(node_of(v), &mut nodes);
                if nu != nv {
                    edges.insert((nu, nv));
                }
            }
        }
        let mut succs = vec![BTreeSet::new(); nodes.len()];
        for (u, v) in edges {
            succs[u].insert(v);
        }
        let mut region = Region { nodes, succs, latches };
        region.sort_from(h);
        region
    }

    /// Renumber nodes in topological order starting at `h`.
    fn sort_from(&mut self, h: usize) {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for s in &self.succs {
            for &v in s {
                indeg[v] += 1;
            }
        }
        debug_assert_eq!(indeg[h], 0);
        let mut order = Vec::with_capacity(n);
        let mut ready = vec![h];
        while let Some(u) = ready.pop() {
            order.push(u);
            for &v in &self.succs[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(v);
                }
            }
        }
        debug_assert_eq!(order.len(), n, "region graph must be acyclic and rooted");
        let mut pos = vec![0; n];
        for (i, &u) in order.iter().enumerate() {
            pos[u] = i;
        }
        self.nodes = order.iter().map(|&u| self.nodes[u]).collect();
        self.succs = order.iter().map(|&u| self.succs[u].iter().map(|&v| pos[v]).collect()).collect();
        self.latches = self.latches.iter().map(|&u| pos[u]).collect();
    }

    /// Heaviest path weight from the header to every node.
    fn longest(&self, weight: impl Fn(Node) -> u64) -> Vec<u64> {
        let mut best: Vec<Option<u64>> = vec![None; self.nodes.len()];
        best[0] = Some(0);
        let mut out = vec![0; self.nodes.len()];
        for u in 0..self.nodes.len() {
            let Some(before) = best[u] else { continue };
            out[u] = before + weight(self.nodes[u]);
            for &v in &self.succs[u] {
                best[v] = Some(best[v].map_or(out[u], |b| b.max(out[u])));
            }
        }
        out
    }

    /// Nodes on every path from the header to a back edge.
    fn latch_dominators(&self) -> Vec<Node> {
        (0..self.nodes.len()).filter(|&d| !self.latch_reachable_without(d)).map(|d| self.nodes[d]).collect()
    }

    fn latch_reachable_without(&self, skip: usize) -> bool {
        if skip == 0 {
            return false;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            if self.latches.contains(&u) {
                return true;
            }
            for &v in &self.succs[u] {
                if v != skip && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }
}
