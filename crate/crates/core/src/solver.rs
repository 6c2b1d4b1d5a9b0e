//! Forward worklist fixpoint over the basic blocks of a [`Cfg`].

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{AbstractCacheState, DomainError, Geometry};
use crate::program::{Cfg, RefId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("fixpoint not reached within {budget} block visits (non-monotonic transfer?)")]
    IterationBudgetExceeded { budget: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WorklistOrder {
    /// Always visit the pending block that comes first in reverse postorder.
    #[default]
    ReversePostorder,
    Fifo,
    /// Pending block that comes first in postorder; converges slowly.
    Postorder,
}

impl WorklistOrder {
    pub const ALL: [WorklistOrder; 3] =
        [WorklistOrder::ReversePostorder, WorklistOrder::Fifo, WorklistOrder::Postorder];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisResult {
    pub block_in: Vec<AbstractCacheState>,
    pub block_out: Vec<AbstractCacheState>,
    /// State right before each reference, indexed `[block][index]`.
    pub ref_pre: Vec<Vec<AbstractCacheState>>,
    /// Number of block visits until the fixpoint was reached.
    pub iterations: usize,
}

impl AnalysisResult {
    pub fn pre(&self, id: RefId) -> &AbstractCacheState {
        &self.ref_pre[id.block][id.index]
    }
}

/// Upper bound on block visits for one solve.
///
/// `set_sizes` holds, for every cache set, the number of distinct memory
/// blocks of the program that map to it. Along any ascending chain a block
/// can change its age at most `ways + 1` times, its path flag once, and lose
/// each of the other blocks of its set from its companion list once, so one
/// set has height at most `n * (ways + n + 2)`. Every block's in-state rises
/// at most `height + 1` times, each rise queues the block once.
pub fn iteration_budget(cfg: &Cfg, geometry: Geometry, set_sizes: impl IntoIterator<Item = usize>) -> usize {
    let ways = geometry.ways as usize;
    let height: usize = set_sizes.into_iter().map(|n| n * (ways + n + 2)).sum();
    1 + cfg.blocks().len() * (height + 1)
}

pub fn solve<F>(
    cfg: &Cfg,
    initial: &AbstractCacheState,
    transfer: F,
    budget: usize,
) -> Result<AnalysisResult, SolverError>
where
    F: Fn(RefId, &AbstractCacheState) -> AbstractCacheState,
{
    solve_with_order(cfg, initial, transfer, budget, WorklistOrder::default())
}

pub fn solve_with_order<F>(
    cfg: &Cfg,
    initial: &AbstractCacheState,
    transfer: F,
    budget: usize,
    order: WorklistOrder,
) -> Result<AnalysisResult, SolverError>
where
    F: Fn(RefId, &AbstractCacheState) -> AbstractCacheState,
{
    let n = cfg.blocks().len();
    let run_block =
        |b: usize, state: &AbstractCacheState| cfg.block(b).refs.iter().fold(state.clone(), |s, r| transfer(r.id, &s));

    let mut rank = vec![0usize; n];
    for (i, &b) in cfg.reverse_postorder().iter().enumerate() {
        rank[b] = match order {
            WorklistOrder::Postorder => n - 1 - i,
            _ => i,
        };
    }
    let mut queue = Worklist::new(order, n);

    let mut block_in: Vec<Option<AbstractCacheState>> = vec![None; n];
    let mut block_out: Vec<Option<AbstractCacheState>> = vec![None; n];
    block_in[cfg.entry()] = Some(initial.clone());
    queue.push(cfg.entry(), rank[cfg.entry()]);

    let mut iterations = 0;
    while let Some(b) = queue.pop() {
        iterations += 1;
        if iterations > budget {
            return Err(SolverError::IterationBudgetExceeded { budget });
        }
        let input = block_in[b].as_ref().expect("queued blocks have an in-state");
        let out = run_block(b, input);
        if block_out[b].as_ref() == Some(&out) {
            continue;
        }
        for &s in cfg.succs(b) {
            let next = match &block_in[s] {
                Some(old) => old.join(&out)?,
                None => out.clone(),
            };
            if block_in[s].as_ref() != Some(&next) {
                block_in[s] = Some(next);
                queue.push(s, rank[s]);
            }
        }
        block_out[b] = Some(out);
    }

    let block_in: Vec<AbstractCacheState> =
        block_in.into_iter().map(|s| s.expect("validated CFGs have every block reachable")).collect();
    let mut ref_pre = Vec::with_capacity(n);
    for (b, input) in block_in.iter().enumerate() {
        let mut state = input.clone();
        let mut pres = Vec::with_capacity(cfg.block(b).refs.len());
        for r in &cfg.block(b).refs {
            let next = transfer(r.id, &state);
            pres.push(core::mem::replace(&mut state, next));
        }
        ref_pre.push(pres);
    }
    Ok(AnalysisResult { block_in, block_out: block_out.into_iter().map(Option::unwrap).collect(), ref_pre, iterations })
}

enum Worklist {
    Ranked(BTreeSet<(usize, usize)>),
    Fifo(VecDeque<usize>, Vec<bool>),
}

impl Worklist {
    fn new(order: WorklistOrder, n: usize) -> Self {
        match order {
            WorklistOrder::Fifo => Worklist::Fifo(VecDeque::new(), vec![false; n]),
            _ => Worklist::Ranked(BTreeSet::new()),
        }
    }

    fn push(&mut self, b: usize, rank: usize) {
        match self {
            Worklist::Ranked(set) => {
                set.insert((rank, b));
            }
            Worklist::Fifo(q, queued) => {
                if !queued[b] {
                    queued[b] = true;
                    q.push_back(b);
                }
            }
        }
    }

    fn pop(&mut self) -> Option<usize> {
        match self {
            Worklist::Ranked(set) => set.pop_first().map(|(_, b)| b),
            Worklist::Fifo(q, queued) => {
                let b = q.pop_front()?;
                queued[b] = false;
                Some(b)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Flavor;
    use crate::program::{BlockSpec, FunctionSpec, LoopSpec, Program};
    use alloc::string::ToString;

    fn block(id: &str, addrs: &[u64]) -> BlockSpec {
        BlockSpec { id: id.to_string(), addrs: addrs.to_vec() }
    }

    fn edge(a: &str, b: &str) -> (alloc::string::String, alloc::string::String) {
        (a.to_string(), b.to_string())
    }

    fn geometry() -> Geometry {
        Geometry { sets: 1, ways: 2 }
    }

    // One address per memory block, one set.
    fn must_update(cfg: &Cfg) -> impl Fn(RefId, &AbstractCacheState) -> AbstractCacheState + '_ {
        move |r, s| s.update(cfg.instruction(r).address / 4)
    }

    #[test]
    fn straight_line_is_sequential_update() {
        let f = FunctionSpec {
            blocks: vec![block("a", &[0, 4]), block("b", &[8])],
            edges: vec![edge("a", "b")],
            entry: "a".into(),
            exit: "b".into(),
            ..FunctionSpec::default()
        };
        let cfg = Program::single(4, f).unwrap().to_cfg().unwrap();
        let init = AbstractCacheState::empty(Flavor::Must, geometry());
        let res = solve(&cfg, &init, must_update(&cfg), 100).unwrap();
        assert_eq!(res.iterations, 2);
        assert_eq!(res.block_out[1], init.update(0).update(1).update(2));
        assert_eq!(res.pre(RefId { block: 0, index: 1 }), &init.update(0));
    }

    #[test]
    fn diamond_joins_arm_outputs() {
        let f = FunctionSpec {
            blocks: vec![block("e", &[0]), block("l", &[4]), block("r", &[8]), block("j", &[12])],
            edges: vec![edge("e", "l"), edge("e", "r"), edge("l", "j"), edge("r", "j")],
            entry: "e".into(),
            exit: "j".into(),
            ..FunctionSpec::default()
        };
        let cfg = Program::single(4, f).unwrap().to_cfg().unwrap();
        for flavor in Flavor::ALL {
            let init = AbstractCacheState::empty(flavor, geometry());
            let res = solve(&cfg, &init, must_update(&cfg), 100).unwrap();
            let j = cfg.block_index("j").unwrap();
            let (l, r) = (cfg.block_index("l").unwrap(), cfg.block_index("r").unwrap());
            assert_eq!(res.block_in[j], res.block_out[l].join(&res.block_out[r]).unwrap());
        }
    }

    #[test]
    fn self_loop_stabilizes_quickly() {
        let f = FunctionSpec {
            blocks: vec![block("in", &[64]), block("h", &[0]), block("x", &[4])],
            edges: vec![edge("in", "h"), edge("h", "h"), edge("h", "x")],
            entry: "in".into(),
            exit: "x".into(),
            loops: vec![LoopSpec { header: "h".into(), members: vec!["h".into()], bound: 5 }],
            ..FunctionSpec::default()
        };
        let cfg = Program::single(4, f).unwrap().to_cfg().unwrap();
        let init = AbstractCacheState::empty(Flavor::Must, geometry());
        let res = solve(&cfg, &init, must_update(&cfg), 100).unwrap();
        let h = cfg.block_index("h").unwrap();
        assert_eq!(res.block_out[h].age(0), Some(1));
        // entry once, the loop block until its in-state settles, then the exit
        assert!(res.iterations <= 5, "{}", res.iterations);
        for order in WorklistOrder::ALL {
            let other = solve_with_order(&cfg, &init, must_update(&cfg), 100, order).unwrap();
            assert_eq!(other.block_in, res.block_in);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let f = FunctionSpec {
            blocks: vec![block("in", &[64]), block("h", &[0]), block("x", &[4])],
            edges: vec![edge("in", "h"), edge("h", "h"), edge("h", "x")],
            entry: "in".into(),
            exit: "x".into(),
            loops: vec![LoopSpec { header: "h".into(), members: vec!["h".into()], bound: 5 }],
            ..FunctionSpec::default()
        };
        let cfg = Program::single(4, f).unwrap().to_cfg().unwrap();
        let init = AbstractCacheState::empty(Flavor::Must, geometry());
        let err = solve(&cfg, &init, must_update(&cfg), 1).unwrap_err();
        assert_eq!(err, SolverError::IterationBudgetExceeded { budget: 1 });
    }
}
