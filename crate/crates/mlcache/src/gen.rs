//! Random structured programs and cache hierarchies for the sweeps.

use std::collections::BTreeMap;

use mlcache_core::{BlockSpec, CacheLevelConfig, FunctionSpec, HierarchyConfig, LoopSpec, Program};
use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct ProgramShape {
    pub max_blocks: usize,
    pub max_bound: u32,
    pub max_block_len: usize,
    /// Block start addresses are `4 * k` for `k < address_slots`.
    pub address_slots: u64,
}

impl Default for ProgramShape {
    fn default() -> Self {
        ProgramShape { max_blocks: 8, max_bound: 3, max_block_len: 3, address_slots: 128 }
    }
}

struct Builder<'a, R> {
    rng: &'a mut R,
    shape: ProgramShape,
    blocks: Vec<BlockSpec>,
    edges: Vec<(String, String)>,
    loops: Vec<LoopSpec>,
}

/// Entry block, exit block and all blocks of a generated fragment.
struct Fragment {
    entry: usize,
    exit: usize,
    blocks: Vec<usize>,
}

impl<R: Rng> Builder<'_, R> {
    fn block(&mut self) -> usize {
        let len = self.rng.random_range(1..=self.shape.max_block_len) as u64;
        let start = 4 * self.rng.random_range(0..self.shape.address_slots);
        let id = self.blocks.len();
        self.blocks.push(BlockSpec { id: format!("b{id}"), addrs: (0..len).map(|i| start + 4 * i).collect() });
        id
    }

    fn edge(&mut self, from: usize, to: usize) {
        self.edges.push((format!("b{from}"), format!("b{to}")));
    }

    fn single(&mut self) -> Fragment {
        let b = self.block();
        Fragment { entry: b, exit: b, blocks: vec![b] }
    }

    /// A fragment of at most `budget` blocks.
    fn fragment(&mut self, budget: usize) -> Fragment {
        let mut kinds = vec![0];
        if budget >= 2 {
            kinds.extend([1, 4]);
        }
        if budget >= 3 {
            kinds.push(3);
        }
        if budget >= 4 {
            kinds.push(2);
        }
        kinds.push(5);
        match *kinds.choose(self.rng).unwrap() {
            0 => self.single(),
            1 => {
                let first = self.rng.random_range(1..budget);
                let a = self.fragment(first);
                let b = self.fragment(budget - first);
                self.edge(a.exit, b.entry);
                Fragment { entry: a.entry, exit: b.exit, blocks: [a.blocks, b.blocks].concat() }
            }
            2 => {
                // if / else with a join block
                let cond = self.block();
                let left_budget = self.rng.random_range(1..budget - 2);
                let l = self.fragment(left_budget);
                let r = self.fragment(budget - 2 - left_budget);
                let join = self.block();
                self.edge(cond, l.entry);
                self.edge(cond, r.entry);
                self.edge(l.exit, join);
                self.edge(r.exit, join);
                Fragment { entry: cond, exit: join, blocks: [vec![cond, join], l.blocks, r.blocks].concat() }
            }
            3 => {
                // if without else
                let cond = self.block();
                let t = self.fragment(budget - 2);
                let join = self.block();
                self.edge(cond, t.entry);
                self.edge(t.exit, join);
                self.edge(cond, join);
                Fragment { entry: cond, exit: join, blocks: [vec![cond, join], t.blocks].concat() }
            }
            4 => {
                // while loop: the header decides
                let header = self.block();
                let body = self.fragment(budget - 1);
                self.edge(header, body.entry);
                self.edge(body.exit, header);
                let blocks = [vec![header], body.blocks].concat();
                self.add_loop(header, &blocks);
                Fragment { entry: header, exit: header, blocks }
            }
            _ => {
                // do-while loop: the latch decides
                let body = self.fragment(budget);
                let header = format!("b{}", body.entry);
                if self.loops.iter().all(|l| l.header != header) {
                    self.edge(body.exit, body.entry);
                    self.add_loop(body.entry, &body.blocks);
                }
                body
            }
        }
    }

    fn add_loop(&mut self, header: usize, members: &[usize]) {
        let bound = self.rng.random_range(1..=self.shape.max_bound);
        self.loops.push(LoopSpec {
            header: format!("b{header}"),
            members: members.iter().map(|m| format!("b{m}")).collect(),
            bound,
        });
    }
}

/// A reducible single-function program with nested loops and conditionals.
pub fn random_program<R: Rng>(rng: &mut R, shape: ProgramShape) -> Program {
    assert!(shape.max_blocks >= 3);
    let mut b = Builder { rng, shape, blocks: Vec::new(), edges: Vec::new(), loops: Vec::new() };
    let budget = b.rng.random_range(1..=shape.max_blocks - 2);
    let body = b.fragment(budget);
    let has_pred = |b: &Builder<R>, x: usize| b.edges.iter().any(|(_, to)| *to == format!("b{x}"));
    let has_succ = |b: &Builder<R>, x: usize| b.edges.iter().any(|(from, _)| *from == format!("b{x}"));
    let entry = if has_pred(&b, body.entry) {
        let e = b.block();
        b.edge(e, body.entry);
        e
    } else {
        body.entry
    };
    let exit = if has_succ(&b, body.exit) {
        let x = b.block();
        b.edge(body.exit, x);
        x
    } else {
        body.exit
    };
    let f = FunctionSpec {
        blocks: b.blocks,
        edges: b.edges,
        entry: format!("b{entry}"),
        exit: format!("b{exit}"),
        loops: b.loops,
        calls: Vec::new(),
    };
    let mut functions = BTreeMap::new();
    functions.insert("main".to_string(), f);
    Program::new(4, "main", functions).expect("generated programs are well formed")
}

/// Two LRU levels with latencies 1 and 10, memory at 100. L1 has at most 4
/// sets.
pub fn random_hierarchy<R: Rng>(rng: &mut R) -> HierarchyConfig {
    let pick = |rng: &mut R, xs: &[u32]| *xs.choose(rng).unwrap();
    let l1 = CacheLevelConfig::lru(pick(rng, &[1, 2, 4]), pick(rng, &[1, 2, 4]), pick(rng, &[16, 32]), 1);
    let l2 = CacheLevelConfig::lru(pick(rng, &[1, 2, 4, 8, 16]), pick(rng, &[1, 2, 4]), pick(rng, &[16, 32, 64]), 10);
    HierarchyConfig::new(vec![l1, l2], 100).expect("valid geometry")
}
