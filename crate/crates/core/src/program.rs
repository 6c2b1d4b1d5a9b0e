//! Program model: functions made of basic blocks of instruction addresses,
//! their control flow, loop bounds and call sites.
//!
//! [`Program`] is the validated multi-function description. Analyses run on a
//! [`Cfg`], the flat graph obtained by inlining every call
//! ([`Program::expand_contexts`]) so that each calling context has its own
//! copy of the callee's references.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("instruction width must be a positive power of two, got {0}")]
    InvalidInstrWidth(u64),
    #[error("main function `{0}` is not defined")]
    MissingMain(String),
    #[error("function `{function}`: duplicate block `{block}`")]
    DuplicateBlock { function: String, block: String },
    #[error("function `{function}`: block `{block}` has no instructions")]
    EmptyBlock { function: String, block: String },
    #[error("function `{function}`: block `{block}`: address {address:#x} is not aligned to the instruction width")]
    MisalignedAddress { function: String, block: String, address: u64 },
    #[error("function `{function}`: block `{block}`: addresses must increase by exactly the instruction width")]
    NonContiguousBlock { function: String, block: String },
    #[error("function `{function}`: {what} refers to unknown block `{block}`")]
    UnknownBlock { function: String, what: &'static str, block: String },
    #[error("function `{function}`: duplicate edge {from} -> {to}")]
    DuplicateEdge { function: String, from: String, to: String },
    #[error("function `{function}`: entry block `{block}` has predecessors")]
    EntryHasPredecessors { function: String, block: String },
    #[error("function `{function}`: exit block `{block}` has successors")]
    ExitHasSuccessors { function: String, block: String },
    #[error("function `{function}`: block `{block}` is unreachable from the entry")]
    UnreachableBlock { function: String, block: String },
    #[error("function `{function}`: block `{block}` cannot reach the exit")]
    NoPathToExit { function: String, block: String },
    #[error("function `{function}`: control flow is irreducible around block `{block}`")]
    Irreducible { function: String, block: String },
    #[error("function `{function}`: missing/invalid loop bound for loop headed by `{header}`")]
    InvalidLoopBound { function: String, header: String },
    #[error("function `{function}`: block `{header}` is the target of a back edge but no loop is declared for it")]
    MissingLoop { function: String, header: String },
    #[error("function `{function}`: loop headed by `{header}` is declared twice")]
    DuplicateLoop { function: String, header: String },
    #[error("function `{function}`: `{header}` is not the header of a natural loop")]
    NotALoop { function: String, header: String },
    #[error("function `{function}`: members of the loop headed by `{header}` do not match its natural loop")]
    LoopMembersMismatch { function: String, header: String },
    #[error("function `{function}`: call to unknown function `{callee}`")]
    UnknownFunction { function: String, callee: String },
    #[error("function `{function}`: block `{block}` has more than one call")]
    DuplicateCallSite { function: String, block: String },
    #[error("recursive call chain: {0}")]
    RecursiveCall(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    pub id: String,
    pub addrs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopSpec {
    pub header: String,
    pub members: Vec<String>,
    /// Maximum number of executions of the header per entry into the loop.
    pub bound: u32,
}

/// The callee runs after the instructions of `site_block` and before its successors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSpec {
    pub site_block: String,
    pub callee: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FunctionSpec {
    pub blocks: Vec<BlockSpec>,
    pub edges: Vec<(String, String)>,
    pub entry: String,
    pub exit: String,
    pub loops: Vec<LoopSpec>,
    pub calls: Vec<CallSpec>,
}

impl FunctionSpec {
    fn block_index(&self) -> BTreeMap<&str, usize> {
        self.blocks.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    fn reference_count(&self) -> usize {
        self.blocks.iter().map(|b| b.addrs.len()).sum()
    }
}

/// A validated program: every function satisfies the structural invariants
/// and the call graph is acyclic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    instr_width: u64,
    main: String,
    functions: BTreeMap<String, FunctionSpec>,
}

impl Program {
    pub const DEFAULT_INSTR_WIDTH: u64 = 4;

    pub fn new(
        instr_width: u64,
        main: impl Into<String>,
        functions: BTreeMap<String, FunctionSpec>,
    ) -> Result<Self, ProgramError> {
        let main = main.into();
        if instr_width == 0 || !instr_width.is_power_of_two() {
            return Err(ProgramError::InvalidInstrWidth(instr_width));
        }
        if !functions.contains_key(&main) {
            return Err(ProgramError::MissingMain(main));
        }
        for (name, f) in &functions {
            validate_function(name, f, instr_width, name == &main)?;
            let mut sites = BTreeSet::new();
            let index = f.block_index();
            for call in &f.calls {
                if !index.contains_key(call.site_block.as_str()) {
                    return Err(ProgramError::UnknownBlock {
                        function: name.clone(),
                        what: "call site",
                        block: call.site_block.clone(),
                    });
                }
                if !functions.contains_key(&call.callee) {
                    return Err(ProgramError::UnknownFunction { function: name.clone(), callee: call.callee.clone() });
                }
                if !sites.insert(call.site_block.as_str()) {
                    return Err(ProgramError::DuplicateCallSite {
                        function: name.clone(),
                        block: call.site_block.clone(),
                    });
                }
            }
        }
        let program = Program { instr_width, main, functions };
        program.check_call_graph()?;
        Ok(program)
    }

    /// Single-function program.
    pub fn single(instr_width: u64, body: FunctionSpec) -> Result<Self, ProgramError> {
        let mut functions = BTreeMap::new();
        functions.insert("main".to_string(), body);
        Program::new(instr_width, "main", functions)
    }

    pub fn instr_width(&self) -> u64 {
        self.instr_width
    }

    pub fn main(&self) -> &str {
        &self.main
    }

    pub fn functions(&self) -> &BTreeMap<String, FunctionSpec> {
        &self.functions
    }

    pub fn has_calls(&self) -> bool {
        self.functions.values().any(|f| !f.calls.is_empty())
    }

    fn check_call_graph(&self) -> Result<(), ProgramError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        fn visit<'a>(
            p: &'a Program,
            f: &'a str,
            state: &mut BTreeMap<&'a str, u8>,
            stack: &mut Vec<&'a str>,
        ) -> Result<(), ProgramError> {
            match state.get(f) {
                Some(2) => return Ok(()),
                Some(1) => {
                    let start = stack.iter().position(|s| *s == f).unwrap_or(0);
                    let mut chain: Vec<&str> = stack[start..].to_vec();
                    chain.push(f);
                    return Err(ProgramError::RecursiveCall(chain.join(" -> ")));
                }
                _ => {}
            }
            state.insert(f, 1);
            stack.push(f);
            for call in &p.functions[f].calls {
                visit(p, &call.callee, state, stack)?;
            }
            stack.pop();
            state.insert(f, 2);
            Ok(())
        }
        let mut state = BTreeMap::new();
        let mut stack = Vec::new();
        for name in self.functions.keys() {
            visit(self, name, &mut state, &mut stack)?;
        }
        Ok(())
    }

    /// Inlines every call, once per calling context. The result has a single
    /// function (`main`) and no calls; inlined blocks are named
    /// `<site>/<callee>.<block>`, where `<site>` is the context-qualified
    /// name of the calling block.
    pub fn expand_contexts(&self) -> Result<Program, ProgramError> {
        if !self.has_calls() {
            return Ok(self.clone());
        }
        let mut flat = FlatBuilder::default();
        let expanded = flat.inline(self, &self.main, "");
        let body = FunctionSpec {
            blocks: flat.blocks,
            edges: flat.edges,
            entry: expanded.entry,
            exit: expanded.exit,
            loops: flat.loops,
            calls: Vec::new(),
        };
        let mut functions = BTreeMap::new();
        functions.insert(self.main.clone(), body);
        Program::new(self.instr_width, self.main.clone(), functions)
    }

    /// Context-expanded, indexed control flow graph.
    pub fn to_cfg(&self) -> Result<Cfg, ProgramError> {
        let flat = self.expand_contexts()?;
        Ok(Cfg::from_function(flat.instr_width, &flat.functions[&flat.main]))
    }
}

#[derive(Default)]
struct FlatBuilder {
    blocks: Vec<BlockSpec>,
    edges: Vec<(String, String)>,
    loops: Vec<LoopSpec>,
}

struct Inlined {
    entry: String,
    exit: String,
    names: Vec<String>,
}

impl FlatBuilder {
    fn inline(&mut self, program: &Program, function: &str, site: &str) -> Inlined {
        let f = &program.functions[function];
        let qualify = |id: &str| {
            if site.is_empty() {
                id.to_string()
            } else {
                format!("{site}/{function}.{id}")
            }
        };
        let calls: BTreeMap<&str, &str> = f.calls.iter().map(|c| (c.site_block.as_str(), c.callee.as_str())).collect();
        let mut names = Vec::new();
        // block id -> (name of the block, name of the block control leaves from)
        let mut ends: BTreeMap<&str, (String, String)> = BTreeMap::new();
        let mut nested: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for b in &f.blocks {
            let name = qualify(&b.id);
            self.blocks.push(BlockSpec { id: name.clone(), addrs: b.addrs.clone() });
            names.push(name.clone());
            let mut out = name.clone();
            if let Some(callee) = calls.get(b.id.as_str()) {
                let sub = self.inline(program, callee, &name);
                self.edges.push((name.clone(), sub.entry.clone()));
                out = sub.exit.clone();
                names.extend(sub.names.iter().cloned());
                nested.insert(b.id.as_str(), sub.names);
            }
            ends.insert(b.id.as_str(), (name, out));
        }
        for (from, to) in &f.edges {
            self.edges.push((ends[from.as_str()].1.clone(), ends[to.as_str()].0.clone()));
        }
        for l in &f.loops {
            let mut members = Vec::new();
            for m in &l.members {
                members.push(ends[m.as_str()].0.clone());
                if let Some(inner) = nested.get(m.as_str()) {
                    members.extend(inner.iter().cloned());
                }
            }
            self.loops.push(LoopSpec { header: ends[l.header.as_str()].0.clone(), members, bound: l.bound });
        }
        Inlined { entry: ends[f.entry.as_str()].0.clone(), exit: ends[f.exit.as_str()].1.clone(), names }
    }
}

struct Graph {
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

impl Graph {
    fn reachable_from(&self, start: usize, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.succs.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(n) = stack.pop() {
            let next = if forward { &self.succs[n] } else { &self.preds[n] };
            for &m in next {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }

    fn postorder(&self, entry: usize) -> Vec<usize> {
        let mut seen = vec![false; self.succs.len()];
        let mut order = Vec::with_capacity(self.succs.len());
        let mut stack = vec![(entry, 0usize)];
        seen[entry] = true;
        while let Some((n, i)) = stack.last_mut() {
            let n = *n;
            if *i < self.succs[n].len() {
                let m = self.succs[n][*i];
                *i += 1;
                if !seen[m] {
                    seen[m] = true;
                    stack.push((m, 0));
                }
            } else {
                order.push(n);
                stack.pop();
            }
        }
        order
    }

    /// Immediate dominators (Cooper, Harvey & Kennedy); all nodes reachable.
    fn idoms(&self, entry: usize, rpo: &[usize]) -> Vec<usize> {
        let n = self.succs.len();
        let mut pos = vec![usize::MAX; n];
        for (i, &b) in rpo.iter().enumerate() {
            pos[b] = i;
        }
        let mut idom = vec![usize::MAX; n];
        idom[entry] = entry;
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new = usize::MAX;
                for &p in &self.preds[b] {
                    if idom[p] == usize::MAX {
                        continue;
                    }
                    new = if new == usize::MAX {
                        p
                    } else {
                        let (mut x, mut y) = (p, new);
                        while x != y {
                            while pos[x] > pos[y] {
                                x = idom[x];
                            }
                            while pos[y] > pos[x] {
                                y = idom[y];
                            }
                        }
                        x
                    };
                }
                if idom[b] != new {
                    idom[b] = new;
                    changed = true;
                }
            }
        }
        idom
    }
}

fn dominates(idom: &[usize], a: usize, mut b: usize) -> bool {
    loop {
        if a == b {
            return true;
        }
        let up = idom[b];
        if up == b {
            return false;
        }
        b = up;
    }
}

/// Blocks of the natural loop of `header` given its back-edge sources.
fn natural_loop(graph: &Graph, header: usize, latches: &[usize]) -> BTreeSet<usize> {
    let mut body = BTreeSet::new();
    body.insert(header);
    let mut stack: Vec<usize> = latches.to_vec();
    while let Some(n) = stack.pop() {
        if body.insert(n) {
            stack.extend(graph.preds[n].iter().copied());
        }
    }
    body
}

fn validate_function(name: &str, f: &FunctionSpec, width: u64, is_main: bool) -> Result<(), ProgramError> {
    let fname = || name.to_string();
    let mut index = BTreeMap::new();
    for (i, b) in f.blocks.iter().enumerate() {
        if index.insert(b.id.as_str(), i).is_some() {
            return Err(ProgramError::DuplicateBlock { function: fname(), block: b.id.clone() });
        }
        if b.addrs.is_empty() {
            return Err(ProgramError::EmptyBlock { function: fname(), block: b.id.clone() });
        }
        for (k, &a) in b.addrs.iter().enumerate() {
            if a % width != 0 {
                return Err(ProgramError::MisalignedAddress { function: fname(), block: b.id.clone(), address: a });
            }
            if k > 0 && b.addrs[k - 1].checked_add(width) != Some(a) {
                return Err(ProgramError::NonContiguousBlock { function: fname(), block: b.id.clone() });
            }
        }
    }
    let lookup = |what: &'static str, id: &str| {
        index.get(id).copied().ok_or_else(|| ProgramError::UnknownBlock {
            function: fname(),
            what,
            block: id.to_string(),
        })
    };
    let entry = lookup("entry", &f.entry)?;
    let exit = lookup("exit", &f.exit)?;
    let n = f.blocks.len();
    let mut graph = Graph { succs: vec![Vec::new(); n], preds: vec![Vec::new(); n] };
    let mut seen_edges = BTreeSet::new();
    for (from, to) in &f.edges {
        let u = lookup("edge", from)?;
        let v = lookup("edge", to)?;
        if !seen_edges.insert((u, v)) {
            return Err(ProgramError::DuplicateEdge { function: fname(), from: from.clone(), to: to.clone() });
        }
        graph.succs[u].push(v);
        graph.preds[v].push(u);
    }
    if is_main && !graph.preds[entry].is_empty() {
        return Err(ProgramError::EntryHasPredecessors { function: fname(), block: f.entry.clone() });
    }
    if !graph.succs[exit].is_empty() {
        return Err(ProgramError::ExitHasSuccessors { function: fname(), block: f.exit.clone() });
    }
    let fwd = graph.reachable_from(entry, true);
    if let Some(i) = fwd.iter().position(|r| !r) {
        return Err(ProgramError::UnreachableBlock { function: fname(), block: f.blocks[i].id.clone() });
    }
    let bwd = graph.reachable_from(exit, false);
    if let Some(i) = bwd.iter().position(|r| !r) {
        return Err(ProgramError::NoPathToExit { function: fname(), block: f.blocks[i].id.clone() });
    }

    let mut rpo = graph.postorder(entry);
    rpo.reverse();
    let idom = graph.idoms(entry, &rpo);
    let mut latches: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for u in 0..n {
        for &v in &graph.succs[u] {
            if dominates(&idom, v, u) {
                latches.entry(v).or_default().push(u);
            }
        }
    }
    // Reducible iff the graph without back edges is acyclic.
    let mut indeg = vec![0usize; n];
    for u in 0..n {
        for &v in &graph.succs[u] {
            if !dominates(&idom, v, u) {
                indeg[v] += 1;
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut done = 0;
    while let Some(u) = ready.pop() {
        done += 1;
        for &v in &graph.succs[u] {
            if !dominates(&idom, v, u) {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(v);
                }
            }
        }
    }
    if done != n {
        let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
        return Err(ProgramError::Irreducible { function: fname(), block: f.blocks[stuck].id.clone() });
    }

    let mut declared = BTreeSet::new();
    for l in &f.loops {
        let header = lookup("loop header", &l.header)?;
        if l.bound == 0 {
            return Err(ProgramError::InvalidLoopBound { function: fname(), header: l.header.clone() });
        }
        if !declared.insert(header) {
            return Err(ProgramError::DuplicateLoop { function: fname(), header: l.header.clone() });
        }
        let Some(back) = latches.get(&header) else {
            return Err(ProgramError::NotALoop { function: fname(), header: l.header.clone() });
        };
        let mut members = BTreeSet::new();
        for m in &l.members {
            members.insert(lookup("loop member", m)?);
        }
        if members != natural_loop(&graph, header, back) {
            return Err(ProgramError::LoopMembersMismatch { function: fname(), header: l.header.clone() });
        }
    }
    if let Some(h) = latches.keys().find(|h| !declared.contains(h)) {
        return Err(ProgramError::MissingLoop { function: fname(), header: f.blocks[*h].id.clone() });
    }
    Ok(())
}

/// Identifies one instruction fetch of the context-expanded program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RefId {
    pub block: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstructionRef {
    pub id: RefId,
    pub address: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub refs: Vec<InstructionRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub header: usize,
    pub members: BTreeSet<usize>,
    pub bound: u32,
    /// Innermost enclosing loop.
    pub parent: Option<usize>,
}

/// Flat, indexed control flow graph of a call-free function.
///
/// Successor lists are sorted by block index, so depth-first walks visit
/// paths in lexicographic order of block indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    instr_width: u64,
    blocks: Vec<Block>,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
    entry: usize,
    exit: usize,
    loops: Vec<Loop>,
    innermost: Vec<Option<usize>>,
    rpo: Vec<usize>,
}

impl Cfg {
    /// `f` must come from a validated [`Program`] and have no calls.
    fn from_function(instr_width: u64, f: &FunctionSpec) -> Cfg {
        let index = f.block_index();
        let blocks: Vec<Block> = f
            .blocks
            .iter()
            .enumerate()
            .map(|(bi, b)| Block {
                name: b.id.clone(),
                refs: b
                    .addrs
                    .iter()
                    .enumerate()
                    .map(|(i, &address)| InstructionRef { id: RefId { block: bi, index: i }, address })
                    .collect(),
            })
            .collect();
        let n = blocks.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for (from, to) in &f.edges {
            let (u, v) = (index[from.as_str()], index[to.as_str()]);
            succs[u].push(v);
            preds[v].push(u);
        }
        for s in succs.iter_mut().chain(preds.iter_mut()) {
            s.sort_unstable();
        }
        let mut loops: Vec<Loop> = f
            .loops
            .iter()
            .map(|l| Loop {
                header: index[l.header.as_str()],
                members: l.members.iter().map(|m| index[m.as_str()]).collect(),
                bound: l.bound,
                parent: None,
            })
            .collect();
        for i in 0..loops.len() {
            loops[i].parent = (0..loops.len())
                .filter(|&j| {
                    j != i
                        && loops[j].members.len() > loops[i].members.len()
                        && loops[j].members.contains(&loops[i].header)
                })
                .min_by_key(|&j| loops[j].members.len());
        }
        let innermost = (0..n)
            .map(|b| {
                (0..loops.len()).filter(|&l| loops[l].members.contains(&b)).min_by_key(|&l| loops[l].members.len())
            })
            .collect();
        let entry = index[f.entry.as_str()];
        let graph = Graph { succs, preds };
        let mut rpo = graph.postorder(entry);
        rpo.reverse();
        Cfg {
            instr_width,
            blocks,
            succs: graph.succs,
            preds: graph.preds,
            entry,
            exit: index[f.exit.as_str()],
            loops,
            innermost,
            rpo,
        }
    }

    pub fn instr_width(&self) -> u64 {
        self.instr_width
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &Block {
        &self.blocks[b]
    }

    pub fn succs(&self, b: usize) -> &[usize] {
        &self.succs[b]
    }

    pub fn preds(&self, b: usize) -> &[usize] {
        &self.preds[b]
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn exit(&self) -> usize {
        self.exit
    }

    pub fn loops(&self) -> &[Loop] {
        &self.loops
    }

    pub fn innermost_loop(&self, b: usize) -> Option<usize> {
        self.innermost[b]
    }

    pub fn reverse_postorder(&self) -> &[usize] {
        &self.rpo
    }

    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    pub fn refs(&self) -> impl Iterator<Item = &InstructionRef> {
        self.blocks.iter().flat_map(|b| b.refs.iter())
    }

    pub fn reference_count(&self) -> usize {
        self.blocks.iter().map(|b| b.refs.len()).sum()
    }

    pub fn instruction(&self, id: RefId) -> &InstructionRef {
        &self.blocks[id.block].refs[id.index]
    }

    /// Context-qualified display name, `<block>#<index>`.
    pub fn ref_name(&self, id: RefId) -> String {
        format!("{}#{}", self.blocks[id.block].name, id.index)
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    /// Whether an execution of `from` can be followed by one of `to` (both
    /// references), possibly through loop back edges.
    pub fn may_precede(&self, from: RefId, to: RefId) -> bool {
        if from.block == to.block && from.index < to.index {
            return true;
        }
        let mut seen = vec![false; self.blocks.len()];
        let mut stack: Vec<usize> = self.succs[from.block].clone();
        while let Some(b) = stack.pop() {
            if b == to.block {
                return true;
            }
            if !seen[b] {
                seen[b] = true;
                stack.extend(self.succs[b].iter().copied());
            }
        }
        false
    }
}

impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            write!(f, "{}:", b.name)?;
            for r in &b.refs {
                write!(f, " {:#x}", r.address)?;
            }
            let names: Vec<&str> = self.succs[i].iter().map(|&s| self.blocks[s].name.as_str()).collect();
            writeln!(f, " -> [{}]", names.join(", "))?;
        }
        Ok(())
    }
}

/// Total reference count of `function` after inlining all of its calls.
pub fn expanded_reference_count(program: &Program, function: &str) -> usize {
    let f = &program.functions[function];
    f.reference_count() + f.calls.iter().map(|c| expanded_reference_count(program, &c.callee)).sum::<usize>()
}
