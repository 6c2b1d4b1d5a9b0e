//! Cache geometry, address mapping and the concrete hierarchy simulator.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CacheError {
    #[error("level {level}: number of sets must be a positive power of two, got {value}")]
    InvalidSets { level: usize, value: u32 },
    #[error("level {level}: associativity must be at least 1")]
    InvalidWays { level: usize },
    #[error("level {level}: line size must be a positive power of two, got {value}")]
    InvalidLineSize { level: usize, value: u32 },
    #[error("hierarchy has no cache level")]
    NoLevels,
    #[error("level index {0} out of range")]
    NoSuchLevel(usize),
    #[error("access {0} is past the end of the trace")]
    NoSuchAccess(usize),
    #[error("access {index} does not probe level {level}")]
    NotProbed { index: usize, level: usize },
    #[error("access {index}: block is not repeated at level {level}")]
    NotRepeated { index: usize, level: usize },
}

/// Replacement policy of a concrete cache set.
///
/// A set is kept as a list of block numbers, most recently inserted or used
/// first; `touch` is called on a hit and `fill` on a miss.
pub trait ReplacementPolicy {
    fn touch(&self, lines: &mut Vec<u64>, position: usize);
    fn fill(&self, lines: &mut Vec<u64>, block: u64, ways: usize);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Lru;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Fifo;

impl ReplacementPolicy for Lru {
    fn touch(&self, lines: &mut Vec<u64>, position: usize) {
        let b = lines.remove(position);
        lines.insert(0, b);
    }

    fn fill(&self, lines: &mut Vec<u64>, block: u64, ways: usize) {
        lines.insert(0, block);
        lines.truncate(ways);
    }
}

impl ReplacementPolicy for Fifo {
    fn touch(&self, _lines: &mut Vec<u64>, _position: usize) {}

    fn fill(&self, lines: &mut Vec<u64>, block: u64, ways: usize) {
        lines.insert(0, block);
        lines.truncate(ways);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    #[default]
    Lru,
    Fifo,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Lru => "lru",
            Policy::Fifo => "fifo",
        }
    }
}

impl ReplacementPolicy for Policy {
    fn touch(&self, lines: &mut Vec<u64>, position: usize) {
        match self {
            Policy::Lru => Lru.touch(lines, position),
            Policy::Fifo => Fifo.touch(lines, position),
        }
    }

    fn fill(&self, lines: &mut Vec<u64>, block: u64, ways: usize) {
        match self {
            Policy::Lru => Lru.fill(lines, block, ways),
            Policy::Fifo => Fifo.fill(lines, block, ways),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheLevelConfig {
    pub sets: u32,
    pub ways: u32,
    pub line_size: u32,
    pub hit_latency: u64,
    pub policy: Policy,
}

impl CacheLevelConfig {
    pub fn lru(sets: u32, ways: u32, line_size: u32, hit_latency: u64) -> Self {
        CacheLevelConfig { sets, ways, line_size, hit_latency, policy: Policy::Lru }
    }

    pub fn capacity(&self) -> u64 {
        u64::from(self.sets) * u64::from(self.ways) * u64::from(self.line_size)
    }

    fn validate(&self, level: usize) -> Result<(), CacheError> {
        if self.sets == 0 || !self.sets.is_power_of_two() {
            return Err(CacheError::InvalidSets { level, value: self.sets });
        }
        if self.ways == 0 {
            return Err(CacheError::InvalidWays { level });
        }
        if self.line_size == 0 || !self.line_size.is_power_of_two() {
            return Err(CacheError::InvalidLineSize { level, value: self.line_size });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyConfig {
    levels: Vec<CacheLevelConfig>,
    memory_latency: u64,
}

impl HierarchyConfig {
    pub fn new(levels: Vec<CacheLevelConfig>, memory_latency: u64) -> Result<Self, CacheError> {
        if levels.is_empty() {
            return Err(CacheError::NoLevels);
        }
        for (i, l) in levels.iter().enumerate() {
            l.validate(i + 1)?;
        }
        Ok(HierarchyConfig { levels, memory_latency })
    }

    pub fn levels(&self) -> &[CacheLevelConfig] {
        &self.levels
    }

    pub fn level(&self, index: usize) -> &CacheLevelConfig {
        &self.levels[index]
    }

    pub fn memory_latency(&self) -> u64 {
        self.memory_latency
    }

    /// Non-fatal remarks, e.g. a level smaller than the one before it.
    pub fn warnings(&self) -> Vec<String> {
        self.levels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].capacity() < w[0].capacity())
            .map(|(i, w)| {
                format!("L{} ({} bytes) is smaller than L{} ({} bytes)", i + 2, w[1].capacity(), i + 1, w[0].capacity())
            })
            .collect()
    }
}

/// A memory block as seen by one cache level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemoryBlock {
    pub level: usize,
    pub number: u64,
    pub set: u32,
}

pub fn block_of(address: u64, level_index: usize, level: &CacheLevelConfig) -> MemoryBlock {
    let number = address / u64::from(level.line_size);
    MemoryBlock { level: level_index, number, set: (number % u64::from(level.sets)) as u32 }
}

/// Exact contents of one cache level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteCacheState {
    config: CacheLevelConfig,
    sets: Vec<Vec<u64>>,
}

impl ConcreteCacheState {
    pub fn cold(config: CacheLevelConfig) -> Self {
        ConcreteCacheState { config, sets: vec![Vec::new(); config.sets as usize] }
    }

    pub fn set(&self, index: u32) -> &[u64] {
        &self.sets[index as usize]
    }

    /// 1-based position of `block` in its set.
    pub fn position(&self, block: u64) -> Option<usize> {
        let set = (block % u64::from(self.config.sets)) as usize;
        self.sets[set].iter().position(|&b| b == block).map(|p| p + 1)
    }

    pub fn simulate_access(&self, block: u64) -> (bool, ConcreteCacheState) {
        let mut next = self.clone();
        let hit = next.access(block);
        (hit, next)
    }

    pub fn access(&mut self, block: u64) -> bool {
        let set = &mut self.sets[(block % u64::from(self.config.sets)) as usize];
        match set.iter().position(|&b| b == block) {
            Some(p) => {
                self.config.policy.touch(set, p);
                true
            }
            None => {
                self.config.policy.fill(set, block, self.config.ways as usize);
                false
            }
        }
    }
}

/// Result of one access through the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    /// Level index that hit, `None` when served by main memory.
    pub hit_level: Option<usize>,
    pub cycles: u64,
}

impl AccessOutcome {
    /// Number of cache levels probed by this access.
    pub fn probed_levels(&self, level_count: usize) -> usize {
        self.hit_level.map_or(level_count, |l| l + 1)
    }

    pub fn probes(&self, level: usize) -> bool {
        self.hit_level.is_none_or(|h| level <= h)
    }

    pub fn hits(&self, level: usize) -> bool {
        self.hit_level == Some(level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyState {
    levels: Vec<ConcreteCacheState>,
    memory_latency: u64,
}

impl HierarchyState {
    pub fn cold(hier: &HierarchyConfig) -> Self {
        HierarchyState {
            levels: hier.levels.iter().map(|&l| ConcreteCacheState::cold(l)).collect(),
            memory_latency: hier.memory_latency,
        }
    }

    pub fn level(&self, index: usize) -> &ConcreteCacheState {
        &self.levels[index]
    }

    /// Probes L1, then each further level until one hits; every probed level
    /// is filled on a miss.
    pub fn access(&mut self, address: u64) -> AccessOutcome {
        let mut cycles = 0;
        for (i, level) in self.levels.iter_mut().enumerate() {
            cycles += level.config.hit_latency;
            let block = address / u64::from(level.config.line_size);
            if level.access(block) {
                return AccessOutcome { hit_level: Some(i), cycles };
            }
        }
        AccessOutcome { hit_level: None, cycles: cycles + self.memory_latency }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LevelCounts {
    pub probes: u64,
    pub hits: u64,
    pub misses: u64,
}

impl LevelCounts {
    pub fn tally(outcomes: impl IntoIterator<Item = AccessOutcome>, level_count: usize) -> Vec<LevelCounts> {
        let mut counts = vec![LevelCounts::default(); level_count];
        for o in outcomes {
            for (l, c) in counts.iter_mut().enumerate().take(o.probed_levels(level_count)) {
                c.probes += 1;
                if o.hits(l) {
                    c.hits += 1;
                } else {
                    c.misses += 1;
                }
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationResult {
    pub outcomes: Vec<AccessOutcome>,
    pub levels: Vec<LevelCounts>,
    pub total_cycles: u64,
}

pub fn simulate_hierarchy(hier: &HierarchyConfig, trace: &[u64]) -> SimulationResult {
    let mut state = HierarchyState::cold(hier);
    let outcomes: Vec<AccessOutcome> = trace.iter().map(|&a| state.access(a)).collect();
    let levels = LevelCounts::tally(outcomes.iter().copied(), hier.levels.len());
    let total_cycles = outcomes.iter().map(|o| o.cycles).sum();
    SimulationResult { outcomes, levels, total_cycles }
}

/// Position (1-based) of the accessed block in its set at `level` when
/// access `index` of `trace` reaches that level, or `ways + 1` when the block
/// has been evicted since its previous access at that level.
pub fn set_reuse_distance(
    hier: &HierarchyConfig,
    trace: &[u64],
    index: usize,
    level: usize,
) -> Result<usize, CacheError> {
    let config = *hier.levels.get(level).ok_or(CacheError::NoSuchLevel(level))?;
    if index >= trace.len() {
        return Err(CacheError::NoSuchAccess(index));
    }
    let line = u64::from(config.line_size);
    let block = trace[index] / line;
    let mut state = HierarchyState::cold(hier);
    let mut seen_before = false;
    for &address in &trace[..index] {
        let outcome = state.access(address);
        if outcome.probes(level) && address / line == block {
            seen_before = true;
        }
    }
    // The access probes `level` iff every level above it misses.
    let probed = (0..level).all(|l| {
        let lb = trace[index] / u64::from(hier.levels[l].line_size);
        state.levels[l].position(lb).is_none()
    });
    if !probed {
        return Err(CacheError::NotProbed { index, level });
    }
    if !seen_before {
        return Err(CacheError::NotRepeated { index, level });
    }
    Ok(state.levels[level].position(block).unwrap_or(config.ways as usize + 1))
}
