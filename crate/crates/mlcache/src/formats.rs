//! JSON program and hierarchy files, and plain-text address traces.
//!
//! Program file:
//!
//! ```json
//! {
//!   "instr_width": 4,
//!   "main": "main",
//!   "functions": {
//!     "main": {
//!       "blocks": [{"id": "b0", "addrs": [0, 4]}, {"id": "b1", "addrs": [8]}],
//!       "edges": [["b0", "b1"]],
//!       "entry": "b0",
//!       "exit": "b1",
//!       "loops": [{"header": "b1", "members": ["b1"], "bound": 10}],
//!       "calls": [{"site_block": "b0", "callee": "f"}]
//!     }
//!   }
//! }
//! ```
//!
//! `instr_width` defaults to 4, `main` to `"main"`, `loops` and `calls` to
//! empty lists. Unknown keys are rejected.
//!
//! Hierarchy file:
//!
//! ```json
//! {"levels": [{"sets": 4, "ways": 2, "line": 32, "latency": 1, "policy": "lru"}],
//!  "memory_latency": 100}
//! ```

use std::collections::BTreeMap;

use mlcache_core::{
    BlockSpec, CacheError, CacheLevelConfig, CallSpec, FunctionSpec, HierarchyConfig, LoopSpec, Policy, Program,
    ProgramError,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{what}: {source}")]
    Json { what: &'static str, source: serde_json::Error },
    #[error("invalid program: {0}")]
    Program(#[from] ProgramError),
    #[error("invalid hierarchy: {0}")]
    Hierarchy(#[from] CacheError),
    #[error("unknown replacement policy {0:?} (expected \"lru\" or \"fifo\")")]
    Policy(String),
    #[error("trace line {line}: cannot parse {text:?} as an address")]
    Trace { line: usize, text: String },
    #[error("trace is empty")]
    EmptyTrace,
}

fn default_width() -> u64 {
    Program::DEFAULT_INSTR_WIDTH
}

fn default_main() -> String {
    "main".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramFile {
    #[serde(default = "default_width")]
    pub instr_width: u64,
    #[serde(default = "default_main")]
    pub main: String,
    pub functions: BTreeMap<String, FunctionFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    pub blocks: Vec<BlockFile>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    pub entry: String,
    pub exit: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<CallFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockFile {
    pub id: String,
    pub addrs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopFile {
    pub header: String,
    pub members: Vec<String>,
    pub bound: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallFile {
    pub site_block: String,
    pub callee: String,
}

impl ProgramFile {
    pub fn into_program(self) -> Result<Program, ProgramError> {
        let functions = self
            .functions
            .into_iter()
            .map(|(name, f)| {
                let spec = FunctionSpec {
                    blocks: f.blocks.into_iter().map(|b| BlockSpec { id: b.id, addrs: b.addrs }).collect(),
                    edges: f.edges,
                    entry: f.entry,
                    exit: f.exit,
                    loops: f
                        .loops
                        .into_iter()
                        .map(|l| LoopSpec { header: l.header, members: l.members, bound: l.bound })
                        .collect(),
                    calls: f
                        .calls
                        .into_iter()
                        .map(|c| CallSpec { site_block: c.site_block, callee: c.callee })
                        .collect(),
                };
                (name, spec)
            })
            .collect();
        Program::new(self.instr_width, self.main, functions)
    }

    pub fn from_program(p: &Program) -> Self {
        let functions = p
            .functions()
            .iter()
            .map(|(name, f)| {
                let file = FunctionFile {
                    blocks: f.blocks.iter().map(|b| BlockFile { id: b.id.clone(), addrs: b.addrs.clone() }).collect(),
                    edges: f.edges.clone(),
                    entry: f.entry.clone(),
                    exit: f.exit.clone(),
                    loops: f
                        .loops
                        .iter()
                        .map(|l| LoopFile { header: l.header.clone(), members: l.members.clone(), bound: l.bound })
                        .collect(),
                    calls: f
                        .calls
                        .iter()
                        .map(|c| CallFile { site_block: c.site_block.clone(), callee: c.callee.clone() })
                        .collect(),
                };
                (name.clone(), file)
            })
            .collect();
        ProgramFile { instr_width: p.instr_width(), main: p.main().to_string(), functions }
    }
}

pub fn parse_program(text: &str) -> Result<Program, FormatError> {
    let file: ProgramFile =
        serde_json::from_str(text).map_err(|source| FormatError::Json { what: "program file", source })?;
    Ok(file.into_program()?)
}

pub fn program_to_json(p: &Program) -> String {
    serde_json::to_string_pretty(&ProgramFile::from_program(p)).expect("program serializes")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyFile {
    pub levels: Vec<LevelFile>,
    pub memory_latency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelFile {
    pub sets: u32,
    pub ways: u32,
    pub line: u32,
    pub latency: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
}

impl HierarchyFile {
    pub fn into_config(self) -> Result<HierarchyConfig, FormatError> {
        let levels = self
            .levels
            .into_iter()
            .map(|l| {
                let policy = match l.policy.as_deref().map(str::to_ascii_lowercase).as_deref() {
                    None | Some("lru") => Policy::Lru,
                    Some("fifo") => Policy::Fifo,
                    Some(_) => return Err(FormatError::Policy(l.policy.unwrap_or_default())),
                };
                Ok(CacheLevelConfig { sets: l.sets, ways: l.ways, line_size: l.line, hit_latency: l.latency, policy })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HierarchyConfig::new(levels, self.memory_latency)?)
    }

    pub fn from_config(h: &HierarchyConfig) -> Self {
        HierarchyFile {
            levels: h
                .levels()
                .iter()
                .map(|l| LevelFile {
                    sets: l.sets,
                    ways: l.ways,
                    line: l.line_size,
                    latency: l.hit_latency,
                    policy: Some(l.policy.name().to_string()),
                })
                .collect(),
            memory_latency: h.memory_latency(),
        }
    }
}

pub fn parse_hierarchy(text: &str) -> Result<HierarchyConfig, FormatError> {
    let file: HierarchyFile =
        serde_json::from_str(text).map_err(|source| FormatError::Json { what: "hierarchy file", source })?;
    file.into_config()
}

pub fn hierarchy_to_json(h: &HierarchyConfig) -> String {
    serde_json::to_string_pretty(&HierarchyFile::from_config(h)).expect("hierarchy serializes")
}

/// One address per line, decimal or `0x` hexadecimal. Blank lines and
/// `#` comments are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<u64>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parsed = match line.strip_prefix("0x").or_else(|| line.strip_prefix("0X")) {
            Some(hex) => u64::from_str_radix(hex, 16),
            None => line.parse(),
        };
        out.push(parsed.map_err(|_| FormatError::Trace { line: i + 1, text: line.to_string() })?);
    }
    if out.is_empty() {
        return Err(FormatError::EmptyTrace);
    }
    Ok(out)
}
