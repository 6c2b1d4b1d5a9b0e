//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error (unreadable or invalid
//! file, path cap reached, no witness), 3 soundness violation.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use mlcache_core::harness::{build_counterexample, enumerate_worst, DEFAULT_MAX_PATHS};
use mlcache_core::{
    analyze, l1_only_contribution, simulate_hierarchy, wcet_contribution, AnalysisMode, CacheLevelConfig, CostModel,
    HarnessError, HierarchyConfig, Program,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::formats::{parse_hierarchy, parse_program, parse_trace};
use crate::report::{l1_only_miss_latency, AnalysisReport, SimulationReport, VerifyReport, WitnessReport};
use crate::suites::{check_run, monotonicity_suite, soundness_sweep, Checks, Observations, SweepConfig, SweepReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mlcache", version, about = "Multi-level instruction cache analysis for WCET estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every fetch at every level and bound the cache contribution.
    Analyze {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        caches: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Treat every non-always-hit fetch as a certain access to the next
        /// level. Unsafe for set-associative caches.
        #[arg(long)]
        mueller: bool,
        /// Cap on enumerated paths for the measured worst case.
        #[arg(long, default_value_t = DEFAULT_MAX_PATHS)]
        max_paths: usize,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the concrete cache simulator on a trace or a program.
    Simulate {
        #[arg(long)]
        caches: PathBuf,
        /// One address per line, hex (0x..) or decimal.
        #[arg(long, conflicts_with = "program")]
        trace: Option<PathBuf>,
        #[arg(long, required_unless_present = "trace")]
        program: Option<PathBuf>,
        /// Comma-separated block names; defaults to the worst path.
        #[arg(long, requires = "program", value_delimiter = ',')]
        path: Option<Vec<String>>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long, default_value_t = DEFAULT_MAX_PATHS)]
        max_paths: usize,
    },
    /// Run the domain property suites and the exhaustive soundness sweep.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random cases per abstract domain.
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
        #[arg(long, default_value_t = 1000)]
        programs: usize,
        #[arg(long, default_value_t = 5)]
        hierarchies: usize,
        /// Check this program only, against `--caches`.
        #[arg(long, requires = "caches")]
        program: Option<PathBuf>,
        #[arg(long, requires = "program")]
        caches: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long, default_value_t = DEFAULT_MAX_PATHS)]
        max_paths: usize,
    },
    /// Build a program on which the filtered analysis under-estimates the
    /// worst path, and write it as a witness bundle.
    DemoUnsafety {
        /// Two 2-way LRU levels; defaults to 4 and 8 sets of 32 B lines with
        /// latencies 1, 10 and 100.
        #[arg(long)]
        caches: Option<PathBuf>,
        #[arg(long, default_value = "witness.json")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

enum Failure {
    Input(anyhow::Error),
    Violation(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_INPUT
        }
        Err(Failure::Violation(msg)) => {
            let _ = writeln!(err, "soundness violation: {msg}");
            EXIT_VIOLATION
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_program(path: &Path) -> anyhow::Result<Program> {
    parse_program(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_hierarchy(path: &Path) -> anyhow::Result<HierarchyConfig> {
    parse_hierarchy(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn emit<T: Serialize>(
    out: &mut dyn Write,
    format: Format,
    report: &T,
    text: impl FnOnce() -> String,
) -> anyhow::Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(report)?)?,
        Format::Text => write!(out, "{}", text())?,
    }
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Analyze { program, caches, format, mueller, max_paths, out: target } => {
            let program = load_program(&program)?;
            let hier = load_hierarchy(&caches)?;
            for w in hier.warnings() {
                let _ = writeln!(err, "warning: {w}");
            }
            let mode = if mueller {
                let _ = writeln!(
                    err,
                    "WARNING: --mueller treats every fetch that is not an always-hit as a certain access to the \
                     next level; the result can be below the real worst case"
                );
                AnalysisMode::Mueller
            } else {
                AnalysisMode::Safe
            };
            let cfg = program.to_cfg().map_err(anyhow::Error::from)?;
            let analysis = analyze(&cfg, &hier, mode).map_err(anyhow::Error::from)?;
            let cost = wcet_contribution(&cfg, &analysis, &CostModel::from_hierarchy(&hier));
            let l1_only =
                l1_only_contribution(&cfg, &analysis.levels[0], hier.level(0).hit_latency, l1_only_miss_latency(&hier));
            let worst = match enumerate_worst(&cfg, &hier, max_paths) {
                Ok(w) => Some(w),
                Err(HarnessError::PathExplosion(n)) => {
                    let _ = writeln!(err, "warning: more than {n} paths, measured worst case skipped");
                    None
                }
                Err(e) => return Err(anyhow::Error::from(e).into()),
            };
            let report = AnalysisReport::new(&cfg, &hier, &analysis, &cost, l1_only, worst.as_ref());
            match target {
                Some(path) => {
                    let mut f =
                        std::fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
                    emit(&mut f, format, &report, || report.to_text())?;
                }
                None => emit(out, format, &report, || report.to_text())?,
            }
            match worst {
                Some(w) if mode == AnalysisMode::Safe && cost.total < w.cycles => Err(Failure::Violation(format!(
                    "bound {} is below the measured worst path {}",
                    cost.total, w.cycles
                ))),
                _ => Ok(()),
            }
        }
        Command::Simulate { caches, trace, program, path, format, max_paths } => {
            let hier = load_hierarchy(&caches)?;
            let (addresses, names) = match (trace, program) {
                (Some(t), _) => (parse_trace(&read(&t)?).with_context(|| format!("in {}", t.display()))?, None),
                (None, Some(p)) => {
                    let cfg = load_program(&p)?.to_cfg().map_err(anyhow::Error::from)?;
                    let blocks = match path {
                        Some(names) => names
                            .iter()
                            .map(|n| cfg.block_index(n).ok_or_else(|| anyhow!("no block named {n:?}")))
                            .collect::<anyhow::Result<Vec<usize>>>()?,
                        None => enumerate_worst(&cfg, &hier, max_paths).map_err(anyhow::Error::from)?.blocks,
                    };
                    for w in blocks.windows(2) {
                        if !cfg.succs(w[0]).contains(&w[1]) {
                            return Err(
                                anyhow!("no edge from {} to {}", cfg.block(w[0]).name, cfg.block(w[1]).name).into()
                            );
                        }
                    }
                    let addrs = blocks.iter().flat_map(|&b| cfg.block(b).refs.iter().map(|r| r.address)).collect();
                    (addrs, Some(blocks.iter().map(|&b| cfg.block(b).name.clone()).collect()))
                }
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let sim = simulate_hierarchy(&hier, &addresses);
            let report = SimulationReport::new(&hier, &sim, names);
            emit(out, format, &report, || report.to_text())?;
            Ok(())
        }
        Command::Verify { seed, cases, programs, hierarchies, program, caches, format, max_paths } => {
            let report = match (program, caches) {
                (Some(p), Some(c)) => {
                    let program = load_program(&p)?;
                    let hier = load_hierarchy(&c)?;
                    let cfg = program.to_cfg().map_err(anyhow::Error::from)?;
                    let mut checks = Checks::default();
                    let mut observations = Observations::default();
                    check_run(&program, &cfg, &hier, max_paths, true, &mut checks, &mut observations);
                    let sweep = SweepReport { runs: 1, checks: checks.into_vec(), observations };
                    VerifyReport::new(seed, None, 1, 1, sweep)
                }
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mono = monotonicity_suite(&mut rng, cases);
                    let config = SweepConfig { programs, hierarchies, max_paths, ..SweepConfig::default() };
                    let sweep = soundness_sweep(&mut rng, &config);
                    VerifyReport::new(seed, Some(mono), programs, hierarchies, sweep)
                }
            };
            emit(out, format, &report, || report.to_text())?;
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Violation("property checks failed".into()))
            }
        }
        Command::DemoUnsafety { caches, out: target, format } => {
            let hier = match caches {
                Some(c) => load_hierarchy(&c)?,
                None => default_demo_hierarchy(),
            };
            let c = build_counterexample(&hier).map_err(anyhow::Error::from)?;
            let report = WitnessReport::new(&c);
            let bundle = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
            std::fs::write(&target, bundle + "\n").with_context(|| format!("cannot write {}", target.display()))?;
            emit(out, format, &report, || report.to_text())?;
            if format == Format::Text {
                let _ = writeln!(out, "witness written to {}", target.display());
            }
            if report.safe_cost < report.concrete_worst_cost {
                Err(Failure::Violation(format!(
                    "safe bound {} is below the worst path {}",
                    report.safe_cost, report.concrete_worst_cost
                )))
            } else {
                Ok(())
            }
        }
    }
}

pub fn default_demo_hierarchy() -> HierarchyConfig {
    HierarchyConfig::new(vec![CacheLevelConfig::lru(4, 2, 32, 1), CacheLevelConfig::lru(8, 2, 32, 10)], 100)
        .expect("valid geometry")
}
