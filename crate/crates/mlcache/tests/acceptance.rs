//! Acceptance criteria, one verdict line each. Runs without the libtest
//! harness so the verdicts are always printed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mlcache::cli;
use mlcache::suites::{
    monotonicity_suite, soundness_sweep, Check, SweepConfig, SweepReport, AGGREGATE_BOUND, ALWAYS_HIT, ALWAYS_MISS,
    FIRST_MISS, HIERARCHY_BENEFIT, ITERATION_BUDGET,
};
use mlcache_core::{cac_next, presence_vectors, reference_cost, Cac, Chmc, CostModel, Flavor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SEED: u64 = 2024;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn zero_failures(check: Option<&Check>, name: &str) -> Result<u64, String> {
    let c = check.ok_or_else(|| format!("check {name:?} missing"))?;
    ensure(c.cases > 0, format!("{name}: no cases"))?;
    ensure(
        c.passed(),
        format!("{name}: {} of {} failed, e.g. {}", c.failures, c.cases, c.example.as_deref().unwrap_or("?")),
    )?;
    Ok(c.cases)
}

fn unsafety_reproduction() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bundle = dir.path().join("witness.json");
    let start = Instant::now();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(["mlcache", "demo-unsafety", "--out", bundle.to_str().unwrap()], &mut out, &mut err);
    let elapsed = start.elapsed();
    ensure(code == 0, format!("exit {code}: {}", String::from_utf8_lossy(&err)))?;
    let text = String::from_utf8_lossy(&out);
    ensure(
        text.contains("filtered analysis predicts 2 misses in L1 + 2 hits in L2"),
        "filtered classification is not 2 L1 misses + 2 L2 hits",
    )?;
    ensure(
        text.contains("worst path performs 1 hit in L1 + 1 miss in L1 + 1 miss in L2"),
        "worst path is not 1 L1 hit + 1 L1 miss + 1 L2 miss",
    )?;
    let w: Value = serde_json::from_str(&std::fs::read_to_string(&bundle).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    for key in ["program", "hierarchy", "mueller_cost", "safe_cost", "concrete_worst_cost", "worst_path"] {
        ensure(w.get(key).is_some(), format!("bundle lacks {key}"))?;
    }
    let n = |k: &str| w[k].as_u64().unwrap_or(u64::MAX);
    let (m, c, s) = (n("focus_mueller_cost"), n("focus_concrete_cost"), n("focus_safe_cost"));
    ensure((m, c) == (22, 112), format!("repeated reference costs {m} / {c}, expected 22 / 112"))?;
    ensure(m < c && c <= s, format!("not {m} < {c} <= {s}"))?;
    let (wm, wc, ws) = (n("mueller_cost"), n("concrete_worst_cost"), n("safe_cost"));
    ensure(wm < wc && wc <= ws, format!("whole program not {wm} < {wc} <= {ws}"))?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("repeated reference {m} < {c} <= {s} cycles, program {wm} < {wc} <= {ws}, {elapsed:.2?}"))
}

struct Sweep {
    report: SweepReport,
    programs: usize,
    hierarchies: usize,
    elapsed: Duration,
}

fn sweep_summary(s: &Sweep) -> String {
    format!(
        "{} programs x {} hierarchies, {} paths, {:.1?}",
        s.programs, s.hierarchies, s.report.observations.paths, s.elapsed
    )
}

fn soundness(s: &Sweep) -> Verdict {
    ensure(s.programs >= 1000 && s.hierarchies >= 5, "sweep too small")?;
    zero_failures(s.report.check(AGGREGATE_BOUND), AGGREGATE_BOUND)?;
    ensure(s.elapsed < Duration::from_secs(300), format!("took {:?}", s.elapsed))?;
    Ok(sweep_summary(s))
}

fn classification(s: &Sweep) -> Verdict {
    let ah = zero_failures(s.report.check(ALWAYS_HIT), ALWAYS_HIT)?;
    let am = zero_failures(s.report.check(ALWAYS_MISS), ALWAYS_MISS)?;
    let fm = zero_failures(s.report.check(FIRST_MISS), FIRST_MISS)?;
    Ok(format!("{ah} always-hit, {am} always-miss and {fm} first-miss checks"))
}

fn monotonicity() -> Verdict {
    const CASES: usize = 10_000;
    let start = Instant::now();
    let checks = monotonicity_suite(&mut ChaCha8Rng::seed_from_u64(SEED), CASES);
    let elapsed = start.elapsed();
    for c in &checks {
        zero_failures(Some(c), &c.name)?;
    }
    for f in Flavor::ALL {
        let flavored = |name: &str| checks.iter().find(|c| c.name == mlcache::suites::flavor_check(name, f));
        for name in [
            mlcache::suites::UPDATE_MONOTONE,
            mlcache::suites::JOIN_MONOTONE,
            mlcache::suites::JOIN_IDEMPOTENT,
            mlcache::suites::JOIN_COMMUTATIVE,
            mlcache::suites::JOIN_ASSOCIATIVE,
        ] {
            let c = flavored(name).ok_or_else(|| format!("{name} missing for {}", f.name()))?;
            ensure(c.cases >= CASES as u64, format!("{}: only {} cases", c.name, c.cases))?;
        }
    }
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("{CASES} cases per flavor, {} checks, {elapsed:.2?}", checks.len()))
}

fn access_table() -> Verdict {
    use Cac::*;
    use Chmc::*;
    let table = [
        (
            Always,
            [
                (AlwaysHit, Never),
                (AlwaysMiss, Always),
                (FirstHit, Uncertain),
                (FirstMiss, Uncertain),
                (NotClassified, Uncertain),
            ],
        ),
        (
            Never,
            [(AlwaysHit, Never), (AlwaysMiss, Never), (FirstHit, Never), (FirstMiss, Never), (NotClassified, Never)],
        ),
        (
            Uncertain,
            [
                (AlwaysHit, Never),
                (AlwaysMiss, Uncertain),
                (FirstHit, Uncertain),
                (FirstMiss, Uncertain),
                (NotClassified, Uncertain),
            ],
        ),
    ];
    let mut cells = 0;
    for (cac, row) in table {
        for (chmc, expected) in row {
            let got = cac_next(cac, chmc);
            ensure(got == expected, format!("({cac}, {chmc}) gives {got}, expected {expected}"))?;
            cells += 1;
        }
    }
    Ok(format!("{cells} cells"))
}

fn cost_formulas() -> Verdict {
    use Chmc::*;
    // three cache levels and memory
    let model = CostModel { latencies: vec![1, 10, 100, 1000] };
    type Row = ([Chmc; 3], [u8; 4], [u8; 4], u64, u64);
    let literal: [Row; 8] = [
        ([AlwaysHit, AlwaysHit, AlwaysHit], [1, 0, 0, 0], [1, 0, 0, 0], 1, 1),
        ([AlwaysMiss, AlwaysMiss, AlwaysMiss], [1, 1, 1, 1], [1, 1, 1, 1], 1111, 1111),
        ([FirstMiss, AlwaysHit, AlwaysHit], [1, 1, 0, 0], [1, 0, 0, 0], 11, 1),
        ([FirstHit, AlwaysHit, AlwaysHit], [1, 0, 0, 0], [1, 1, 0, 0], 1, 11),
        ([AlwaysMiss, FirstMiss, AlwaysMiss], [1, 1, 1, 1], [1, 1, 0, 0], 1111, 11),
        ([AlwaysMiss, FirstHit, NotClassified], [1, 1, 0, 0], [1, 1, 1, 1], 11, 1111),
        ([NotClassified, NotClassified, AlwaysHit], [1, 1, 1, 0], [1, 1, 1, 0], 111, 111),
        ([FirstMiss, FirstHit, FirstMiss], [1, 1, 0, 0], [1, 0, 0, 0], 11, 1),
    ];
    for (chmcs, pf, pn, cf, cn) in literal {
        let p = presence_vectors(&chmcs);
        let bits = |v: &[bool]| v.iter().map(|&b| u8::from(b)).collect::<Vec<_>>();
        ensure(bits(&p.first) == pf && bits(&p.next) == pn, format!("presence of {chmcs:?}: {p:?}"))?;
        let c = reference_cost(&p, &model);
        ensure((c.first, c.next) == (cf, cn), format!("cost of {chmcs:?}: {} / {}", c.first, c.next))?;
    }
    // every combination: a level is reached while all levels above miss
    let mut combos = 0;
    for a in Chmc::ALL {
        for b in Chmc::ALL {
            for c in Chmc::ALL {
                let chmcs = [a, b, c];
                let reach = |passes: &dyn Fn(Chmc) -> bool| -> u64 {
                    let depth = chmcs.iter().take_while(|&&x| passes(x)).count();
                    model.latencies[..=depth].iter().sum()
                };
                let first = reach(&|x| matches!(x, AlwaysMiss | FirstMiss | NotClassified));
                let next = reach(&|x| matches!(x, AlwaysMiss | FirstHit | NotClassified));
                let got = reference_cost(&presence_vectors(&chmcs), &model);
                ensure((got.first, got.next) == (first, next), format!("{chmcs:?}: {} / {}", got.first, got.next))?;
                combos += 1;
            }
        }
    }
    Ok(format!("{} literal rows, {combos} combinations", literal.len()))
}

fn hierarchy_benefit(s: &Sweep) -> Verdict {
    let n = zero_failures(s.report.check(HIERARCHY_BENEFIT), HIERARCHY_BENEFIT)?;
    Ok(format!("{n} runs"))
}

fn termination(s: &Sweep) -> Verdict {
    zero_failures(s.report.check(ITERATION_BUDGET), ITERATION_BUDGET)?;
    let o = &s.report.observations;
    ensure(o.max_budget_use <= 1.0, "budget exceeded")?;
    Ok(format!("{} solves, at most {:.1}% of the budget", o.solves, 100.0 * o.max_budget_use))
}

fn main() -> ExitCode {
    let config = SweepConfig::default();
    let start = Instant::now();
    let report = soundness_sweep(&mut ChaCha8Rng::seed_from_u64(SEED), &config);
    let sweep = Sweep { report, programs: config.programs, hierarchies: config.hierarchies, elapsed: start.elapsed() };

    let criteria: [Criterion; 8] = [
        ("unsafety reproduction", Box::new(unsafety_reproduction)),
        ("soundness sweep", Box::new(|| soundness(&sweep))),
        ("classification soundness", Box::new(|| classification(&sweep))),
        ("monotonicity", Box::new(monotonicity)),
        ("access classification table", Box::new(access_table)),
        ("cost formulas", Box::new(cost_formulas)),
        ("hierarchy benefit", Box::new(|| hierarchy_benefit(&sweep))),
        ("termination bound", Box::new(|| termination(&sweep))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("[PASS] criterion {}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
