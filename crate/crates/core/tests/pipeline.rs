use std::collections::BTreeMap;

use mlcache_core::harness::enumerate_worst;
use mlcache_core::program::expanded_reference_count;
use mlcache_core::{
    analyze, simulate_hierarchy, wcet_contribution, AnalysisMode, BlockSpec, CacheLevelConfig, CallSpec, Chmc,
    CostModel, FunctionSpec, HierarchyConfig, LoopSpec, Program,
};

fn block(id: &str, addrs: &[u64]) -> BlockSpec {
    BlockSpec { id: id.into(), addrs: addrs.to_vec() }
}

fn edges(list: &[(&str, &str)]) -> Vec<(String, String)> {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn hier() -> HierarchyConfig {
    HierarchyConfig::new(vec![CacheLevelConfig::lru(2, 2, 16, 1), CacheLevelConfig::lru(4, 2, 32, 10)], 100).unwrap()
}

/// main loops over a call to `f`, which calls `g` twice.
fn three_functions() -> Program {
    let main = FunctionSpec {
        blocks: vec![block("in", &[0]), block("h", &[4, 8]), block("out", &[12])],
        edges: edges(&[("in", "h"), ("h", "h"), ("h", "out")]),
        entry: "in".into(),
        exit: "out".into(),
        loops: vec![LoopSpec { header: "h".into(), members: vec!["h".into()], bound: 3 }],
        calls: vec![CallSpec { site_block: "h".into(), callee: "f".into() }],
    };
    let f = FunctionSpec {
        blocks: vec![block("a", &[256]), block("b", &[260, 264])],
        edges: edges(&[("a", "b")]),
        entry: "a".into(),
        exit: "b".into(),
        calls: vec![
            CallSpec { site_block: "a".into(), callee: "g".into() },
            CallSpec { site_block: "b".into(), callee: "g".into() },
        ],
        ..FunctionSpec::default()
    };
    let g = FunctionSpec {
        blocks: vec![block("x", &[512, 516, 520])],
        entry: "x".into(),
        exit: "x".into(),
        ..FunctionSpec::default()
    };
    let functions = BTreeMap::from([("main".to_string(), main), ("f".to_string(), f), ("g".to_string(), g)]);
    Program::new(4, "main", functions).unwrap()
}

#[test]
fn calls_are_expanded_per_context() {
    let p = three_functions();
    let cfg = p.to_cfg().unwrap();
    // main 3 blocks, f 2 blocks, g once per call site in f
    assert_eq!(cfg.blocks().len(), 3 + 2 + 2);
    assert_eq!(cfg.reference_count(), expanded_reference_count(&p, "main"));
    assert_eq!(cfg.reference_count(), 4 + 3 + 2 * 3);
    // the callee body stays inside the loop
    let h = cfg.block_index("h").unwrap();
    let l = cfg.loops().iter().find(|l| l.header == h).unwrap();
    assert_eq!(l.members.len(), 5);
}

#[test]
fn safe_bound_covers_worst_path_with_calls() {
    let p = three_functions();
    let cfg = p.to_cfg().unwrap();
    let h = hier();
    let a = analyze(&cfg, &h, AnalysisMode::Safe).unwrap();
    let cost = wcet_contribution(&cfg, &a, &CostModel::from_hierarchy(&h));
    let worst = enumerate_worst(&cfg, &h, 1000).unwrap();
    // one path per header count 1..=3
    assert_eq!(worst.paths, 3);
    assert!(cost.total >= worst.cycles, "{} < {}", cost.total, worst.cycles);
}

#[test]
fn cold_straight_line_bound_is_exact() {
    // every fetch is to a new line: all misses, and the bound equals the run
    let body = FunctionSpec {
        blocks: vec![block("a", &[0]), block("b", &[64]), block("c", &[128]), block("d", &[192])],
        edges: edges(&[("a", "b"), ("b", "c"), ("c", "d")]),
        entry: "a".into(),
        exit: "d".into(),
        ..FunctionSpec::default()
    };
    let cfg = Program::single(4, body).unwrap().to_cfg().unwrap();
    let h = hier();
    let a = analyze(&cfg, &h, AnalysisMode::Safe).unwrap();
    assert!(cfg.refs().all(|r| a.chmcs(r.id) == [Chmc::AlwaysMiss, Chmc::AlwaysMiss]));
    let cost = wcet_contribution(&cfg, &a, &CostModel::from_hierarchy(&h));
    let sim = simulate_hierarchy(&h, &[0, 64, 128, 192]);
    assert_eq!(cost.total, sim.total_cycles);
    assert_eq!(cost.total, 4 * 111);
}
