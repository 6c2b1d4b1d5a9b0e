use mlcache_core::harness::{build_counterexample, search_unsafety_witness, SearchSpace};
use mlcache_core::{CacheLevelConfig, Chmc, HierarchyConfig};

fn two_way() -> HierarchyConfig {
    HierarchyConfig::new(vec![CacheLevelConfig::lru(4, 2, 32, 1), CacheLevelConfig::lru(8, 2, 32, 10)], 100).unwrap()
}

fn direct_mapped() -> HierarchyConfig {
    HierarchyConfig::new(vec![CacheLevelConfig::lru(4, 1, 32, 1), CacheLevelConfig::lru(8, 1, 32, 10)], 100).unwrap()
}

#[test]
fn constructed_witness_costs() {
    let c = build_counterexample(&two_way()).unwrap();
    let w = &c.witness;
    assert_eq!((w.mueller_cost, w.concrete_worst_cost, w.safe_cost), (577, 667, 677));
    assert_eq!(w.worst_path, ["p", "r0", "r1", "s0", "s1", "s2", "s3"]);
    assert!(w.is_witness());

    let names: Vec<&str> = w.focus.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["s0#0", "s3#0"]);
    let (s0, s3) = (&w.focus[0], &w.focus[1]);
    assert_eq!(s0.mueller, [Chmc::NotClassified, Chmc::AlwaysHit]);
    assert_eq!(s3.mueller, [Chmc::AlwaysMiss, Chmc::AlwaysHit]);
    assert_eq!(s3.safe, [Chmc::AlwaysMiss, Chmc::NotClassified]);
    // s0 hits L1, s3 goes to memory
    assert_eq!((s0.concrete_level, s3.concrete_level), (Some(0), Some(2)));
    assert_eq!((s0.concrete_cost, s3.concrete_cost), (Some(1), Some(111)));
    assert_eq!(s0.reuse_distance[0], Some(2));
    assert_eq!(s3.reuse_distance, [Some(3), Some(3)]);

    assert_eq!(w.focus_mueller_cost(), 22);
    assert_eq!(w.focus_concrete_cost(), 112);
    assert_eq!(w.focus_safe_cost(), 122);
}

#[test]
fn construction_scales_with_geometry() {
    let h = HierarchyConfig::new(vec![CacheLevelConfig::lru(8, 2, 16, 1), CacheLevelConfig::lru(64, 2, 16, 10)], 100)
        .unwrap();
    let w = build_counterexample(&h).unwrap().witness;
    assert!(w.is_witness());
    assert_eq!((w.focus_mueller_cost(), w.focus_concrete_cost()), (22, 112));
}

#[test]
fn search_finds_a_witness_on_two_way_caches() {
    let out = search_unsafety_witness(&SearchSpace::default(), &two_way()).unwrap();
    let c = out.witness.expect("witness");
    let w = &c.witness;
    assert!(w.mueller_cost < w.concrete_worst_cost && w.concrete_worst_cost <= w.safe_cost);
    assert!(out.violations.is_empty());
    assert!(c.cfg.reference_count() <= 9);
}

#[test]
fn direct_mapped_space_has_no_unsafety() {
    let space = SearchSpace { stop_at_first: false, ..SearchSpace::default() };
    let out = search_unsafety_witness(&space, &direct_mapped()).unwrap();
    assert_eq!(out.candidates, 164_060);
    assert!(out.violations.is_empty(), "{:?}", out.violations.first());
    assert_eq!(out.unsafe_candidates, 0);
    assert!(out.witness.is_none());
}
