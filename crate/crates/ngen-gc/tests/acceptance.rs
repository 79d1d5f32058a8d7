//! Acceptance suite: every criterion is a test that checks its stated
//! threshold and prints one PASS line (visible with `--nocapture`).

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ngen_gc::allocator::{self, ThreadContext};
use ngen_gc::collector::{self, CollectionKind, CollectionOutcome};
use ngen_gc::heap::{Heap, HeapConfig, OLD_GEN};
use ngen_gc::object_model::ObjectRef;
use ngen_gc::profiler::Profiler;
use ngen_gc::workload::{
    render_run_log, run_workload, run_workload_with, RunOutput, WorkloadSpec,
};

fn bundled_spec(name: &str) -> WorkloadSpec {
    let path = format!("{}/workloads/{name}.toml", env!("CARGO_MANIFEST_DIR"));
    WorkloadSpec::from_toml_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| {
        panic!("cannot read bundled workload {path}: {e}");
    }))
    .unwrap()
}

struct Paired {
    label: String,
    baseline: RunOutput,
    pretenured: RunOutput,
}

fn run_pair(mut spec: WorkloadSpec, seed: u64, label: String) -> Paired {
    let started = Instant::now();
    spec.seed = seed;
    let config = HeapConfig::default();
    spec.pretenure = false;
    let baseline = run_workload(&spec, &config).unwrap();
    spec.pretenure = true;
    let pretenured = run_workload(&spec, &config).unwrap();
    assert!(!baseline.aborted && !pretenured.aborted, "{label}: run aborted");
    assert!(
        started.elapsed().as_secs() < 60,
        "{label}: paired run exceeded 60 s"
    );
    Paired {
        label,
        baseline,
        pretenured,
    }
}

/// Buffer workload pairs over five fixed seeds (criteria 1–3, 9).
fn buffer_pairs() -> &'static [Paired] {
    static PAIRS: OnceLock<Vec<Paired>> = OnceLock::new();
    PAIRS.get_or_init(|| {
        [11u64, 22, 33, 44, 55]
            .iter()
            .map(|&seed| run_pair(bundled_spec("buffer"), seed, format!("buffer/seed{seed}")))
            .collect()
    })
}

/// One pair per bundled workload at its fixture seed (criteria 3, 9).
fn bundled_pairs() -> &'static [Paired] {
    static PAIRS: OnceLock<Vec<Paired>> = OnceLock::new();
    PAIRS.get_or_init(|| {
        ["buffer", "batch", "churn", "mixed"]
            .iter()
            .map(|name| {
                let spec = bundled_spec(name);
                let seed = spec.seed;
                run_pair(spec, seed, format!("{name}/seed{seed}"))
            })
            .collect()
    })
}

#[test]
fn criterion_01_copy_reduction_on_buffer_across_seeds() {
    for pair in buffer_pairs() {
        let base = pair.baseline.metrics.total_bytes_copied;
        let pre = pair.pretenured.metrics.total_bytes_copied;
        assert!(base > 0, "{}: baseline copied nothing", pair.label);
        assert!(
            (pre as f64) <= 0.5 * base as f64,
            "{}: pretenured copies {pre} exceed half of baseline {base}",
            pair.label
        );
    }
    println!("ACCEPTANCE 1 PASS: buffer bytes_copied with pretenuring <= 0.5x baseline on 5 seeds");
}

#[test]
fn criterion_02_worst_pause_reduction_on_buffer() {
    for pair in buffer_pairs() {
        let base = &pair.baseline.metrics.pause_cost_percentiles;
        let pre = &pair.pretenured.metrics.pause_cost_percentiles;
        assert!(
            pre.p100 <= 0.6 * base.p100,
            "{}: p100 {} vs baseline {}",
            pair.label,
            pre.p100,
            base.p100
        );
        for ((name, b), (_, p)) in base.as_rows().into_iter().zip(pre.as_rows()) {
            assert!(
                p <= 1.1 * b + 1e-9,
                "{}: percentile {name} regressed: {p} vs baseline {b}",
                pair.label
            );
        }
    }
    println!("ACCEPTANCE 2 PASS: p100 pause cost <= 0.6x baseline, no percentile above 1.1x");
}

#[test]
fn criterion_03_remembered_set_non_regression() {
    let mut checked = Vec::new();
    for pair in buffer_pairs() {
        checked.push(pair);
    }
    for pair in bundled_pairs()
        .iter()
        .filter(|p| p.label.starts_with("buffer") || p.label.starts_with("batch"))
    {
        checked.push(pair);
    }
    for pair in checked {
        let base = pair.baseline.metrics.total_rset_updates;
        let pre = pair.pretenured.metrics.total_rset_updates;
        assert!(
            pre as f64 <= 1.05 * base as f64,
            "{}: rset updates {pre} exceed 1.05x baseline {base}",
            pair.label
        );
    }
    println!("ACCEPTANCE 3 PASS: rset updates with pretenuring <= 1.05x baseline on buffer and batch");
}

// ── criterion 4: reachability oracle fuzz ──────────────────────────────

struct GraphTrial {
    heap: Heap,
}

fn build_random_graph(rng: &mut ChaCha8Rng, big: bool) -> GraphTrial {
    let config = if big {
        HeapConfig {
            heap_bytes: 16 << 20,
            region_bytes: 16 << 10,
            gen0_max_bytes: 8 << 20,
            tlab_bytes: 512,
            ..HeapConfig::default()
        }
    } else {
        HeapConfig {
            heap_bytes: 4 << 20,
            region_bytes: 16 << 10,
            gen0_max_bytes: 512 << 10,
            tlab_bytes: 512,
            ..HeapConfig::default()
        }
    };
    let heap = Heap::new(config).unwrap();
    let mut ctx = ThreadContext::new(&heap);
    let classes: Vec<(ngen_gc::object_model::ClassId, u32)> = (0u32..4)
        .flat_map(|slots| {
            [8u32, 40]
                .iter()
                .map(move |&payload| (slots, payload))
                .collect::<Vec<_>>()
        })
        .map(|(slots, payload)| (heap.register_class(slots, payload, false), slots))
        .collect();

    let mut gens = vec![ngen_gc::heap::GEN0, OLD_GEN];
    for _ in 0..rng.gen_range(1..4) {
        gens.push(allocator::new_generation(&heap, &mut ctx));
    }
    let n = if big { 100_000 } else { rng.gen_range(50..1500) };
    let mut objects = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.gen_bool(0.05) {
            let g = gens[rng.gen_range(0..gens.len())];
            allocator::set_generation(&heap, &mut ctx, g).unwrap();
        }
        let (class, slots) = classes[rng.gen_range(0..classes.len())];
        let obj = ctx.allocate(&heap, class, rng.gen_bool(0.4)).unwrap();
        heap.write_payload_word(obj, 0, rng.gen()).unwrap();
        objects.push((obj, slots));
    }
    // Random cross-generation references.
    for _ in 0..n {
        let (a, slots) = objects[rng.gen_range(0..objects.len())];
        if slots == 0 {
            continue;
        }
        let (b, _) = objects[rng.gen_range(0..objects.len())];
        heap.write_ref(a, rng.gen_range(0..slots), Some(b)).unwrap();
    }
    let mut roots = Vec::new();
    for _ in 0..(n / 10).max(1) {
        let (obj, _) = objects[rng.gen_range(0..objects.len())];
        roots.push(heap.register_root(obj).unwrap());
    }
    // Kill a random half of the roots to make garbage.
    let keep = roots.len() / 2;
    for h in roots.drain(keep..) {
        heap.unregister_root(h).unwrap();
    }
    // The surviving roots and the object list drop here; the heap carries
    // everything the oracle needs.
    drop(roots);
    drop(objects);
    GraphTrial { heap }
}

fn check_collection_against_oracle(heap: &Heap, kind: CollectionKind) {
    if kind == CollectionKind::Mixed {
        collector::run_marking(heap);
    }
    heap.retire_all_tlabs();
    let pre = heap.dump();
    let pre_objects = common::objects_in_dump(&pre);
    let pre_canon = common::canonical_graph(&pre);

    collector::collect(heap, kind).unwrap();
    let outcome = heap.last_collection_outcome().unwrap();
    let cs = outcome.collected_regions.clone();

    // Survivor set equals the BFS oracle exactly.
    let expected = common::expected_survivors(&pre, &pre_objects, &cs);
    let actual: BTreeSet<ObjectRef> = outcome.forwarding.keys().copied().collect();
    assert_eq!(actual, expected, "survivor set diverges from oracle");

    // Application-visible graph is unchanged.
    let post = heap.dump();
    assert_eq!(pre_canon, common::canonical_graph(&post), "graph shape changed");

    let post_objects = common::objects_in_dump(&post);
    // Survivors were copied bit-faithfully.
    for (src, dst) in &outcome.forwarding {
        let before = &pre_objects[src];
        let after = post_objects
            .get(dst)
            .unwrap_or_else(|| panic!("survivor {src} missing at {dst}"));
        assert_eq!(
            (before.class, before.size, &before.payload),
            (after.class, after.size, &after.payload),
            "survivor content changed"
        );
    }
    // Uncollected regions untouched except reference rewrites.
    for (at, before) in &pre_objects {
        if cs.contains(&at.region) || outcome.marking_released.contains(&at.region) {
            continue;
        }
        let now = post_objects
            .get(at)
            .unwrap_or_else(|| panic!("uncollected object {at} vanished"));
        assert_eq!(
            (before.class, before.size, before.age, &before.payload),
            (now.class, now.size, now.age, &now.payload),
            "uncollected object mutated at {at}"
        );
        for (s, pre_t) in before.slots.iter().enumerate() {
            let want = pre_t
                .map(|t| *outcome.forwarding.get(&t).unwrap_or(&t))
                .filter(|t| !outcome.marking_released.contains(&t.region));
            assert_eq!(now.slots[s], want, "slot {s} of {at} fixed up wrong");
        }
    }
    // Remembered sets are exact right after the collection.
    assert_eq!(
        common::remembered_sets_of(&post),
        common::cross_region_reference_map(&post),
        "remembered sets diverge from slot scan after collection"
    );
}

#[test]
fn criterion_04_reachability_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4ac5);
    for trial in 0..1000u32 {
        let big = trial % 400 == 399; // three 100k-object graphs
        let t = build_random_graph(&mut rng, big);
        let kind = match rng.gen_range(0..3) {
            0 => CollectionKind::Minor,
            1 => CollectionKind::Mixed,
            _ => CollectionKind::Full,
        };
        check_collection_against_oracle(&t.heap, kind);
        drop(t);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "fuzz exceeded 5 minutes: {elapsed:?}");
    println!("ACCEPTANCE 4 PASS: 1000 randomized graphs match the reachability oracle ({elapsed:?})");
}

#[test]
fn criterion_05_remembered_set_completeness_fuzz() {
    let started = Instant::now();
    let config = HeapConfig {
        heap_bytes: 256 << 10,
        region_bytes: 16 << 10,
        gen0_max_bytes: 32 << 10,
        tlab_bytes: 512,
        ..HeapConfig::default()
    };
    let heap = Heap::new(config).unwrap();
    let mut ctx = ThreadContext::new(&heap);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e75);
    let classes: Vec<ngen_gc::object_model::ClassId> = (1u32..=3)
        .map(|slots| heap.register_class(slots, 16, false))
        .collect();
    let mut gens = vec![ngen_gc::heap::GEN0, OLD_GEN];
    let mut pool: Vec<(ngen_gc::object_model::RootHandle, u32)> = Vec::new();

    let check = |heap: &Heap| {
        heap.retire_all_tlabs();
        let dump = heap.dump();
        assert_eq!(
            common::remembered_sets_of(&dump),
            common::cross_region_reference_map(&dump),
            "remembered sets diverge from the full-slot-scan oracle"
        );
    };

    for sequence in 0..10_000u32 {
        for _ in 0..10 {
            let roll = rng.gen::<f64>();
            if roll < 0.4 || pool.len() < 4 {
                if rng.gen_bool(0.1) && gens.len() < 12 {
                    gens.push(allocator::new_generation(&heap, &mut ctx));
                }
                if rng.gen_bool(0.3) {
                    let g = gens[rng.gen_range(0..gens.len())];
                    allocator::set_generation(&heap, &mut ctx, g).unwrap();
                }
                let slots = rng.gen_range(1..=3);
                let class = classes[(slots - 1) as usize];
                let obj = ctx.allocate(&heap, class, rng.gen_bool(0.5)).unwrap();
                pool.push((heap.register_root(obj).unwrap(), slots));
            } else if roll < 0.8 {
                let (ha, slots_a) = pool[rng.gen_range(0..pool.len())];
                let (hb, _) = pool[rng.gen_range(0..pool.len())];
                let a = heap.resolve_root(ha).unwrap();
                let b = heap.resolve_root(hb).unwrap();
                heap.write_ref(a, rng.gen_range(0..slots_a), Some(b)).unwrap();
            } else if roll < 0.9 {
                let (ha, slots_a) = pool[rng.gen_range(0..pool.len())];
                let a = heap.resolve_root(ha).unwrap();
                heap.write_ref(a, rng.gen_range(0..slots_a), None).unwrap();
            } else {
                let idx = rng.gen_range(0..pool.len());
                let (h, _) = pool.swap_remove(idx);
                heap.unregister_root(h).unwrap();
            }
            while pool.len() > 300 {
                let (h, _) = pool.swap_remove(rng.gen_range(0..pool.len()));
                heap.unregister_root(h).unwrap();
            }
        }
        check(&heap);
        if sequence % 37 == 36 {
            // Check held immediately before a collection, then collect.
            let kind = match rng.gen_range(0..3) {
                0 => CollectionKind::Minor,
                1 => CollectionKind::Mixed,
                _ => CollectionKind::Full,
            };
            if kind == CollectionKind::Mixed {
                collector::run_marking(&heap);
                check(&heap);
            }
            collector::collect(&heap, kind).unwrap();
        }
    }
    let elapsed = started.elapsed();
    println!("ACCEPTANCE 5 PASS: remembered sets equal the slot-scan oracle over 10000 mutation sequences ({elapsed:?})");
}

// ── criterion 6: allocation algorithm conformance ──────────────────────

#[test]
fn criterion_06_allocation_routing_and_size_class_conformance() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa110c);
    for _program in 0..10_000u32 {
        let config = HeapConfig {
            heap_bytes: 512 << 10,
            region_bytes: 16 << 10,
            gen0_max_bytes: 32 << 10,
            tlab_bytes: 1024, // large-object threshold at exactly 128
            ..HeapConfig::default()
        };
        let heap = Heap::new(config).unwrap();
        let mut ctx = ThreadContext::new(&heap);
        let mut created = vec![ngen_gc::heap::GEN0, OLD_GEN];
        let mut tlab_allocated_gens: BTreeSet<u32> = BTreeSet::new();
        let mut class_cache: HashMap<(u32, bool), ngen_gc::object_model::ClassId> = HashMap::new();

        for step in 0..25u32 {
            let roll = rng.gen::<f64>();
            if roll < 0.15 {
                created.push(allocator::new_generation(&heap, &mut ctx));
                continue;
            }
            if roll < 0.3 {
                let g = created[rng.gen_range(0..created.len())];
                allocator::set_generation(&heap, &mut ctx, g).unwrap();
                continue;
            }
            // Sizes cover the exact boundary every program.
            let size = match step % 5 {
                0 => 120,
                1 => 128,
                _ => 24 + 8 * rng.gen_range(0..36), // 24..304
            };
            let is_array = rng.gen_bool(0.2);
            let pretenure = rng.gen_bool(0.5);
            let class = *class_cache
                .entry((size, is_array))
                .or_insert_with(|| heap.register_class(0, size - 16, is_array));

            let expected_gen = if pretenure {
                allocator::get_generation(&ctx)
            } else {
                ngen_gc::heap::GEN0
            };
            let obj = ctx.allocate(&heap, class, pretenure).unwrap();

            // Routing invariant: region owned by the expected generation.
            assert!(
                heap.generation_info(expected_gen)
                    .unwrap()
                    .regions
                    .contains(&obj.region),
                "object routed outside generation {expected_gen}"
            );
            // Size-class invariant at exact equality: size >= tlab/8 never
            // lands inside the TLAB extent, smaller non-arrays always do.
            let extent = ctx.tlab_extent(expected_gen);
            let inside = extent
                .map(|(r, start, end)| r == obj.region && obj.offset >= start && obj.offset < end)
                .unwrap_or(false);
            if size >= 128 {
                assert!(!inside, "size {size} >= tlab/8 allocated inside a TLAB");
            } else if !is_array {
                assert!(inside, "size {size} < tlab/8 allocated outside its TLAB");
            }
            if size < 128 {
                tlab_allocated_gens.insert(expected_gen);
            }
            // Lazy-TLAB invariant: exactly the generations TLAB-allocated into.
            assert_eq!(
                ctx.tlab_generations(),
                tlab_allocated_gens.iter().copied().collect::<Vec<u32>>(),
                "TLAB set diverges from the generations actually used"
            );
        }
    }

    // Collect-and-retry path: exhaustion triggers one collection; if it
    // frees memory the retry succeeds, otherwise the caller sees OOM.
    let config = HeapConfig {
        heap_bytes: 128 << 10,
        region_bytes: 32 << 10,
        gen0_max_bytes: 64 << 10,
        tlab_bytes: 1024,
        ..HeapConfig::default()
    };
    let heap = Heap::new(config).unwrap();
    let mut ctx = ThreadContext::new(&heap);
    let gen = allocator::new_generation(&heap, &mut ctx);
    let class = heap.register_class(0, (30 << 10) - 16, false);
    for _ in 0..8 {
        ctx.allocate(&heap, class, true).unwrap(); // garbage: GC-and-retry frees it
    }
    assert!(heap.epoch() > 0, "exhaustion never triggered a collection");
    allocator::set_generation(&heap, &mut ctx, gen).unwrap();
    let mut held = Vec::new();
    let oom = loop {
        match ctx.allocate(&heap, class, true) {
            Ok(obj) => held.push(heap.register_root(obj).unwrap()),
            Err(e) => break e,
        }
        assert!(held.len() < 8, "heap never saturated");
    };
    assert_eq!(oom, ngen_gc::error::HeapError::OutOfMemory);

    let elapsed = started.elapsed();
    println!("ACCEPTANCE 6 PASS: routing, size-class boundary, lazy TLABs, and collect-and-retry over 10000 programs ({elapsed:?})");
}

#[test]
fn criterion_07_generation_lifecycle() {
    let heap = Heap::new(HeapConfig {
        heap_bytes: 4 << 20,
        region_bytes: 16 << 10,
        gen0_max_bytes: 512 << 10,
        tlab_bytes: 1024,
        ..HeapConfig::default()
    })
    .unwrap();
    let mut ctx = ThreadContext::new(&heap);

    // create: a fresh generation with no regions.
    let gen = allocator::new_generation(&heap, &mut ctx);
    assert_eq!(gen, 2);
    assert_eq!(allocator::get_generation(&ctx), gen);
    let info = heap.generation_info(gen).unwrap();
    assert!(!info.discarded && info.regions.is_empty());

    // allocate: first allocation materializes memory.
    let class = heap.register_class(1, 3000, false);
    let mut handles = Vec::new();
    for _ in 0..12 {
        let obj = ctx.allocate(&heap, class, true).unwrap();
        handles.push(heap.register_root(obj).unwrap());
    }
    let info = heap.generation_info(gen).unwrap();
    assert!(!info.regions.is_empty(), "allocation must acquire regions");

    // die-all, then a mixed collection (marking makes the regions eligible).
    for h in handles.drain(..) {
        heap.unregister_root(h).unwrap();
    }
    collector::run_marking(&heap);
    collector::mixed_collect(&heap).unwrap();

    // discarded: the generation owns nothing.
    let info = heap.generation_info(gen).unwrap();
    assert!(info.discarded, "generation with no regions must be discarded");
    assert!(info.regions.is_empty());

    // allocate again: transparently re-created under the same id.
    allocator::set_generation(&heap, &mut ctx, gen).unwrap();
    let obj = ctx.allocate(&heap, class, true).unwrap();
    let info = heap.generation_info(gen).unwrap();
    assert!(!info.discarded, "generation must be re-created on allocation");
    assert_eq!(info.regions.len(), 1);
    assert!(info.regions.contains(&obj.region));
    assert_eq!(info.created_epoch, heap.epoch());

    println!("ACCEPTANCE 7 PASS: create -> allocate -> die -> mixed collect -> discard -> re-create");
}

// ── criterion 8: profiler recovery on planted lifetimes ────────────────

fn planted_trial(rng: &mut ChaCha8Rng) -> (usize, usize) {
    const LONG_LIVED: u64 = 4;
    const TOLERANCE: u64 = 2;
    let cohorts = rng.gen_range(2..=5usize);
    // Median deaths separated by >= 5 * tolerance.
    let mut deaths = Vec::new();
    let mut d = 12u64;
    for _ in 0..cohorts {
        deaths.push(d);
        d += 5 * TOLERANCE + rng.gen_range(0..6);
    }
    let profiler = Profiler::new(true);
    let mut planted: HashMap<String, usize> = HashMap::new();
    let mut next_region = 0u32;
    let mut by_epoch: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for (cohort, &death) in deaths.iter().enumerate() {
        for s in 0..rng.gen_range(1..=3usize) {
            let site = format!("cohort{cohort}.site{s}");
            planted.insert(site.clone(), cohort);
            for _ in 0..20 {
                let region = next_region;
                next_region += 1;
                let obj = ObjectRef { region, offset: 0 };
                profiler.record_allocation(&site, obj, 64);
                let jitter = rng.gen_range(0..=2);
                by_epoch.entry(death - 1 + jitter).or_default().push(region);
            }
        }
    }
    // Short-lived noise that must never be recommended.
    for _ in 0..40 {
        let region = next_region;
        next_region += 1;
        let obj = ObjectRef { region, offset: 0 };
        profiler.record_allocation("noise.tmp", obj, 16);
        by_epoch.entry(rng.gen_range(1..=2)).or_default().push(region);
    }
    let last = *by_epoch.keys().last().unwrap();
    for epoch in 1..=last {
        let dead = by_epoch.remove(&epoch).unwrap_or_default();
        profiler.observe_collection(
            epoch,
            &CollectionOutcome {
                epoch,
                collected_regions: dead.into_iter().collect(),
                marking_released: BTreeSet::new(),
                forwarding: HashMap::new(),
            },
        );
    }

    let rec = profiler.analyze(LONG_LIVED, TOLERANCE).unwrap();
    assert!(
        !rec.pretenure_sites.iter().any(|s| s == "noise.tmp"),
        "short-lived site recommended"
    );
    // A site is recovered correctly when its group contains exactly its
    // planted cohort's sites.
    let mut planted_groups: HashMap<usize, BTreeSet<String>> = HashMap::new();
    for (site, cohort) in &planted {
        planted_groups.entry(*cohort).or_default().insert(site.clone());
    }
    let mut correct = 0;
    for group in &rec.groups {
        let members: BTreeSet<String> = group.sites.iter().cloned().collect();
        for site in &group.sites {
            if let Some(cohort) = planted.get(site) {
                if planted_groups[cohort] == members {
                    correct += 1;
                }
            }
        }
    }
    (correct, planted.len())
}

#[test]
fn criterion_08_profiler_recovers_planted_cohorts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9806);
    let mut correct = 0usize;
    let mut total = 0usize;
    for _ in 0..100 {
        let (c, t) = planted_trial(&mut rng);
        correct += c;
        total += t;
    }
    let accuracy = correct as f64 / total as f64;
    assert!(
        accuracy >= 0.95,
        "cohort recovery accuracy {accuracy:.3} below 0.95 ({correct}/{total})"
    );

    // Profiling must not perturb the collector: identical logs with the
    // profiler on and off.
    let mut spec = bundled_spec("buffer");
    spec.duration_ops = 60_000;
    let config = HeapConfig::default();
    let plain = run_workload(&spec, &config).unwrap();
    let profiled =
        run_workload_with(&spec, &config, Some(Arc::new(Profiler::new(true)))).unwrap();
    assert_eq!(
        render_run_log(&plain),
        render_run_log(&profiled),
        "profiling changed the GC log"
    );
    println!(
        "ACCEPTANCE 8 PASS: planted cohort recovery {:.1}% (threshold 95%), profiling leaves logs identical",
        accuracy * 100.0
    );
}

#[test]
fn criterion_09_memory_non_regression() {
    for pair in buffer_pairs().iter().chain(bundled_pairs()) {
        let base = pair.baseline.metrics.max_regions_in_use;
        let pre = pair.pretenured.metrics.max_regions_in_use;
        assert!(
            pre as f64 <= 1.15 * base as f64,
            "{}: max regions {pre} exceed 1.15x baseline {base}",
            pair.label
        );
    }
    println!("ACCEPTANCE 9 PASS: max_regions_in_use with pretenuring <= 1.15x baseline on all bundled workloads");
}

#[test]
fn criterion_10_deterministic_gc_logs() {
    let mut spec = bundled_spec("buffer");
    spec.duration_ops = 120_000;
    spec.pretenure = true;
    let config = HeapConfig::default();
    let a = render_run_log(&run_workload(&spec, &config).unwrap());
    let b = render_run_log(&run_workload(&spec, &config).unwrap());
    assert_eq!(a, b, "two identical runs produced different logs");
    assert!(a.lines().count() > 2, "log should contain collections");
    println!("ACCEPTANCE 10 PASS: identical flags and seed produce byte-identical GC logs");
}
