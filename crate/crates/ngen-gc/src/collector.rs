//! The three collection types — minor, mixed, full — plus the marking cycle
//! that feeds mixed collection-set selection.
//!
//! Minor and mixed collections evacuate: live objects in the collection set
//! are copied out (to the survivor space or to Old), forwarding references
//! are installed in the vacated headers, every surviving slot and root is
//! rewritten, and the emptied regions return to the free list. A full
//! collection instead slide-compacts the whole heap in place into Old, so
//! it makes progress even with an empty free list; minor/mixed escalate to
//! it when they cannot place survivors.
//!
//! All collections are stop-the-world: callers must guarantee no mutator
//! allocates or mutates for the duration (the safepoint contract). After
//! every collection the remembered sets are rebuilt from a full scan, so
//! they are exact at every mutator step.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::heap::{Heap, HeapState, SpaceKind, GEN0, OLD_GEN};
use crate::object_model::{
    decode_ref, encode_ref, pack_word1, unpack_word0, unpack_word1, ClassDescriptor, ObjectRef,
    RootTable, FILLER_CLASS, FLAG_FORWARDED, FLAG_MARK,
};

/// Occupancy at which collection escalates straight to a full collection.
pub const FULL_TRIGGER_OCCUPANCY: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionKind {
    /// Collects Gen 0 only.
    Minor,
    /// Collects Gen 0 plus low-liveness regions of other generations.
    Mixed,
    /// Collects every region of every generation.
    Full,
}

impl fmt::Display for CollectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollectionKind::Minor => "minor",
            CollectionKind::Mixed => "mixed",
            CollectionKind::Full => "full",
        })
    }
}

impl std::str::FromStr for CollectionKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "minor" => Ok(CollectionKind::Minor),
            "mixed" => Ok(CollectionKind::Mixed),
            "full" => Ok(CollectionKind::Full),
            other => Err(format!("unknown collection kind {other:?}")),
        }
    }
}

/// Per-collection metrics. `pause_cost_units` is the deterministic,
/// machine-independent pause proxy
/// `bytes_copied + alpha * rset_entries_scanned`; wall time is also
/// recorded but never asserted on.
#[derive(Debug, Clone)]
pub struct GcReport {
    pub kind: CollectionKind,
    pub pause_cost_units: f64,
    pub wall_time: Duration,
    pub bytes_copied: u64,
    pub objects_promoted: u64,
    /// Write-barrier remembered-set insertions since the previous collection.
    pub rset_updates: u64,
    /// Remembered-set entries consulted while building the entry set.
    pub rset_entries_scanned: u64,
    /// Net change in regions in use across the collection.
    pub regions_reclaimed: i64,
    pub marking_ran: bool,
    /// Completed-collection count after this collection.
    pub epoch: u64,
}

/// Per-region live bytes measured by a marking cycle.
#[derive(Debug, Clone)]
pub struct MarkingStats {
    pub live_bytes: BTreeMap<u32, u64>,
    /// Completed-collection count when the cycle finished.
    pub epoch: u64,
}

/// What a collection did to the address space. `collected_regions` is the
/// collection set that was evacuated or compacted: objects there either
/// appear in `forwarding` (they survived, at the mapped address) or died.
/// `marking_released` lists regions additionally freed by the marking cycle
/// a mixed collection triggers; everything in them was unreachable.
#[derive(Debug, Clone, Default)]
pub struct CollectionOutcome {
    pub epoch: u64,
    pub collected_regions: BTreeSet<u32>,
    pub marking_released: BTreeSet<u32>,
    pub forwarding: HashMap<ObjectRef, ObjectRef>,
}

pub fn pause_cost(bytes_copied: u64, rset_entries_scanned: u64, alpha: f64) -> f64 {
    bytes_copied as f64 + alpha * rset_entries_scanned as f64
}

/// Trigger policy, consulted by the allocator on exhaustion: full when the
/// free list is empty or the heap is nearly full, otherwise minor or mixed
/// depending on whether total usage crossed the configured threshold.
pub fn should_trigger(heap: &Heap) -> Option<CollectionKind> {
    let st = heap.state.lock().unwrap();
    let occupancy = st.regions_in_use as f64 / st.regions.len() as f64;
    if st.free.is_empty() || occupancy >= FULL_TRIGGER_OCCUPANCY {
        return Some(CollectionKind::Full);
    }
    if st.gen0_eden_regions() >= heap.config().gen0_max_eden_regions() {
        if occupancy >= heap.config().mixed_trigger_occupancy {
            Some(CollectionKind::Mixed)
        } else {
            Some(CollectionKind::Minor)
        }
    } else {
        None
    }
}

pub fn minor_collect(heap: &Heap) -> Result<GcReport> {
    collect(heap, CollectionKind::Minor)
}

pub fn mixed_collect(heap: &Heap) -> Result<GcReport> {
    collect(heap, CollectionKind::Mixed)
}

pub fn full_collect(heap: &Heap) -> Result<GcReport> {
    collect(heap, CollectionKind::Full)
}

/// Runs one collection of the requested kind at a safepoint. A minor or
/// mixed collection that cannot place its survivors rolls its copies back
/// and escalates to a full collection; the report then describes the full
/// collection.
pub fn collect(heap: &Heap, requested: CollectionKind) -> Result<GcReport> {
    let mut st = heap.state.lock().unwrap();
    let mut roots = heap.roots.lock().unwrap();
    heap.retire_all_tlabs();
    if std::env::var_os("NGEN_GC_VERIFY").is_some() {
        verify_heap_integrity(heap, &st, "gc-entry");
    }
    let started = Instant::now();
    let pre_used = st.regions_in_use;

    let (kind, work) = match requested {
        CollectionKind::Full => (
            CollectionKind::Full,
            compact_full(heap, &mut st, &mut roots),
        ),
        CollectionKind::Minor | CollectionKind::Mixed => {
            let cs = if requested == CollectionKind::Minor {
                gen0_collection_set(&st)
            } else {
                mixed_collection_set(heap, &st)
            };
            match evacuate(heap, &mut st, &mut roots, cs, requested) {
                Ok(work) => (requested, work),
                // Survivors did not fit anywhere: the copies were rolled
                // back, so the heap is exactly as before and a sliding full
                // collection (which needs no headroom) takes over.
                Err(Escalated) => (
                    CollectionKind::Full,
                    compact_full(heap, &mut st, &mut roots),
                ),
            }
        }
    };

    let collected_regions = work.collected;
    let mut marking_released = BTreeSet::new();
    let mut marking_ran = false;
    if kind == CollectionKind::Mixed {
        let (_, released) = run_marking_locked(heap, &mut st, &roots);
        marking_released.extend(released);
        marking_ran = true;
    }

    rebuild_remembered_sets(heap, &st);

    let epoch = heap.epoch.load(Ordering::Relaxed) + 1;
    heap.epoch.store(epoch, Ordering::Relaxed);

    let report = GcReport {
        kind,
        pause_cost_units: pause_cost(
            work.bytes_copied,
            work.rset_entries_scanned,
            heap.config().pause_cost_alpha,
        ),
        wall_time: started.elapsed(),
        bytes_copied: work.bytes_copied,
        objects_promoted: work.objects_promoted,
        rset_updates: heap.rset_updates.swap(0, Ordering::Relaxed),
        rset_entries_scanned: work.rset_entries_scanned,
        regions_reclaimed: pre_used as i64 - st.regions_in_use as i64,
        marking_ran,
        epoch,
    };
    let outcome = CollectionOutcome {
        epoch,
        collected_regions,
        marking_released,
        forwarding: work.forwarding,
    };
    heap.gc_log.lock().unwrap().push(report.clone());
    *heap.last_outcome.lock().unwrap() = Some(outcome.clone());
    drop(st);
    drop(roots);

    let profiler = heap.profiler.lock().unwrap().clone();
    if let Some(p) = profiler {
        p.observe_collection(epoch, &outcome);
    }
    Ok(report)
}

/// Diagnostic sweep (enabled via the NGEN_GC_VERIFY env var): every owned
/// region must walk linearly and every slot word must decode to a valid
/// object header.
fn verify_heap_integrity(heap: &Heap, st: &HeapState, when: &str) {
    let classes = heap.classes.read().unwrap().clone();
    for (r, meta) in st.regions.iter().enumerate() {
        if meta.owner.is_none() {
            continue;
        }
        walk_region(heap, r as u32, meta.top, |obj, class, size| {
            assert!(
                (class as usize) < classes.len(),
                "{when}: r{r}+{} has bogus class {class}",
                obj.offset
            );
            let desc = &classes[class as usize];
            assert_eq!(desc.size_bytes, size, "{when}: size mismatch at r{r}+{}", obj.offset);
            let arena = &heap.arenas[obj.region as usize];
            for slot in 0..desc.ref_slot_count {
                let word = arena.load_word(obj.offset / 8 + 2 + slot);
                if word == 0 {
                    continue;
                }
                assert!(word >> 32 != 0, "{when}: r{r}+{} slot {slot} holds non-ref word {word:#x}", obj.offset);
                let t = decode_ref(word).unwrap();
                assert!(
                    (t.region as usize) < st.regions.len()
                        && st.regions[t.region as usize].owner.is_some()
                        && t.offset < st.regions[t.region as usize].top,
                    "{when}: r{r}+{} slot {slot} dangles to {t}",
                    obj.offset
                );
                let (tclass, _) = unpack_word0(heap.arenas[t.region as usize].load_word(t.offset / 8));
                assert!(
                    (tclass as usize) < classes.len(),
                    "{when}: r{r}+{} slot {slot} target {t} has bogus class {tclass}",
                    obj.offset
                );
            }
        });
    }
}

/// Stop-the-world marking: traverses from the roots, marks live objects,
/// measures per-region live bytes, frees regions containing only
/// unreachable objects, and clears the marks again. The statistics feed the
/// next mixed collection's region selection.
pub fn run_marking(heap: &Heap) -> MarkingStats {
    let mut st = heap.state.lock().unwrap();
    let roots = heap.roots.lock().unwrap();
    heap.retire_all_tlabs();
    let (stats, _released) = run_marking_locked(heap, &mut st, &roots);
    rebuild_remembered_sets(heap, &st);
    stats
}

fn run_marking_locked(
    heap: &Heap,
    st: &mut HeapState,
    roots: &RootTable,
) -> (MarkingStats, Vec<u32>) {
    let classes = heap.classes.read().unwrap().clone();
    let live = trace_live(heap, &classes, roots.iter_live(), None);

    let mut live_bytes: BTreeMap<u32, u64> = BTreeMap::new();
    for (r, meta) in st.regions.iter().enumerate() {
        if meta.owner.is_some() {
            live_bytes.insert(r as u32, 0);
        }
    }
    for &obj in &live {
        let arena = &heap.arenas[obj.region as usize];
        let (_, size) = unpack_word0(arena.load_word(obj.offset / 8));
        *live_bytes.entry(obj.region).or_insert(0) += size as u64;
        // Set and immediately account the mark bit; cleared below.
        let w1 = arena.load_word(obj.offset / 8 + 1);
        let (age, flags) = unpack_word1(w1);
        arena.store_word(obj.offset / 8 + 1, pack_word1(age, flags | FLAG_MARK));
    }

    // Free regions that contain only unreachable objects; record the
    // estimate on everything that stays.
    let mut released = Vec::new();
    for (&region, &bytes) in &live_bytes {
        let meta = &st.regions[region as usize];
        if meta.top > 0 && bytes == 0 {
            heap.release_region_locked(st, region).unwrap();
            released.push(region);
        } else {
            st.regions[region as usize].live_estimate = Some(bytes);
        }
    }
    // Only dead objects can still reference a freed region (a live holder
    // would have kept it live), but those objects are physically present
    // until their own region is collected and later scans walk them. Null
    // the now-dangling slots so the freed regions can be recycled safely.
    if !released.is_empty() {
        let gone: HashSet<u32> = released.iter().copied().collect();
        for (r, meta) in st.regions.iter().enumerate() {
            if meta.owner.is_none() {
                continue;
            }
            walk_region(heap, r as u32, meta.top, |obj, class, _size| {
                let desc = &classes[class as usize];
                let arena = &heap.arenas[obj.region as usize];
                for slot in 0..desc.ref_slot_count {
                    let idx = obj.offset / 8 + 2 + slot;
                    if let Some(t) = decode_ref(arena.load_word(idx)) {
                        if gone.contains(&t.region) {
                            arena.store_word(idx, 0);
                        }
                    }
                }
            });
        }
    }
    for &obj in &live {
        let arena = &heap.arenas[obj.region as usize];
        let (age, flags) = unpack_word1(arena.load_word(obj.offset / 8 + 1));
        arena.store_word(obj.offset / 8 + 1, pack_word1(age, flags & !FLAG_MARK));
    }
    for r in &released {
        live_bytes.remove(r);
    }
    let stats = MarkingStats {
        live_bytes,
        epoch: heap.epoch(),
    };
    *heap.marking.lock().unwrap() = Some(stats.clone());
    (stats, released)
}

// ── collection sets ────────────────────────────────────────────────────

fn gen0_collection_set(st: &HeapState) -> BTreeSet<u32> {
    st.generations[GEN0 as usize].regions.iter().copied().collect()
}

/// All of Gen 0, plus any other region whose measured live fraction is at
/// or below the configured threshold. Regions without a fresh estimate
/// (acquired after the last marking cycle) stay out.
fn mixed_collection_set(heap: &Heap, st: &HeapState) -> BTreeSet<u32> {
    let mut cs = gen0_collection_set(st);
    let threshold = heap.config().region_live_threshold;
    for (r, meta) in st.regions.iter().enumerate() {
        if !matches!(meta.owner, Some(g) if g != GEN0) || meta.top == 0 {
            continue;
        }
        if let Some(live) = meta.live_estimate {
            if live as f64 / meta.top as f64 <= threshold {
                cs.insert(r as u32);
            }
        }
    }
    cs
}

// ── tracing ────────────────────────────────────────────────────────────

fn object_class<'a>(
    heap: &Heap,
    classes: &'a [ClassDescriptor],
    obj: ObjectRef,
) -> (&'a ClassDescriptor, u32) {
    let (class, size) = unpack_word0(heap.arenas[obj.region as usize].load_word(obj.offset / 8));
    debug_assert_ne!(class, FILLER_CLASS, "reference into a filler at {obj}");
    (&classes[class as usize], size)
}

/// BFS over reference slots from `seeds`. With `within` set, the traversal
/// is confined to that region set: seeds outside it are ignored and edges
/// leaving it are not followed (those regions are not being collected).
fn trace_live(
    heap: &Heap,
    classes: &[ClassDescriptor],
    seeds: impl IntoIterator<Item = ObjectRef>,
    within: Option<&BTreeSet<u32>>,
) -> HashSet<ObjectRef> {
    let in_scope = |r: u32| within.map_or(true, |cs| cs.contains(&r));
    let mut live = HashSet::new();
    let mut stack = Vec::new();
    for seed in seeds {
        if in_scope(seed.region) && live.insert(seed) {
            stack.push(seed);
        }
    }
    while let Some(obj) = stack.pop() {
        let (desc, _) = object_class(heap, classes, obj);
        let arena = &heap.arenas[obj.region as usize];
        for slot in 0..desc.ref_slot_count {
            if let Some(t) = decode_ref(arena.load_word(obj.offset / 8 + 2 + slot)) {
                if in_scope(t.region) && live.insert(t) {
                    stack.push(t);
                }
            }
        }
    }
    live
}

/// Walks the object/filler extents of a region, calling `f` for each object.
fn walk_region(heap: &Heap, region: u32, top: u32, mut f: impl FnMut(ObjectRef, u32, u32)) {
    let arena = &heap.arenas[region as usize];
    let mut off = 0u32;
    while off < top {
        let (class, size) = unpack_word0(arena.load_word(off / 8));
        debug_assert!(size >= 8 && size % 8 == 0, "corrupt extent at r{region}+{off}");
        if class != FILLER_CLASS {
            f(ObjectRef { region, offset: off }, class, size);
        }
        off += size;
    }
    debug_assert_eq!(off, top, "extents overran top in region {region}");
}

// ── evacuation (minor / mixed) ─────────────────────────────────────────

struct Escalated;

#[derive(Default)]
struct CollectionWork {
    bytes_copied: u64,
    objects_promoted: u64,
    rset_entries_scanned: u64,
    collected: BTreeSet<u32>,
    forwarding: HashMap<ObjectRef, ObjectRef>,
}

/// Evacuation destinations. Survivor copies go to a single "to" region
/// acquired on demand; overflow and promotions bump Old's current
/// allocation region, acquiring fresh Old regions as needed.
struct DestAllocator {
    survivor: Option<u32>,
    old: Option<u32>,
    /// Regions acquired for this collection, releasable on rollback.
    acquired: Vec<u32>,
    /// Old allocation region reused as a destination, with its pre-GC top.
    reused_old: Option<(u32, u32)>,
}

enum Placement {
    Survivor,
    Old,
}

impl DestAllocator {
    fn new() -> Self {
        DestAllocator {
            survivor: None,
            old: None,
            acquired: Vec::new(),
            reused_old: None,
        }
    }

    fn alloc(
        &mut self,
        heap: &Heap,
        st: &mut HeapState,
        cs: &BTreeSet<u32>,
        size: u32,
        want_survivor: bool,
    ) -> std::result::Result<(ObjectRef, Placement), Escalated> {
        let region_bytes = heap.config().region_bytes as u32;
        if want_survivor {
            if self.survivor.is_none() {
                if let Ok(r) = heap.acquire_region_locked(st, GEN0, SpaceKind::Survivor) {
                    self.acquired.push(r);
                    self.survivor = Some(r);
                }
            }
            if let Some(r) = self.survivor {
                let top = st.regions[r as usize].top;
                if region_bytes - top >= size {
                    st.regions[r as usize].top = top + size;
                    return Ok((ObjectRef { region: r, offset: top }, Placement::Survivor));
                }
                // Survivor space is a single region; overflow promotes.
            }
        }
        if self.old.is_none() {
            let ar = st.generations[OLD_GEN as usize].alloc_region;
            if let Some(ar) = ar.filter(|r| !cs.contains(r)) {
                self.old = Some(ar);
                self.reused_old = Some((ar, st.regions[ar as usize].top));
            }
        }
        loop {
            if let Some(r) = self.old {
                let top = st.regions[r as usize].top;
                if region_bytes - top >= size {
                    st.regions[r as usize].top = top + size;
                    return Ok((ObjectRef { region: r, offset: top }, Placement::Old));
                }
            }
            match heap.acquire_region_locked(st, OLD_GEN, SpaceKind::Tenured) {
                Ok(r) => {
                    self.acquired.push(r);
                    self.old = Some(r);
                }
                Err(_) => return Err(Escalated),
            }
        }
    }
}

/// Copies every live object out of `cs`, fixes up all references and roots,
/// and frees the collected regions. On destination exhaustion every side
/// effect is undone and `Escalated` is returned with the heap unchanged.
///
/// In a minor collection, Gen 0 survivors below the promotion age move to
/// the survivor space with their age incremented and the rest are promoted.
/// In a mixed collection every survivor of a non-Old region is promoted and
/// Old's own collected regions are compacted into fresh Old regions.
fn evacuate(
    heap: &Heap,
    st: &mut HeapState,
    roots: &mut RootTable,
    cs: BTreeSet<u32>,
    kind: CollectionKind,
) -> std::result::Result<CollectionWork, Escalated> {
    let classes = heap.classes.read().unwrap().clone();
    let mut work = CollectionWork {
        collected: cs.clone(),
        ..CollectionWork::default()
    };

    // Entry set: roots into the collection set, plus every reference from
    // an uncollected region into it. The remembered sets say which source
    // regions can hold such references; their objects (live or not — the
    // collector cannot tell without a full trace) are scanned for edges.
    let mut entries: Vec<ObjectRef> = roots
        .iter_live()
        .filter(|r| cs.contains(&r.region))
        .collect();
    let mut source_regions: BTreeSet<u32> = BTreeSet::new();
    for &r in &cs {
        for (src, _count) in heap.arenas[r as usize].rset_pairs() {
            if !cs.contains(&src) {
                work.rset_entries_scanned += 1;
                source_regions.insert(src);
            }
        }
    }
    for &src in &source_regions {
        let top = st.regions[src as usize].top;
        walk_region(heap, src, top, |obj, class, _size| {
            let desc = &classes[class as usize];
            let arena = &heap.arenas[obj.region as usize];
            for slot in 0..desc.ref_slot_count {
                if let Some(t) = decode_ref(arena.load_word(obj.offset / 8 + 2 + slot)) {
                    if cs.contains(&t.region) {
                        entries.push(t);
                    }
                }
            }
        });
    }

    let live = trace_live(heap, &classes, entries, Some(&cs));

    // Copy phase: regions in ascending id order, objects in address order.
    let mut dest = DestAllocator::new();
    let mut rollback: Vec<(ObjectRef, u64)> = Vec::new();
    let promotion_age = heap.config().promotion_age;
    let mut failed = false;
    'copy: for &r in &cs {
        let top = st.regions[r as usize].top;
        let mut plan: Vec<(ObjectRef, u32)> = Vec::new();
        walk_region(heap, r, top, |obj, _class, size| {
            if live.contains(&obj) {
                plan.push((obj, size));
            }
        });
        let from_old = st.regions[r as usize].owner == Some(OLD_GEN);
        let ages_through_survivor =
            kind == CollectionKind::Minor && st.regions[r as usize].owner == Some(GEN0);
        for (obj, size) in plan {
            let src = &heap.arenas[obj.region as usize];
            let word0 = src.load_word(obj.offset / 8);
            let (age, _flags) = unpack_word1(src.load_word(obj.offset / 8 + 1));
            let want_survivor = ages_through_survivor && (age as u32) < promotion_age;
            let (dst, placement) = match dest.alloc(heap, st, &cs, size, want_survivor) {
                Ok(d) => d,
                Err(Escalated) => {
                    failed = true;
                    break 'copy;
                }
            };
            let dst_arena = &heap.arenas[dst.region as usize];
            for w in 0..size / 8 {
                dst_arena.store_word(dst.offset / 8 + w, src.load_word(obj.offset / 8 + w));
            }
            let new_age = match placement {
                Placement::Survivor => age.saturating_add(1),
                Placement::Old => age,
            };
            dst_arena.store_word(dst.offset / 8 + 1, pack_word1(new_age, 0));
            if matches!(placement, Placement::Old) && !from_old {
                work.objects_promoted += 1;
            }
            work.bytes_copied += size as u64;
            // Install the forwarding reference over the vacated header.
            src.store_word(obj.offset / 8, encode_ref(Some(dst)));
            let (a, f) = unpack_word1(src.load_word(obj.offset / 8 + 1));
            src.store_word(obj.offset / 8 + 1, pack_word1(a, f | FLAG_FORWARDED));
            rollback.push((obj, word0));
            work.forwarding.insert(obj, dst);
        }
    }

    if failed {
        // Undo: restore vacated headers, drop the copies, release the
        // destination regions, and reset the reused Old region's top.
        for (obj, word0) in rollback {
            let arena = &heap.arenas[obj.region as usize];
            arena.store_word(obj.offset / 8, word0);
            let (a, f) = unpack_word1(arena.load_word(obj.offset / 8 + 1));
            arena.store_word(obj.offset / 8 + 1, pack_word1(a, f & !FLAG_FORWARDED));
        }
        if let Some((r, pre_top)) = dest.reused_old {
            heap.arenas[r as usize].zero_range(pre_top, st.regions[r as usize].top);
            st.regions[r as usize].top = pre_top;
        }
        for r in dest.acquired {
            heap.release_region_locked(st, r).unwrap();
        }
        // A survivor acquisition moved Gen 0's allocation region; releasing
        // it above reset that, but normalize for the no-survivor case too.
        st.generations[GEN0 as usize].alloc_region = None;
        return Err(Escalated);
    }

    // Fixup: rewrite forwarded references in roots and in every surviving
    // region (collected regions are about to be freed wholesale).
    for slot in roots.slots.iter_mut() {
        if let Some(obj) = slot.obj {
            if let Some(&dst) = work.forwarding.get(&obj) {
                slot.obj = Some(dst);
            }
        }
    }
    let owned: Vec<u32> = st
        .regions
        .iter()
        .enumerate()
        .filter(|(r, m)| m.owner.is_some() && !cs.contains(&(*r as u32)))
        .map(|(r, _)| r as u32)
        .collect();
    for r in owned {
        let top = st.regions[r as usize].top;
        walk_region(heap, r, top, |obj, class, _size| {
            let desc = &classes[class as usize];
            let arena = &heap.arenas[obj.region as usize];
            for slot in 0..desc.ref_slot_count {
                let idx = obj.offset / 8 + 2 + slot;
                if let Some(t) = decode_ref(arena.load_word(idx)) {
                    if let Some(&dst) = work.forwarding.get(&t) {
                        arena.store_word(idx, encode_ref(Some(dst)));
                    }
                }
            }
        });
    }

    for &r in &cs {
        heap.release_region_locked(st, r).unwrap();
    }
    // Mutators must not keep allocating into the survivor-to region.
    st.generations[GEN0 as usize].alloc_region = None;
    Ok(work)
}

// ── full collection: sliding compaction ───────────────────────────────

/// Collects the entire heap by sliding every live object toward low
/// addresses, in global address order, into regions that all become part of
/// Old. Needs no free headroom, so it is the escalation target of last
/// resort. Afterwards all dynamic generations are discarded and the two
/// built-in generations are re-primed with an allocation region each.
fn compact_full(heap: &Heap, st: &mut HeapState, roots: &mut RootTable) -> CollectionWork {
    let classes = heap.classes.read().unwrap().clone();
    let region_bytes = heap.config().region_bytes as u32;
    let live = trace_live(heap, &classes, roots.iter_live(), None);

    let mut work = CollectionWork::default();
    let pre_top: Vec<u32> = st.regions.iter().map(|m| m.top).collect();
    let owners: Vec<Option<u32>> = st.regions.iter().map(|m| m.owner).collect();
    for (r, owner) in owners.iter().enumerate() {
        if owner.is_some() {
            work.collected.insert(r as u32);
        }
    }

    // Live objects in ascending (region, offset) order.
    let mut ordered: Vec<(ObjectRef, u32)> = Vec::with_capacity(live.len());
    for r in 0..st.regions.len() as u32 {
        if owners[r as usize].is_none() {
            continue;
        }
        walk_region(heap, r, pre_top[r as usize], |obj, _class, size| {
            if live.contains(&obj) {
                ordered.push((obj, size));
            }
        });
    }

    // Address computation: pack into regions 0, 1, 2, … Packing preserves
    // order and removes gaps, so every destination is at or below its
    // source and a forward word copy cannot clobber unmoved data.
    let mut dest_region = 0u32;
    let mut dest_off = 0u32;
    let mut new_top: BTreeMap<u32, u32> = BTreeMap::new();
    for &(obj, size) in &ordered {
        if region_bytes - dest_off < size {
            dest_region += 1;
            dest_off = 0;
        }
        let dst = ObjectRef {
            region: dest_region,
            offset: dest_off,
        };
        debug_assert!(
            (dst.region, dst.offset) <= (obj.region, obj.offset),
            "slide destination above source"
        );
        dest_off += size;
        new_top.insert(dest_region, dest_off);
        work.forwarding.insert(obj, dst);
    }

    // Rewrite roots and live slots before anything moves.
    for slot in roots.slots.iter_mut() {
        if let Some(obj) = slot.obj {
            slot.obj = Some(work.forwarding[&obj]);
        }
    }
    for &(obj, _size) in &ordered {
        let (desc, _) = object_class(heap, &classes, obj);
        let arena = &heap.arenas[obj.region as usize];
        for slot in 0..desc.ref_slot_count {
            let idx = obj.offset / 8 + 2 + slot;
            if let Some(t) = decode_ref(arena.load_word(idx)) {
                arena.store_word(idx, encode_ref(Some(work.forwarding[&t])));
            }
        }
    }

    // Move phase, in order, word-ascending.
    for &(obj, size) in &ordered {
        let dst = work.forwarding[&obj];
        work.bytes_copied += size as u64;
        if owners[obj.region as usize] != Some(OLD_GEN) {
            work.objects_promoted += 1;
        }
        if dst == obj {
            continue;
        }
        let src_arena = &heap.arenas[obj.region as usize];
        let dst_arena = &heap.arenas[dst.region as usize];
        for w in 0..size / 8 {
            let word = src_arena.load_word(obj.offset / 8 + w);
            dst_arena.store_word(dst.offset / 8 + w, word);
        }
    }

    // Zero the slack: vacated tails of packed regions and the whole extent
    // of regions that lost everything.
    for r in 0..st.regions.len() as u32 {
        let packed = new_top.get(&r).copied();
        let old_top = pre_top[r as usize];
        match packed {
            Some(top) if old_top > top => heap.arenas[r as usize].zero_range(top, old_top),
            Some(_) => {}
            None if owners[r as usize].is_some() && old_top > 0 => {
                heap.arenas[r as usize].zero_range(0, old_top)
            }
            None => {}
        }
        heap.arenas[r as usize].rset.lock().unwrap().clear();
    }

    // Rebuild ownership: packed regions form Old's region list; everything
    // else is free; dynamic generations are discarded.
    let mut free: Vec<u32> = Vec::new();
    for r in (0..st.regions.len() as u32).rev() {
        let meta = &mut st.regions[r as usize];
        meta.live_estimate = None;
        if let Some(&top) = new_top.get(&r) {
            meta.owner = Some(OLD_GEN);
            meta.kind = SpaceKind::Tenured;
            meta.top = top;
        } else {
            meta.owner = None;
            meta.top = 0;
            free.push(r);
        }
    }
    let packed_regions: Vec<u32> = new_top.keys().copied().collect();
    st.free = free;
    st.regions_in_use = packed_regions.len() as u32;
    for g in st.generations.iter_mut() {
        g.regions.clear();
        g.alloc_region = None;
        if g.gen_id > OLD_GEN {
            g.discarded = true;
        }
    }
    st.generations[OLD_GEN as usize].alloc_region = packed_regions.last().copied();
    st.generations[OLD_GEN as usize].regions = packed_regions;
    st.max_regions_in_use = st.max_regions_in_use.max(st.regions_in_use);

    // Re-prime the built-in generations (best effort: a truly full heap
    // just leaves them to lazy acquisition).
    if st.generations[OLD_GEN as usize].regions.is_empty() {
        let _ = heap.acquire_region_locked(st, OLD_GEN, SpaceKind::Tenured);
    }
    let _ = heap.acquire_region_locked(st, GEN0, SpaceKind::Eden);

    work
}

// ── remembered-set rebuild ─────────────────────────────────────────────

/// Recomputes every region's remembered set from a full slot scan of all
/// allocated extents. Object death does not retract references until the
/// holder is collected, so dead-but-present objects count, exactly as a
/// scan of the physical heap would.
fn rebuild_remembered_sets(heap: &Heap, st: &HeapState) {
    let classes = heap.classes.read().unwrap().clone();
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for (r, meta) in st.regions.iter().enumerate() {
        let r = r as u32;
        if meta.owner.is_none() {
            continue;
        }
        walk_region(heap, r, meta.top, |obj, class, _size| {
            let desc = &classes[class as usize];
            let arena = &heap.arenas[obj.region as usize];
            for slot in 0..desc.ref_slot_count {
                if let Some(t) = decode_ref(arena.load_word(obj.offset / 8 + 2 + slot)) {
                    if t.region != r {
                        *counts.entry((t.region, r)).or_insert(0) += 1;
                    }
                }
            }
        });
    }
    for arena in heap.arenas.iter() {
        arena.rset.lock().unwrap().clear();
    }
    for ((target, source), n) in counts {
        heap.arenas[target as usize]
            .rset
            .lock()
            .unwrap()
            .insert(source, n);
    }
}

// ── structured log ─────────────────────────────────────────────────────

#[derive(serde::Serialize)]
struct GcLogLine<'a> {
    kind: &'a str,
    pause_cost_units: f64,
    wall_ms: f64,
    bytes_copied: u64,
    objects_promoted: u64,
    rset_updates: u64,
    regions_reclaimed: i64,
    epoch: u64,
}

/// One line-delimited structured record per collection. In deterministic
/// mode the wall time is reported as zero so identical runs produce
/// byte-identical logs.
pub fn render_gc_record(report: &GcReport, deterministic: bool) -> String {
    let kind = report.kind.to_string();
    let line = GcLogLine {
        kind: &kind,
        pause_cost_units: report.pause_cost_units,
        wall_ms: if deterministic {
            0.0
        } else {
            report.wall_time.as_secs_f64() * 1e3
        },
        bytes_copied: report.bytes_copied,
        objects_promoted: report.objects_promoted,
        rset_updates: report.rset_updates,
        regions_reclaimed: report.regions_reclaimed,
        epoch: report.epoch,
    };
    serde_json::to_string(&line).expect("GC log line serialization")
}

pub fn write_gc_records<W: Write>(
    mut w: W,
    reports: &[GcReport],
    deterministic: bool,
) -> std::io::Result<()> {
    for r in reports {
        writeln!(w, "{}", render_gc_record(r, deterministic))?;
    }
    Ok(())
}
