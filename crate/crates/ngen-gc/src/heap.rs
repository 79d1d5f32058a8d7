//! Region pool, free list, and generation descriptors.
//!
//! The heap is a fixed set of equally sized regions. Each generation is an
//! ordered list of region ids; everything not owned by a generation sits on
//! the free list. Gen 0 (id 0) and Old (id 1) always exist; further
//! generations are created at runtime, grow and shrink region by region,
//! and are discarded when they lose their last region.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use crate::collector::{CollectionOutcome, GcReport, MarkingStats};
use crate::error::{HeapError, Result};
use crate::object_model::{
    pack_filler_word, ClassDescriptor, ObjectRef, RootTable, ALLOC_ALIGN, HEADER_BYTES,
};
use crate::profiler::Profiler;

/// Gen 0: the default nursery every unannotated allocation lands in.
pub const GEN0: u32 = 0;
/// The built-in tenured generation receiving all promoted survivors.
pub const OLD_GEN: u32 = 1;

/// Role of a region within its generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Eden,
    Survivor,
    Tenured,
}

/// Heap geometry and collector tuning. All collection thresholds are fixed
/// here up front; nothing is calibrated at run time.
#[derive(Debug, Clone)]
pub struct HeapConfig {
    /// Total heap capacity in bytes. Must be a multiple of `region_bytes`.
    pub heap_bytes: u64,
    /// Region size in bytes; the unit of reservation and reclamation.
    pub region_bytes: u64,
    /// Hard cap on Gen 0's Eden region footprint; reaching it triggers a
    /// collection.
    pub gen0_max_bytes: u64,
    /// TLAB reservation size. The large-object threshold is
    /// `tlab_bytes / 8`.
    pub tlab_bytes: u64,
    /// Collections an object must survive in Gen 0 before promotion.
    pub promotion_age: u32,
    /// Heap-usage fraction at which a Gen 0 exhaustion escalates from a
    /// minor to a mixed collection.
    pub mixed_trigger_occupancy: f64,
    /// Max live fraction for a non-Gen-0 region to enter a mixed
    /// collection set.
    pub region_live_threshold: f64,
    /// Cost-units per remembered-set entry scanned in the pause cost model
    /// `pause_cost_units = bytes_copied + alpha * rset_entries_scanned`.
    pub pause_cost_alpha: f64,
    /// When set, GC log rendering zeroes wall times so repeated runs are
    /// byte-identical.
    pub deterministic: bool,
}

impl Default for HeapConfig {
    fn default() -> Self {
        Self {
            heap_bytes: 64 << 20,
            region_bytes: 32 << 10,
            gen0_max_bytes: 8 << 20,
            tlab_bytes: 1024,
            promotion_age: 2,
            mixed_trigger_occupancy: 0.45,
            region_live_threshold: 0.50,
            pause_cost_alpha: 0.5,
            deterministic: true,
        }
    }
}

impl HeapConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &'static str, reason: String| {
            Err(HeapError::InvalidConfig { field, reason })
        };
        if self.region_bytes == 0 || self.region_bytes % ALLOC_ALIGN as u64 != 0 {
            return err("region_bytes", format!("{} is not a positive multiple of {}", self.region_bytes, ALLOC_ALIGN));
        }
        if self.region_bytes > u32::MAX as u64 {
            return err("region_bytes", format!("{} exceeds the 4 GiB region limit", self.region_bytes));
        }
        if self.heap_bytes == 0 || self.heap_bytes % self.region_bytes != 0 {
            return err("heap_bytes", format!("{} is not a positive multiple of region_bytes {}", self.heap_bytes, self.region_bytes));
        }
        if self.heap_bytes / self.region_bytes < 2 {
            return err("heap_bytes", "heap must hold at least two regions".into());
        }
        if self.heap_bytes / self.region_bytes > u32::MAX as u64 {
            return err("heap_bytes", "too many regions".into());
        }
        if self.tlab_bytes < HEADER_BYTES as u64
            || self.tlab_bytes % ALLOC_ALIGN as u64 != 0
            || self.tlab_bytes > self.region_bytes
        {
            return err("tlab_bytes", format!("{} must be a multiple of {} in [{}, region_bytes]", self.tlab_bytes, ALLOC_ALIGN, HEADER_BYTES));
        }
        if self.gen0_max_bytes < 2 * self.region_bytes {
            return err("gen0_max_bytes", format!("{} is below two regions ({})", self.gen0_max_bytes, 2 * self.region_bytes));
        }
        if self.gen0_max_bytes > self.heap_bytes {
            return err("gen0_max_bytes", format!("{} exceeds heap_bytes {}", self.gen0_max_bytes, self.heap_bytes));
        }
        if !(self.mixed_trigger_occupancy > 0.0 && self.mixed_trigger_occupancy < 1.0) {
            return err("mixed_trigger_occupancy", format!("{} is outside (0, 1)", self.mixed_trigger_occupancy));
        }
        if !(self.region_live_threshold > 0.0 && self.region_live_threshold <= 1.0) {
            return err("region_live_threshold", format!("{} is outside (0, 1]", self.region_live_threshold));
        }
        if !self.pause_cost_alpha.is_finite() || self.pause_cost_alpha < 0.0 {
            return err("pause_cost_alpha", format!("{} must be finite and non-negative", self.pause_cost_alpha));
        }
        Ok(())
    }

    pub fn region_count(&self) -> u32 {
        (self.heap_bytes / self.region_bytes) as u32
    }

    /// Eden region cap for Gen 0.
    pub fn gen0_max_eden_regions(&self) -> u32 {
        (self.gen0_max_bytes / self.region_bytes) as u32
    }

    /// Objects at or above this size bypass TLABs entirely.
    pub fn large_object_threshold(&self) -> u32 {
        (self.tlab_bytes / 8) as u32
    }
}

// ── per-region storage ─────────────────────────────────────────────────

/// Word arena plus remembered set for one region. The arena is shared
/// mutable state: TLAB owners bump-write into their reserved extents and
/// the write barrier updates slots, both without a heap-wide lock.
pub(crate) struct Arena {
    pub(crate) words: Box<[AtomicU64]>,
    /// source region id → number of references from that region into this
    /// one. Entries are exact: the barrier retires overwritten references
    /// and collections rebuild the map from a full scan.
    pub(crate) rset: Mutex<HashMap<u32, u64>>,
}

impl Arena {
    fn new(region_bytes: u64) -> Self {
        let n = (region_bytes / 8) as usize;
        let mut words = Vec::with_capacity(n);
        words.resize_with(n, || AtomicU64::new(0));
        Self {
            words: words.into_boxed_slice(),
            rset: Mutex::new(HashMap::new()),
        }
    }

    #[inline]
    pub(crate) fn load_word(&self, idx: u32) -> u64 {
        self.words[idx as usize].load(Ordering::Relaxed)
    }

    #[inline]
    pub(crate) fn store_word(&self, idx: u32, value: u64) {
        self.words[idx as usize].store(value, Ordering::Relaxed)
    }

    pub(crate) fn rset_inc(&self, src: u32) {
        *self.rset.lock().unwrap().entry(src).or_insert(0) += 1;
    }

    pub(crate) fn rset_dec(&self, src: u32) {
        let mut rset = self.rset.lock().unwrap();
        match rset.get_mut(&src) {
            Some(n) if *n > 1 => *n -= 1,
            Some(_) => {
                rset.remove(&src);
            }
            None => debug_assert!(false, "remembered-set underflow from region {src}"),
        }
    }

    pub(crate) fn rset_pairs(&self) -> Vec<(u32, u64)> {
        let mut v: Vec<_> = self.rset.lock().unwrap().iter().map(|(&s, &n)| (s, n)).collect();
        v.sort_unstable();
        v
    }

    pub(crate) fn zero_range(&self, from_byte: u32, to_byte: u32) {
        for w in &self.words[(from_byte / 8) as usize..(to_byte / 8) as usize] {
            w.store(0, Ordering::Relaxed);
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RegionMeta {
    pub(crate) owner: Option<u32>,
    pub(crate) kind: SpaceKind,
    /// Bump offset: bytes in `[0, top)` hold objects and fillers;
    /// `[top, region_bytes)` is untouched (all-zero).
    pub(crate) top: u32,
    /// Live bytes measured by the most recent marking cycle, if that cycle
    /// saw this region under its current ownership. Cleared on acquire and
    /// release so recycled regions never carry stale estimates.
    pub(crate) live_estimate: Option<u64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Generation {
    pub(crate) gen_id: u32,
    pub(crate) regions: Vec<u32>,
    pub(crate) alloc_region: Option<u32>,
    pub(crate) created_epoch: u64,
    pub(crate) discarded: bool,
}

pub(crate) struct HeapState {
    pub(crate) regions: Vec<RegionMeta>,
    pub(crate) free: Vec<u32>,
    pub(crate) generations: Vec<Generation>,
    pub(crate) regions_in_use: u32,
    pub(crate) max_regions_in_use: u32,
}

impl HeapState {
    pub(crate) fn gen0_eden_regions(&self) -> u32 {
        self.generations[GEN0 as usize]
            .regions
            .iter()
            .filter(|&&r| self.regions[r as usize].kind == SpaceKind::Eden)
            .count() as u32
    }
}

// ── TLABs ──────────────────────────────────────────────────────────────

/// One TLAB reservation. The owning thread bump-allocates by advancing
/// `top`; nobody else writes it. Collections kill all outstanding TLABs at
/// the safepoint by filling the unused tail and setting `dead`, which the
/// owner notices on its next allocation.
#[derive(Debug)]
pub(crate) struct TlabCell {
    pub(crate) region: u32,
    pub(crate) start: u32,
    pub(crate) end: u32,
    pub(crate) top: AtomicU32,
    pub(crate) dead: AtomicBool,
}

impl TlabCell {
    pub(crate) fn free_bytes(&self) -> u32 {
        self.end - self.top.load(Ordering::Relaxed)
    }
}

// ── the heap ───────────────────────────────────────────────────────────

impl std::fmt::Debug for Heap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let st = self.state.lock().unwrap();
        f.debug_struct("Heap")
            .field("config", &self.config)
            .field("regions_in_use", &st.regions_in_use)
            .field("generations", &st.generations.len())
            .field("epoch", &self.epoch())
            .finish_non_exhaustive()
    }
}

pub struct Heap {
    pub(crate) config: HeapConfig,
    pub(crate) arenas: Box<[Arena]>,
    pub(crate) state: Mutex<HeapState>,
    pub(crate) roots: Mutex<RootTable>,
    pub(crate) classes: RwLock<Vec<ClassDescriptor>>,
    /// Completed collections.
    pub(crate) epoch: AtomicU64,
    /// Write-barrier remembered-set insertions since the last collection.
    pub(crate) rset_updates: AtomicU64,
    pub(crate) next_thread_id: AtomicU64,
    pub(crate) tlab_registry: Mutex<Vec<Arc<TlabCell>>>,
    pub(crate) gc_log: Mutex<Vec<GcReport>>,
    pub(crate) last_outcome: Mutex<Option<CollectionOutcome>>,
    pub(crate) marking: Mutex<Option<MarkingStats>>,
    pub(crate) profiler: Mutex<Option<Arc<Profiler>>>,
}

impl Heap {
    /// Creates a heap with the two built-in generations: Gen 0 starts with
    /// one Eden region and Old with one tenured region; every other region
    /// is free.
    pub fn new(config: HeapConfig) -> Result<Heap> {
        config.validate()?;
        let region_count = config.region_count();
        let mut arenas = Vec::with_capacity(region_count as usize);
        for _ in 0..region_count {
            arenas.push(Arena::new(config.region_bytes));
        }
        let regions = vec![
            RegionMeta {
                owner: None,
                kind: SpaceKind::Eden,
                top: 0,
                live_estimate: None,
            };
            region_count as usize
        ];
        // LIFO free list primed so the first acquisitions get ascending ids.
        let free: Vec<u32> = (0..region_count).rev().collect();
        let generations = vec![
            Generation {
                gen_id: GEN0,
                regions: Vec::new(),
                alloc_region: None,
                created_epoch: 0,
                discarded: false,
            },
            Generation {
                gen_id: OLD_GEN,
                regions: Vec::new(),
                alloc_region: None,
                created_epoch: 0,
                discarded: false,
            },
        ];
        let heap = Heap {
            config,
            arenas: arenas.into_boxed_slice(),
            state: Mutex::new(HeapState {
                regions,
                free,
                generations,
                regions_in_use: 0,
                max_regions_in_use: 0,
            }),
            roots: Mutex::new(RootTable::default()),
            classes: RwLock::new(Vec::new()),
            epoch: AtomicU64::new(0),
            rset_updates: AtomicU64::new(0),
            next_thread_id: AtomicU64::new(0),
            tlab_registry: Mutex::new(Vec::new()),
            gc_log: Mutex::new(Vec::new()),
            last_outcome: Mutex::new(None),
            marking: Mutex::new(None),
            profiler: Mutex::new(None),
        };
        {
            let mut st = heap.state.lock().unwrap();
            heap.acquire_region_locked(&mut st, GEN0, SpaceKind::Eden)?;
            heap.acquire_region_locked(&mut st, OLD_GEN, SpaceKind::Tenured)?;
        }
        Ok(heap)
    }

    pub fn config(&self) -> &HeapConfig {
        &self.config
    }

    /// Completed collection count.
    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Relaxed)
    }

    /// Moves a free region into `gen`'s region list and makes it the
    /// generation's current allocation region. A discarded generation is
    /// re-created first.
    pub fn region_acquire(&self, gen: u32, kind: SpaceKind) -> Result<u32> {
        let mut st = self.state.lock().unwrap();
        self.acquire_region_locked(&mut st, gen, kind)
    }

    pub(crate) fn acquire_region_locked(
        &self,
        st: &mut HeapState,
        gen: u32,
        kind: SpaceKind,
    ) -> Result<u32> {
        if gen as usize >= st.generations.len() {
            return Err(HeapError::UnknownGeneration(gen));
        }
        let region = st.free.pop().ok_or(HeapError::HeapExhausted)?;
        let g = &mut st.generations[gen as usize];
        if g.discarded {
            g.discarded = false;
            g.created_epoch = self.epoch();
        }
        g.regions.push(region);
        g.alloc_region = Some(region);
        let meta = &mut st.regions[region as usize];
        debug_assert!(meta.owner.is_none() && meta.top == 0);
        meta.owner = Some(gen);
        meta.kind = kind;
        meta.live_estimate = None;
        st.regions_in_use += 1;
        st.max_regions_in_use = st.max_regions_in_use.max(st.regions_in_use);
        Ok(region)
    }

    /// Returns a region to the free list: storage zeroed, remembered set
    /// cleared. A dynamic generation losing its last region is discarded.
    /// The caller is responsible for the region holding no live objects.
    pub fn region_release(&self, region: u32) -> Result<()> {
        debug_assert!(
            !self
                .roots
                .lock()
                .unwrap()
                .iter_live()
                .any(|r| r.region == region),
            "released region {region} is still directly rooted"
        );
        let mut st = self.state.lock().unwrap();
        self.release_region_locked(&mut st, region)
    }

    pub(crate) fn release_region_locked(&self, st: &mut HeapState, region: u32) -> Result<()> {
        let meta = st
            .regions
            .get(region as usize)
            .ok_or(HeapError::UnknownRegion(region))?;
        let gen = meta.owner.ok_or(HeapError::DoubleFree(region))?;
        // Outstanding TLABs into this region die with it; the storage is
        // zeroed wholesale so no tail filler is needed.
        self.tlab_registry.lock().unwrap().retain(|c| {
            if c.region == region {
                c.dead.store(true, Ordering::Relaxed);
                false
            } else {
                true
            }
        });
        let top = meta.top;
        self.arenas[region as usize].zero_range(0, top);
        self.arenas[region as usize].rset.lock().unwrap().clear();
        let meta = &mut st.regions[region as usize];
        meta.owner = None;
        meta.top = 0;
        meta.live_estimate = None;

        let g = &mut st.generations[gen as usize];
        g.regions.retain(|&r| r != region);
        if g.alloc_region == Some(region) {
            g.alloc_region = None;
        }
        if gen > OLD_GEN && g.regions.is_empty() {
            g.discarded = true;
            g.alloc_region = None;
        }
        st.free.push(region);
        st.regions_in_use -= 1;
        Ok(())
    }

    /// Fraction of the heap held by non-free regions.
    pub fn occupancy(&self) -> f64 {
        let st = self.state.lock().unwrap();
        st.regions_in_use as f64 / st.regions.len() as f64
    }

    pub fn region_count(&self) -> u32 {
        self.arenas.len() as u32
    }

    pub fn free_region_count(&self) -> u32 {
        self.state.lock().unwrap().free.len() as u32
    }

    pub fn regions_in_use(&self) -> u32 {
        self.state.lock().unwrap().regions_in_use
    }

    /// High-water mark of regions in use since heap creation.
    pub fn max_regions_in_use(&self) -> u32 {
        self.state.lock().unwrap().max_regions_in_use
    }

    /// Remembered set of `region` as sorted (source region, reference count)
    /// pairs.
    pub fn remembered_set(&self, region: u32) -> Vec<(u32, u64)> {
        self.arenas[region as usize].rset_pairs()
    }

    pub fn generation_count(&self) -> u32 {
        self.state.lock().unwrap().generations.len() as u32
    }

    pub fn generation_info(&self, gen: u32) -> Result<GenerationInfo> {
        let st = self.state.lock().unwrap();
        let g = st
            .generations
            .get(gen as usize)
            .ok_or(HeapError::UnknownGeneration(gen))?;
        Ok(GenerationInfo {
            gen_id: g.gen_id,
            regions: g.regions.clone(),
            alloc_region: g.alloc_region,
            created_epoch: g.created_epoch,
            discarded: g.discarded,
        })
    }

    pub fn gc_reports(&self) -> Vec<GcReport> {
        self.gc_log.lock().unwrap().clone()
    }

    pub fn last_collection_outcome(&self) -> Option<CollectionOutcome> {
        self.last_outcome.lock().unwrap().clone()
    }

    pub fn marking_stats(&self) -> Option<MarkingStats> {
        self.marking.lock().unwrap().clone()
    }

    /// Attaches a profiler that will observe every subsequent collection.
    pub fn attach_profiler(&self, p: Arc<Profiler>) {
        *self.profiler.lock().unwrap() = Some(p);
    }

    pub fn detach_profiler(&self) {
        *self.profiler.lock().unwrap() = None;
    }

    // ── TLAB support ───────────────────────────────────────────────────

    /// Kills one TLAB: fills the unused tail with a filler object so region
    /// scans stay linear, and marks the cell dead for its owner.
    pub(crate) fn retire_tlab(&self, cell: &TlabCell) {
        if cell.dead.swap(true, Ordering::Relaxed) {
            return;
        }
        let top = cell.top.load(Ordering::Relaxed);
        debug_assert!(top >= cell.start && top <= cell.end);
        if top < cell.end {
            self.arenas[cell.region as usize]
                .store_word(top / 8, pack_filler_word(cell.end - top));
        }
    }

    /// Safepoint helper: retires every outstanding TLAB, filling unused
    /// tails with fillers so all regions walk linearly. Collections call
    /// this on entry; verification code may call it directly. Owners
    /// materialize fresh TLABs on their next allocation.
    pub fn retire_all_tlabs(&self) {
        let mut reg = self.tlab_registry.lock().unwrap();
        for cell in reg.drain(..) {
            self.retire_tlab(&cell);
        }
    }

    pub(crate) fn register_tlab(&self, cell: Arc<TlabCell>) {
        self.tlab_registry.lock().unwrap().push(cell);
    }

    pub(crate) fn unregister_tlab(&self, cell: &Arc<TlabCell>) {
        self.tlab_registry
            .lock()
            .unwrap()
            .retain(|c| !Arc::ptr_eq(c, cell));
    }

    // ── introspection ──────────────────────────────────────────────────

    /// Verifies the partition invariant: every region id sits in exactly
    /// one generation's list or the free list.
    pub fn check_region_partition(&self) -> bool {
        let st = self.state.lock().unwrap();
        let mut seen = vec![0u32; st.regions.len()];
        for &r in &st.free {
            seen[r as usize] += 1;
            if st.regions[r as usize].owner.is_some() {
                return false;
            }
        }
        for g in &st.generations {
            for &r in &g.regions {
                seen[r as usize] += 1;
                if st.regions[r as usize].owner != Some(g.gen_id) {
                    return false;
                }
            }
        }
        seen.iter().all(|&n| n == 1)
    }

    /// Full copy of the heap's observable state: region ownership, raw
    /// words up to each bump pointer, remembered sets, roots, and classes.
    /// Oracles in the test suites decode this dump independently of the
    /// collector.
    pub fn dump(&self) -> HeapDump {
        let st = self.state.lock().unwrap();
        let regions = st
            .regions
            .iter()
            .enumerate()
            .map(|(id, meta)| RegionDump {
                id: id as u32,
                owner: meta.owner,
                kind: meta.kind,
                top: meta.top,
                live_estimate: meta.live_estimate,
                words: (0..meta.top / 8)
                    .map(|w| self.arenas[id].load_word(w))
                    .collect(),
                rset: self.arenas[id].rset_pairs(),
            })
            .collect();
        HeapDump {
            region_bytes: self.config.region_bytes as u32,
            regions,
            roots: self.roots.lock().unwrap().iter_live().collect(),
            classes: self.classes.read().unwrap().clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationInfo {
    pub gen_id: u32,
    pub regions: Vec<u32>,
    pub alloc_region: Option<u32>,
    pub created_epoch: u64,
    pub discarded: bool,
}

#[derive(Debug, Clone)]
pub struct RegionDump {
    pub id: u32,
    pub owner: Option<u32>,
    pub kind: SpaceKind,
    pub top: u32,
    pub live_estimate: Option<u64>,
    /// Raw words in `[0, top)`.
    pub words: Vec<u64>,
    pub rset: Vec<(u32, u64)>,
}

impl RegionDump {
    /// Decodes the extents tiling `[0, top)` as (offset, class_id, size)
    /// triples. Fillers appear with class id
    /// [`crate::object_model::FILLER_CLASS`]. Only walkable when no live
    /// TLAB extent is parked in the region (see `Heap::retire_all_tlabs`,
    /// which collections invoke at every safepoint).
    pub fn object_extents(&self) -> Vec<(u32, u32, u32)> {
        let mut out = Vec::new();
        let mut off = 0u32;
        while off < self.top {
            let word = self.words[(off / 8) as usize];
            let (class, size) = crate::object_model::unpack_word0(word);
            assert!(
                size >= 8 && size % 8 == 0,
                "region {} is not linearly walkable at offset {off}",
                self.id
            );
            out.push((off, class, size));
            off += size;
        }
        out
    }
}

/// Decodes a raw reference-slot word from a [`RegionDump`]; `None` is null.
pub fn decode_slot_word(word: u64) -> Option<ObjectRef> {
    crate::object_model::decode_ref(word)
}

#[derive(Debug, Clone)]
pub struct HeapDump {
    pub region_bytes: u32,
    pub regions: Vec<RegionDump>,
    pub roots: Vec<ObjectRef>,
    pub classes: Vec<ClassDescriptor>,
}
