//! Mutator-facing allocation paths: per-thread, per-generation TLABs with
//! lazy materialization, bump allocation, and the slow region path.
//!
//! Every allocation is routed by the pretenure flag: pretenured objects go
//! to the thread's current generation, everything else to Gen 0. Arrays and
//! objects at or above `tlab_bytes / 8` skip the TLAB fast path. A TLAB for
//! a generation costs nothing until the thread's first allocation into it.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;

use crate::collector;
use crate::error::{HeapError, Result};
use crate::heap::{Generation, Heap, HeapState, SpaceKind, TlabCell, GEN0};
use crate::object_model::{pack_filler_word, pack_object_word0, ClassDescriptor, ClassId, ObjectRef};

/// Per-mutator allocation state: the thread's current generation and its
/// lazily materialized TLABs. Owned by exactly one thread; all heap access
/// goes through a shared [`Heap`] reference.
pub struct ThreadContext {
    thread_id: u64,
    current_generation: u32,
    tlabs: HashMap<u32, Arc<TlabCell>>,
}

impl ThreadContext {
    /// New mutator context. Its current generation starts at Gen 0.
    pub fn new(heap: &Heap) -> ThreadContext {
        ThreadContext {
            thread_id: heap.next_thread_id.fetch_add(1, Ordering::Relaxed),
            current_generation: GEN0,
            tlabs: HashMap::new(),
        }
    }

    pub fn thread_id(&self) -> u64 {
        self.thread_id
    }

    pub fn current_generation(&self) -> u32 {
        self.current_generation
    }

    /// Generations this context holds a TLAB for, sorted.
    pub fn tlab_generations(&self) -> Vec<u32> {
        let mut gens: Vec<u32> = self.tlabs.keys().copied().collect();
        gens.sort_unstable();
        gens
    }

    /// Extent of this thread's TLAB for `gen`, as (region, start, end), if
    /// one is materialized and still valid.
    pub fn tlab_extent(&self, gen: u32) -> Option<(u32, u32, u32)> {
        let cell = self.tlabs.get(&gen)?;
        if cell.dead.load(Ordering::Relaxed) {
            return None;
        }
        Some((cell.region, cell.start, cell.end))
    }

    /// Allocates an instance of `class`. Pretenured allocations land in the
    /// thread's current generation, the rest in Gen 0. The object comes back
    /// zero-initialized (null slots, zero payload) with age 0.
    ///
    /// On exhaustion this triggers one collection and retries once before
    /// reporting [`HeapError::OutOfMemory`].
    pub fn allocate(&mut self, heap: &Heap, class: ClassId, pretenure: bool) -> Result<ObjectRef> {
        let desc = heap.class_descriptor(class)?;
        let size = desc.size_bytes;
        if size as u64 > heap.config().region_bytes {
            return Err(HeapError::ObjectTooLarge {
                size,
                capacity: heap.config().region_bytes as u32,
            });
        }
        let gen = if pretenure {
            self.current_generation
        } else {
            GEN0
        };
        let large = size >= heap.config().large_object_threshold();

        if !desc.is_array && !large {
            if let Some(obj) = self.try_bump(heap, gen, &desc) {
                return Ok(obj);
            }
        }
        // slow path
        if large {
            alloc_in_region(heap, gen, class)
        } else {
            self.alloc_in_tlab(heap, gen, &desc)
        }
    }

    /// TLAB fast path: bump the current TLAB for `gen` if it exists, is
    /// still valid, and has room.
    fn try_bump(&mut self, heap: &Heap, gen: u32, desc: &ClassDescriptor) -> Option<ObjectRef> {
        let cell = self.tlabs.get(&gen)?;
        if cell.dead.load(Ordering::Relaxed) {
            self.tlabs.remove(&gen);
            return None;
        }
        if cell.free_bytes() < desc.size_bytes {
            return None;
        }
        let top = cell.top.load(Ordering::Relaxed);
        cell.top.store(top + desc.size_bytes, Ordering::Relaxed);
        Some(init_object(heap, cell.region, top, desc))
    }

    /// TLAB slow path: allocate inside the current TLAB if it has room,
    /// otherwise materialize a fresh TLAB for `gen` (retiring the old one
    /// with a filler) and allocate from it.
    fn alloc_in_tlab(&mut self, heap: &Heap, gen: u32, desc: &ClassDescriptor) -> Result<ObjectRef> {
        debug_assert!(desc.size_bytes < heap.config().large_object_threshold() || desc.is_array);
        if let Some(obj) = {
            // Arrays arrive here without trying the fast path; bump in place
            // when the TLAB still has room.
            let cell = self.tlabs.get(&gen).filter(|c| !c.dead.load(Ordering::Relaxed));
            cell.and_then(|cell| {
                if cell.free_bytes() >= desc.size_bytes {
                    let top = cell.top.load(Ordering::Relaxed);
                    cell.top.store(top + desc.size_bytes, Ordering::Relaxed);
                    Some(init_object(heap, cell.region, top, desc))
                } else {
                    None
                }
            })
        } {
            return Ok(obj);
        }

        match self.materialize_tlab_and_bump(heap, gen, desc) {
            Err(HeapError::HeapExhausted) => {
                collect_for_allocation(heap)?;
                self.materialize_tlab_and_bump(heap, gen, desc)
                    .map_err(exhausted_to_oom)
            }
            other => other,
        }
    }

    fn materialize_tlab_and_bump(
        &mut self,
        heap: &Heap,
        gen: u32,
        desc: &ClassDescriptor,
    ) -> Result<ObjectRef> {
        let tlab_bytes = heap.config().tlab_bytes as u32;
        let (region, start) = {
            let mut st = heap.state.lock().unwrap();
            reserve_extent(heap, &mut st, gen, tlab_bytes)?
        };
        if let Some(old) = self.tlabs.remove(&gen) {
            heap.retire_tlab(&old);
            heap.unregister_tlab(&old);
        }
        let cell = Arc::new(TlabCell {
            region,
            start,
            end: start + tlab_bytes,
            top: AtomicU32::new(start + desc.size_bytes),
            dead: AtomicBool::new(false),
        });
        heap.register_tlab(cell.clone());
        self.tlabs.insert(gen, cell);
        Ok(init_object(heap, region, start, desc))
    }
}

/// Creates a fresh generation — no regions yet, so it costs no memory until
/// the first allocation — and makes it the calling thread's current
/// generation.
pub fn new_generation(heap: &Heap, ctx: &mut ThreadContext) -> u32 {
    let mut st = heap.state.lock().unwrap();
    let gen_id = st.generations.len() as u32;
    st.generations.push(Generation {
        gen_id,
        regions: Vec::new(),
        alloc_region: None,
        created_epoch: heap.epoch(),
        discarded: false,
    });
    drop(st);
    ctx.current_generation = gen_id;
    gen_id
}

pub fn get_generation(ctx: &ThreadContext) -> u32 {
    ctx.current_generation
}

/// Sets the thread's current generation. The generation must have been
/// created at some point; a discarded one is accepted and will be re-created
/// transparently on the next allocation into it.
pub fn set_generation(heap: &Heap, ctx: &mut ThreadContext, gen: u32) -> Result<()> {
    if gen as usize >= heap.state.lock().unwrap().generations.len() {
        return Err(HeapError::UnknownGeneration(gen));
    }
    ctx.current_generation = gen;
    Ok(())
}

/// Region-direct allocation for large objects: bumps the generation's
/// current allocation region, acquiring a new region when it does not fit,
/// and falling back to one collect-and-retry before giving up.
pub fn alloc_in_region(heap: &Heap, gen: u32, class: ClassId) -> Result<ObjectRef> {
    let desc = heap.class_descriptor(class)?;
    if desc.size_bytes as u64 > heap.config().region_bytes {
        return Err(HeapError::ObjectTooLarge {
            size: desc.size_bytes,
            capacity: heap.config().region_bytes as u32,
        });
    }
    let attempt = |heap: &Heap| -> Result<ObjectRef> {
        let mut st = heap.state.lock().unwrap();
        let (region, start) = reserve_extent(heap, &mut st, gen, desc.size_bytes)?;
        drop(st);
        Ok(init_object(heap, region, start, &desc))
    };
    match attempt(heap) {
        Err(HeapError::HeapExhausted) => {
            collect_for_allocation(heap)?;
            attempt(heap).map_err(exhausted_to_oom)
        }
        other => other,
    }
}

/// Carves `bytes` out of `gen`'s current allocation region. When the region
/// tail is too small it is closed with a filler and a new region becomes the
/// allocation region. Gen 0 acquisitions respect the Eden cap; reaching it
/// (or an empty free list) surfaces as `HeapExhausted` for the caller's
/// collect-and-retry.
fn reserve_extent(heap: &Heap, st: &mut HeapState, gen: u32, bytes: u32) -> Result<(u32, u32)> {
    if gen as usize >= st.generations.len() {
        return Err(HeapError::UnknownGeneration(gen));
    }
    let region_bytes = heap.config().region_bytes as u32;
    debug_assert!(bytes <= region_bytes);

    if let Some(ar) = st.generations[gen as usize].alloc_region {
        let top = st.regions[ar as usize].top;
        if region_bytes - top >= bytes {
            st.regions[ar as usize].top = top + bytes;
            return Ok((ar, top));
        }
        // Close the region: the unusable tail becomes a filler so scans
        // stay linear.
        if top < region_bytes {
            heap.arenas[ar as usize].store_word(top / 8, pack_filler_word(region_bytes - top));
            st.regions[ar as usize].top = region_bytes;
        }
    }

    let kind = if gen == GEN0 {
        if st.gen0_eden_regions() >= heap.config().gen0_max_eden_regions() {
            return Err(HeapError::HeapExhausted);
        }
        SpaceKind::Eden
    } else {
        SpaceKind::Tenured
    };
    let region = heap.acquire_region_locked(st, gen, kind)?;
    st.regions[region as usize].top = bytes;
    Ok((region, 0))
}

fn init_object(heap: &Heap, region: u32, offset: u32, desc: &ClassDescriptor) -> ObjectRef {
    // Slots and payload are already zero: extents come from zeroed storage.
    heap.arenas[region as usize].store_word(
        offset / 8,
        pack_object_word0(desc.class_id.0, desc.size_bytes),
    );
    ObjectRef { region, offset }
}

fn collect_for_allocation(heap: &Heap) -> Result<()> {
    let kind = collector::should_trigger(heap).unwrap_or(collector::CollectionKind::Full);
    collector::collect(heap, kind).map(|_| ())
}

fn exhausted_to_oom(e: HeapError) -> HeapError {
    match e {
        HeapError::HeapExhausted => HeapError::OutOfMemory,
        other => other,
    }
}
