//! Simulated object model: headers, references, class shapes, and the
//! mutation interface every reference store goes through (so the write
//! barrier can observe it).
//!
//! # Memory layout
//!
//! Heap memory is modeled as 8-byte words. Every object starts with a
//! 16-byte (two-word) header, followed by its reference slots (one word
//! each) and then its payload words:
//!
//! ```text
//! word 0:  class_id (low 32 bits) | size_bytes (high 32 bits)
//! word 1:  age (bits 0..8) | flags (bits 8..16)
//! word 2..2+n:  reference slots (encoded ObjectRef or 0 for null)
//! rest:    payload words
//! ```
//!
//! During evacuation word 0 of a moved object is overwritten with the
//! encoded forwarding reference and the `FORWARDED` flag is set in word 1;
//! the new copy carries the real header. Gaps left by retired TLABs and
//! region tails are covered by one-word fillers (`class_id == FILLER_CLASS`,
//! length in the high 32 bits) so a region scan stays linear.

use std::fmt;
use std::sync::atomic::Ordering;

use crate::error::{HeapError, Result};
use crate::heap::Heap;

/// Fixed object header size in bytes.
pub const HEADER_BYTES: u32 = 16;
/// Width of one reference slot in bytes.
pub const REF_SLOT_BYTES: u32 = 8;
/// Allocation-unit alignment in bytes; all object sizes and offsets are
/// multiples of this.
pub const ALLOC_ALIGN: u32 = 8;
/// Reserved class id marking filler pseudo-objects.
pub const FILLER_CLASS: u32 = u32::MAX;

pub(crate) const FLAG_MARK: u8 = 0b01;
pub(crate) const FLAG_FORWARDED: u8 = 0b10;

/// Index into the heap's class registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u32);

/// Shape of a class: how many reference slots and payload bytes its
/// instances carry. Total instance size is derived once at registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassDescriptor {
    pub class_id: ClassId,
    pub ref_slot_count: u32,
    pub payload_bytes: u32,
    pub is_array: bool,
    /// header + slots + payload, rounded up to [`ALLOC_ALIGN`].
    pub size_bytes: u32,
}

impl ClassDescriptor {
    pub fn payload_words(&self) -> u32 {
        self.size_bytes / 8 - 2 - self.ref_slot_count
    }
}

/// Total allocated size for a given shape.
pub fn object_size(ref_slot_count: u32, payload_bytes: u32) -> u32 {
    let raw = HEADER_BYTES as u64
        + ref_slot_count as u64 * REF_SLOT_BYTES as u64
        + payload_bytes as u64;
    let aligned = (raw + ALLOC_ALIGN as u64 - 1) & !(ALLOC_ALIGN as u64 - 1);
    aligned.try_into().expect("object size overflows u32")
}

/// Simulated address: a byte offset inside one region. Always points at an
/// object header start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectRef {
    pub region: u32,
    pub offset: u32,
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}+{}", self.region, self.offset)
    }
}

// ── word-level encoding ────────────────────────────────────────────────

pub(crate) fn pack_object_word0(class_id: u32, size_bytes: u32) -> u64 {
    class_id as u64 | (size_bytes as u64) << 32
}

pub(crate) fn pack_filler_word(len_bytes: u32) -> u64 {
    FILLER_CLASS as u64 | (len_bytes as u64) << 32
}

/// Splits a header word 0 into (class_id, size_bytes) — or, for fillers,
/// (FILLER_CLASS, length).
pub(crate) fn unpack_word0(word: u64) -> (u32, u32) {
    (word as u32, (word >> 32) as u32)
}

pub(crate) fn pack_word1(age: u8, flags: u8) -> u64 {
    age as u64 | (flags as u64) << 8
}

pub(crate) fn unpack_word1(word: u64) -> (u8, u8) {
    (word as u8, (word >> 8) as u8)
}

/// Slot encoding: 0 is null; otherwise `(region + 1) << 32 | offset`, so a
/// reference to region 0 offset 0 stays distinguishable from null.
pub(crate) fn encode_ref(r: Option<ObjectRef>) -> u64 {
    match r {
        None => 0,
        Some(r) => ((r.region as u64 + 1) << 32) | r.offset as u64,
    }
}

pub(crate) fn decode_ref(word: u64) -> Option<ObjectRef> {
    if word == 0 {
        None
    } else {
        Some(ObjectRef {
            region: (word >> 32) as u32 - 1,
            offset: word as u32,
        })
    }
}

// ── roots ──────────────────────────────────────────────────────────────

/// Stable handle to a GC root. Handles survive object moves: the collector
/// rewrites the underlying table entry, and [`Heap::resolve_root`] always
/// yields the object's current address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RootHandle {
    pub(crate) index: u32,
    pub(crate) nonce: u32,
}

#[derive(Debug, Default)]
pub(crate) struct RootTable {
    pub(crate) slots: Vec<RootSlot>,
    free: Vec<u32>,
}

#[derive(Debug)]
pub(crate) struct RootSlot {
    pub(crate) nonce: u32,
    pub(crate) obj: Option<ObjectRef>,
}

impl RootTable {
    pub(crate) fn register(&mut self, obj: ObjectRef) -> RootHandle {
        if let Some(index) = self.free.pop() {
            let slot = &mut self.slots[index as usize];
            slot.nonce = slot.nonce.wrapping_add(1);
            slot.obj = Some(obj);
            RootHandle {
                index,
                nonce: slot.nonce,
            }
        } else {
            let index = self.slots.len() as u32;
            self.slots.push(RootSlot {
                nonce: 0,
                obj: Some(obj),
            });
            RootHandle { index, nonce: 0 }
        }
    }

    pub(crate) fn unregister(&mut self, h: RootHandle) -> Result<()> {
        let slot = self
            .slots
            .get_mut(h.index as usize)
            .ok_or(HeapError::InvalidRootHandle)?;
        if slot.nonce != h.nonce || slot.obj.is_none() {
            return Err(HeapError::InvalidRootHandle);
        }
        slot.obj = None;
        self.free.push(h.index);
        Ok(())
    }

    pub(crate) fn resolve(&self, h: RootHandle) -> Result<ObjectRef> {
        let slot = self
            .slots
            .get(h.index as usize)
            .ok_or(HeapError::InvalidRootHandle)?;
        if slot.nonce != h.nonce {
            return Err(HeapError::InvalidRootHandle);
        }
        slot.obj.ok_or(HeapError::InvalidRootHandle)
    }

    /// Live roots in handle order.
    pub(crate) fn iter_live(&self) -> impl Iterator<Item = ObjectRef> + '_ {
        self.slots.iter().filter_map(|s| s.obj)
    }
}

// ── mutation interface on Heap ─────────────────────────────────────────

impl Heap {
    /// Registers a class shape and returns its id. Class ids are unique
    /// within one heap instance.
    pub fn register_class(
        &self,
        ref_slot_count: u32,
        payload_bytes: u32,
        is_array: bool,
    ) -> ClassId {
        let size_bytes = object_size(ref_slot_count, payload_bytes);
        let mut classes = self.classes.write().unwrap();
        let id = ClassId(classes.len() as u32);
        assert!(id.0 != FILLER_CLASS, "class registry exhausted");
        classes.push(ClassDescriptor {
            class_id: id,
            ref_slot_count,
            payload_bytes,
            is_array,
            size_bytes,
        });
        id
    }

    pub fn class_descriptor(&self, id: ClassId) -> Result<ClassDescriptor> {
        self.classes
            .read()
            .unwrap()
            .get(id.0 as usize)
            .copied()
            .ok_or(HeapError::UnknownClass(id.0))
    }

    /// Checks that `obj` points at a live object header and returns its
    /// class shape. Catches out-of-bounds, misaligned, filler, forwarded
    /// (outside a collection), and unregistered-class references; a stale
    /// reference into recycled memory is detected on a best-effort basis.
    pub(crate) fn validate_ref(&self, obj: ObjectRef) -> Result<ClassDescriptor> {
        let region_bytes = self.config.region_bytes as u32;
        if obj.region as usize >= self.arenas.len()
            || obj.offset % ALLOC_ALIGN != 0
            || obj.offset + HEADER_BYTES > region_bytes
        {
            return Err(HeapError::InvalidReference(obj));
        }
        let arena = &self.arenas[obj.region as usize];
        let w1 = arena.load_word(obj.offset / 8 + 1);
        let (_, flags) = unpack_word1(w1);
        if flags & FLAG_FORWARDED != 0 {
            return Err(HeapError::InvalidReference(obj));
        }
        let (class_id, size) = unpack_word0(arena.load_word(obj.offset / 8));
        if class_id == FILLER_CLASS {
            return Err(HeapError::InvalidReference(obj));
        }
        let desc = self
            .class_descriptor(ClassId(class_id))
            .map_err(|_| HeapError::InvalidReference(obj))?;
        if desc.size_bytes != size || obj.offset + size > region_bytes {
            return Err(HeapError::InvalidReference(obj));
        }
        Ok(desc)
    }

    /// Reads reference slot `slot` of `obj`; `None` means null.
    pub fn read_ref(&self, obj: ObjectRef, slot: u32) -> Result<Option<ObjectRef>> {
        let desc = self.validate_ref(obj)?;
        if slot >= desc.ref_slot_count {
            return Err(HeapError::SlotOutOfBounds {
                slot,
                slot_count: desc.ref_slot_count,
            });
        }
        let arena = &self.arenas[obj.region as usize];
        Ok(decode_ref(arena.load_word(obj.offset / 8 + 2 + slot)))
    }

    /// Stores `target` into reference slot `slot` of `obj`.
    ///
    /// This is the write barrier: a cross-region store records
    /// (obj's region → target's region) in the target region's remembered
    /// set; overwriting a cross-region reference retires the old entry, so
    /// remembered sets stay exact. Must not be called while a collection is
    /// in progress.
    pub fn write_ref(&self, obj: ObjectRef, slot: u32, target: Option<ObjectRef>) -> Result<()> {
        let desc = self.validate_ref(obj)?;
        if slot >= desc.ref_slot_count {
            return Err(HeapError::SlotOutOfBounds {
                slot,
                slot_count: desc.ref_slot_count,
            });
        }
        if let Some(t) = target {
            self.validate_ref(t)?;
        }
        let arena = &self.arenas[obj.region as usize];
        let old_word = arena.words[(obj.offset / 8 + 2 + slot) as usize]
            .swap(encode_ref(target), Ordering::Relaxed);

        if let Some(t) = target {
            if t.region != obj.region {
                self.arenas[t.region as usize].rset_inc(obj.region);
                self.rset_updates.fetch_add(1, Ordering::Relaxed);
            }
        }
        if let Some(old) = decode_ref(old_word) {
            if old.region != obj.region {
                self.arenas[old.region as usize].rset_dec(obj.region);
            }
        }
        Ok(())
    }

    /// Reads payload word `word` (0-based, after the reference slots).
    pub fn read_payload_word(&self, obj: ObjectRef, word: u32) -> Result<u64> {
        let desc = self.validate_ref(obj)?;
        if word >= desc.payload_words() {
            return Err(HeapError::PayloadOutOfBounds {
                word,
                word_count: desc.payload_words(),
            });
        }
        let arena = &self.arenas[obj.region as usize];
        Ok(arena.load_word(obj.offset / 8 + 2 + desc.ref_slot_count + word))
    }

    pub fn write_payload_word(&self, obj: ObjectRef, word: u32, value: u64) -> Result<()> {
        let desc = self.validate_ref(obj)?;
        if word >= desc.payload_words() {
            return Err(HeapError::PayloadOutOfBounds {
                word,
                word_count: desc.payload_words(),
            });
        }
        let arena = &self.arenas[obj.region as usize];
        arena.store_word(obj.offset / 8 + 2 + desc.ref_slot_count + word, value);
        Ok(())
    }

    /// Makes `obj` a GC root. The returned handle stays valid across
    /// collections; re-read the object's address with [`Heap::resolve_root`].
    pub fn register_root(&self, obj: ObjectRef) -> Result<RootHandle> {
        self.validate_ref(obj)?;
        Ok(self.roots.lock().unwrap().register(obj))
    }

    pub fn unregister_root(&self, h: RootHandle) -> Result<()> {
        self.roots.lock().unwrap().unregister(h)
    }

    /// Current address of a rooted object.
    pub fn resolve_root(&self, h: RootHandle) -> Result<ObjectRef> {
        self.roots.lock().unwrap().resolve(h)
    }

    /// Live roots in handle order (test and collector support).
    pub fn root_refs(&self) -> Vec<ObjectRef> {
        self.roots.lock().unwrap().iter_live().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::HeapConfig;

    fn small_heap() -> Heap {
        Heap::new(HeapConfig {
            heap_bytes: 1 << 20,
            region_bytes: 32 << 10,
            gen0_max_bytes: 256 << 10,
            tlab_bytes: 1024,
            ..HeapConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn object_size_rounds_to_alignment() {
        assert_eq!(object_size(0, 0), 16);
        assert_eq!(object_size(1, 0), 24);
        assert_eq!(object_size(0, 1), 24);
        assert_eq!(object_size(2, 40), 72);
        assert_eq!(object_size(0, 48), 64);
    }

    #[test]
    fn ref_encoding_round_trips() {
        assert_eq!(decode_ref(encode_ref(None)), None);
        let r = ObjectRef {
            region: 0,
            offset: 0,
        };
        assert_eq!(decode_ref(encode_ref(Some(r))), Some(r));
        let r = ObjectRef {
            region: 2047,
            offset: 32760,
        };
        assert_eq!(decode_ref(encode_ref(Some(r))), Some(r));
    }

    #[test]
    fn fresh_object_slots_read_null() {
        let heap = small_heap();
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let class = heap.register_class(3, 16, false);
        let obj = ctx.allocate(&heap, class, false).unwrap();
        for slot in 0..3 {
            assert_eq!(heap.read_ref(obj, slot).unwrap(), None);
        }
        assert_eq!(heap.read_payload_word(obj, 0).unwrap(), 0);
    }

    #[test]
    fn read_after_write() {
        let heap = small_heap();
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let class = heap.register_class(2, 0, false);
        let a = ctx.allocate(&heap, class, false).unwrap();
        let b = ctx.allocate(&heap, class, false).unwrap();
        heap.write_ref(a, 0, Some(b)).unwrap();
        assert_eq!(heap.read_ref(a, 0).unwrap(), Some(b));
        heap.write_ref(a, 0, None).unwrap();
        assert_eq!(heap.read_ref(a, 0).unwrap(), None);
    }

    #[test]
    fn slot_bounds_checked() {
        let heap = small_heap();
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let class = heap.register_class(1, 0, false);
        let obj = ctx.allocate(&heap, class, false).unwrap();
        assert_eq!(
            heap.read_ref(obj, 1),
            Err(HeapError::SlotOutOfBounds {
                slot: 1,
                slot_count: 1
            })
        );
        assert_eq!(
            heap.write_ref(obj, 7, None),
            Err(HeapError::SlotOutOfBounds {
                slot: 7,
                slot_count: 1
            })
        );
    }

    #[test]
    fn intra_region_store_not_remembered() {
        let heap = small_heap();
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let class = heap.register_class(1, 0, false);
        let a = ctx.allocate(&heap, class, false).unwrap();
        let b = ctx.allocate(&heap, class, false).unwrap();
        assert_eq!(a.region, b.region, "small objects share the first TLAB");
        heap.write_ref(a, 0, Some(b)).unwrap();
        assert!(heap.remembered_set(b.region).is_empty());
    }

    #[test]
    fn cross_region_store_remembered_and_retired() {
        let heap = small_heap();
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let class = heap.register_class(1, 0, false);
        let a = ctx.allocate(&heap, class, false).unwrap();
        crate::allocator::new_generation(&heap, &mut ctx);
        let b = ctx.allocate(&heap, class, true).unwrap();
        assert_ne!(a.region, b.region);

        heap.write_ref(a, 0, Some(b)).unwrap();
        assert_eq!(heap.remembered_set(b.region), vec![(a.region, 1)]);

        // Overwriting the slot retires the entry.
        heap.write_ref(a, 0, None).unwrap();
        assert!(heap.remembered_set(b.region).is_empty());
    }

    #[test]
    fn double_unregister_rejected() {
        let heap = small_heap();
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let class = heap.register_class(0, 0, false);
        let obj = ctx.allocate(&heap, class, false).unwrap();
        let h = heap.register_root(obj).unwrap();
        heap.unregister_root(h).unwrap();
        assert_eq!(heap.unregister_root(h), Err(HeapError::InvalidRootHandle));
        assert_eq!(heap.resolve_root(h), Err(HeapError::InvalidRootHandle));
    }

    #[test]
    fn concurrent_write_barrier_loses_no_entries() {
        // Four threads store into disjoint slots of one shared object;
        // afterwards every remembered set must equal a full slot scan.
        let heap = std::sync::Arc::new(small_heap());
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let shared_class = heap.register_class(256, 0, false);
        let target_class = heap.register_class(0, 16, false);
        let shared = ctx.allocate(&heap, shared_class, false).unwrap();
        let mut targets = Vec::new();
        for _ in 0..4 {
            crate::allocator::new_generation(&heap, &mut ctx);
            targets.push(ctx.allocate(&heap, target_class, true).unwrap());
        }

        let mut handles = Vec::new();
        for t in 0..4u32 {
            let heap = heap.clone();
            let targets = targets.clone();
            handles.push(std::thread::spawn(move || {
                for round in 0..200u32 {
                    for slot in (t * 64)..(t * 64 + 64) {
                        let pick = targets[((slot + round) % 4) as usize];
                        heap.write_ref(shared, slot, Some(pick)).unwrap();
                    }
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }

        heap.retire_all_tlabs();
        let dump = heap.dump();
        let mut expected: std::collections::BTreeMap<u32, std::collections::BTreeMap<u32, u64>> =
            Default::default();
        for region in &dump.regions {
            for (off, class_id, _) in region.object_extents() {
                if class_id == FILLER_CLASS {
                    continue;
                }
                let desc = &dump.classes[class_id as usize];
                for slot in 0..desc.ref_slot_count {
                    if let Some(t) = decode_ref(region.words[(off / 8 + 2 + slot) as usize]) {
                        if t.region != region.id {
                            *expected
                                .entry(t.region)
                                .or_default()
                                .entry(region.id)
                                .or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        for region in &dump.regions {
            let want: Vec<(u32, u64)> = expected
                .get(&region.id)
                .map(|m| m.iter().map(|(&s, &n)| (s, n)).collect())
                .unwrap_or_default();
            assert_eq!(region.rset, want, "lost or spurious entries for region {}", region.id);
        }
    }

    #[test]
    fn reused_handle_gets_new_nonce() {
        let heap = small_heap();
        let mut ctx = crate::allocator::ThreadContext::new(&heap);
        let class = heap.register_class(0, 0, false);
        let a = ctx.allocate(&heap, class, false).unwrap();
        let b = ctx.allocate(&heap, class, false).unwrap();
        let h1 = heap.register_root(a).unwrap();
        heap.unregister_root(h1).unwrap();
        let h2 = heap.register_root(b).unwrap();
        assert_eq!(h1.index, h2.index);
        assert_eq!(heap.resolve_root(h1), Err(HeapError::InvalidRootHandle));
        assert_eq!(heap.resolve_root(h2), Ok(b));
    }
}
