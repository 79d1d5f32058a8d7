//! Independent oracles for the acceptance suite.
//!
//! Everything here re-derives ground truth from raw heap dumps — word
//! layout, reference encoding, reachability, and remembered-set contents
//! are decoded from first principles rather than through the collector's
//! own helpers, so the oracles stay independent of the implementation path
//! they check.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ngen_gc::heap::HeapDump;
use ngen_gc::object_model::ObjectRef;

/// Mirror of the documented object layout: 16-byte header (two words),
/// class id and size packed in word 0, age/flags in word 1, one word per
/// reference slot, payload words after.
pub const FILLER_CLASS: u32 = u32::MAX;

pub fn decode_slot(word: u64) -> Option<ObjectRef> {
    if word == 0 {
        None
    } else {
        Some(ObjectRef {
            region: (word >> 32) as u32 - 1,
            offset: word as u32,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimObject {
    pub at: ObjectRef,
    pub class: u32,
    pub size: u32,
    pub age: u8,
    pub flags: u8,
    pub slots: Vec<Option<ObjectRef>>,
    pub payload: Vec<u64>,
}

/// Decodes every object physically present in the dump (live or dead),
/// keyed by address. Panics if any region does not walk linearly.
pub fn objects_in_dump(dump: &HeapDump) -> BTreeMap<ObjectRef, SimObject> {
    let mut out = BTreeMap::new();
    for region in &dump.regions {
        if region.owner.is_none() {
            continue;
        }
        let mut off = 0u32;
        while off < region.top {
            let w0 = region.words[(off / 8) as usize];
            let class = w0 as u32;
            let size = (w0 >> 32) as u32;
            assert!(
                size >= 8 && size % 8 == 0 && off + size <= region.top,
                "oracle: region {} is not linearly walkable at offset {off}",
                region.id
            );
            if class != FILLER_CLASS {
                let w1 = region.words[(off / 8 + 1) as usize];
                let desc = &dump.classes[class as usize];
                let slots: Vec<Option<ObjectRef>> = (0..desc.ref_slot_count)
                    .map(|s| decode_slot(region.words[(off / 8 + 2 + s) as usize]))
                    .collect();
                let payload: Vec<u64> = (2 + desc.ref_slot_count..size / 8)
                    .map(|w| region.words[(off / 8 + w) as usize])
                    .collect();
                let at = ObjectRef {
                    region: region.id,
                    offset: off,
                };
                out.insert(
                    at,
                    SimObject {
                        at,
                        class,
                        size,
                        age: w1 as u8,
                        flags: (w1 >> 8) as u8,
                        slots,
                        payload,
                    },
                );
            }
            off += size;
        }
    }
    out
}

/// Full-slot-scan remembered-set oracle: every cross-region reference held
/// by any physically present object, counted per (target region, source
/// region) pair.
pub fn cross_region_reference_map(dump: &HeapDump) -> BTreeMap<(u32, u32), u64> {
    let mut map = BTreeMap::new();
    for obj in objects_in_dump(dump).values() {
        for slot in obj.slots.iter().flatten() {
            if slot.region != obj.at.region {
                *map.entry((slot.region, obj.at.region)).or_insert(0) += 1;
            }
        }
    }
    map
}

/// The remembered sets the heap actually holds, in oracle shape.
pub fn remembered_sets_of(dump: &HeapDump) -> BTreeMap<(u32, u32), u64> {
    let mut map = BTreeMap::new();
    for region in &dump.regions {
        for &(src, count) in &region.rset {
            map.insert((region.id, src), count);
        }
    }
    map
}

/// Survivor oracle for one collection: objects in `cs` reachable from the
/// roots or from any reference held outside `cs`, following edges only
/// within `cs` (uncollected regions are untouched, so edges leaving the set
/// stop the walk).
pub fn expected_survivors(
    dump: &HeapDump,
    objects: &BTreeMap<ObjectRef, SimObject>,
    cs: &BTreeSet<u32>,
) -> BTreeSet<ObjectRef> {
    let mut queue: VecDeque<ObjectRef> = VecDeque::new();
    let mut live: BTreeSet<ObjectRef> = BTreeSet::new();
    let push = |r: ObjectRef, live: &mut BTreeSet<ObjectRef>, queue: &mut VecDeque<ObjectRef>| {
        if cs.contains(&r.region) && live.insert(r) {
            queue.push_back(r);
        }
    };
    for &root in &dump.roots {
        push(root, &mut live, &mut queue);
    }
    for obj in objects.values() {
        if cs.contains(&obj.at.region) {
            continue;
        }
        for slot in obj.slots.iter().flatten() {
            push(*slot, &mut live, &mut queue);
        }
    }
    while let Some(at) = queue.pop_front() {
        let obj = objects
            .get(&at)
            .unwrap_or_else(|| panic!("oracle: reference into {at} hits no object header"));
        for slot in obj.slots.iter().flatten() {
            push(*slot, &mut live, &mut queue);
        }
    }
    live
}

/// Canonical, placement-free form of the reachable graph: objects numbered
/// in BFS order from the roots, each described by class, size, slot
/// structure (as BFS indices), and payload.
pub fn canonical_graph(dump: &HeapDump) -> Vec<(u32, u32, Vec<Option<usize>>, Vec<u64>)> {
    let objects = objects_in_dump(dump);
    let mut index: BTreeMap<ObjectRef, usize> = BTreeMap::new();
    let mut order: Vec<ObjectRef> = Vec::new();
    let mut queue: VecDeque<ObjectRef> = VecDeque::new();
    for &root in &dump.roots {
        if !index.contains_key(&root) {
            index.insert(root, order.len());
            order.push(root);
            queue.push_back(root);
        }
    }
    while let Some(at) = queue.pop_front() {
        for slot in objects[&at].slots.iter().flatten() {
            if !index.contains_key(slot) {
                index.insert(*slot, order.len());
                order.push(*slot);
                queue.push_back(*slot);
            }
        }
    }
    order
        .iter()
        .map(|at| {
            let o = &objects[at];
            (
                o.class,
                o.size,
                o.slots.iter().map(|s| s.map(|t| index[&t])).collect(),
                o.payload.clone(),
            )
        })
        .collect()
}
