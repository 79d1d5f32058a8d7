//! Error types shared across the heap, allocator, and collector.

use crate::object_model::ObjectRef;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeapError {
    /// Heap configuration rejected; names the offending field.
    #[error("invalid heap config: {field}: {reason}")]
    InvalidConfig {
        field: &'static str,
        reason: String,
    },

    #[error("slot {slot} out of range: class has {slot_count} reference slots")]
    SlotOutOfBounds { slot: u32, slot_count: u32 },

    #[error("payload word {word} out of range: object has {word_count} payload words")]
    PayloadOutOfBounds { word: u32, word_count: u32 },

    /// Reference does not point at a live object header (stale, forwarded
    /// outside a collection, filler, or out of bounds).
    #[error("invalid object reference {0}")]
    InvalidReference(ObjectRef),

    #[error("invalid root handle")]
    InvalidRootHandle,

    #[error("unknown generation {0}")]
    UnknownGeneration(u32),

    #[error("unknown class id {0}")]
    UnknownClass(u32),

    #[error("object size {size} exceeds region capacity {capacity}")]
    ObjectTooLarge { size: u32, capacity: u32 },

    /// No free region available. Internal signal: allocation paths catch it,
    /// trigger a collection, and retry before reporting `OutOfMemory`.
    #[error("heap exhausted: free region list is empty")]
    HeapExhausted,

    /// Allocation still failing after the collect-and-retry path.
    #[error("out of memory: collection could not free enough space")]
    OutOfMemory,

    #[error("double free: region {0} is already on the free list")]
    DoubleFree(u32),

    #[error("region {0} does not exist")]
    UnknownRegion(u32),

    #[error("insufficient profile data: no completed collection observed")]
    InsufficientProfileData,
}

pub type Result<T> = std::result::Result<T, HeapError>;
