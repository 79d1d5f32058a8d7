//! An N-generational pretenuring garbage collector, built as a
//! deterministic simulator.
//!
//! The heap is a pool of equally sized regions. Besides the built-in
//! nursery (Gen 0) and Old generation, mutators can create any number of
//! generations at run time and allocate straight into them with a
//! per-allocation pretenure flag, grouping objects that die together so
//! whole regions can be reclaimed without copying. Allocation runs through
//! per-thread, per-generation TLABs that cost nothing until first use;
//! collection comes in minor, mixed, and full flavors with remembered sets
//! maintained by a write barrier.
//!
//! The [`workload`] module and the `ngen-gc` binary drive scripted
//! allocation workloads against this heap in a 2-generation baseline mode
//! and a pretenuring mode, producing structured GC logs and comparison
//! reports; [`profiler`] recovers pretenuring advice from observed object
//! lifetimes.

pub mod allocator;
pub mod cli;
pub mod collector;
pub mod error;
pub mod heap;
pub mod object_model;
pub mod profiler;
pub mod workload;

pub use allocator::{get_generation, new_generation, set_generation, ThreadContext};
pub use collector::{
    full_collect, minor_collect, mixed_collect, run_marking, should_trigger, CollectionKind,
    CollectionOutcome, GcReport, MarkingStats,
};
pub use error::{HeapError, Result};
pub use heap::{Heap, HeapConfig, SpaceKind, GEN0, OLD_GEN};
pub use object_model::{ClassDescriptor, ClassId, ObjectRef, RootHandle};
pub use profiler::{Profiler, Recommendation};
