//! Priority queues built on Braun trees.
//!
//! * [`persistent`]: an immutable Braun heap, used as the reference model.
//! * [`concurrent`]: a lock-coupled mutable Braun heap with O(1) snapshots.
//! * [`baseline`]: a binary heap in a `Vec` behind one mutex.
//! * [`verify`]: history recording, a brute-force linearizability checker
//!   and snapshot-isolation drills.
//! * [`bench`]: the benchmark workloads and CSV output behind `braun-bench`.

pub mod baseline;
pub mod bench;
pub mod concurrent;
pub mod error;
mod lockorder;
pub mod persistent;
pub mod validate;
pub mod verify;

pub use baseline::LockedArrayHeap;
pub use concurrent::{AllocStats, CHeap};
pub use error::{HandleError, StructureError};
pub use persistent::{HeapNode, PHeap};
pub use validate::{Direction, Violation, ViolationKind};
