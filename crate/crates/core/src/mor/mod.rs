//! Snapshot collection, POD bases, basis files and reduced transient runs.

pub mod basis;
pub mod io;
pub mod rom;

pub use basis::{build_snapshot_matrix, compute_basis, ModeSelection, PodBasis, SnapshotMatrix};
pub use io::{load_basis, load_snapshots, save_basis, save_snapshots};
pub use rom::{run_transient_rom, ReducedBackend, RomKinematics};
