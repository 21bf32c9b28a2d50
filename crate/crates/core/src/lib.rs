//! Consistent edge orientations for quadrilateral meshes.
//!
//! A mesh admits a consistent orientation when every edge can be given one
//! direction such that, in every cell, opposite edges run parallel. Opposite
//! edges determine each other, so the edges fall into ribbons that can be
//! oriented independently; a ribbon that closes up with a twist is a Moebius
//! strip and has no valid orientation.
//!
//! Three interchangeable solvers are provided:
//!
//! * [`orient_serial`]: ribbon traversal with an explicit worklist.
//! * [`orient_unionfind`]: disjoint sets whose links carry relative orientations.
//! * [`run_parallel`]: a superstep simulation of `P` processes that orient
//!   their cells locally and negotiate shared edges by weight.
//!
//! [`check_consistent`] validates any result using only mesh topology.

pub mod gen;
pub mod io;
pub mod mesh;
pub mod orientation;
pub mod parallel;
pub mod partition;
pub mod rng;
pub mod serial;
pub mod sweep;
pub mod unionfind;
pub mod verify;

pub use gen::{gen_cubed_sphere, gen_structured, shuffle_mesh, GenError, GridSpec};
pub use io::{
    read_msh, read_native, read_orientation, read_rounds_csv, write_native, write_orientation, write_rounds_csv,
    FormatError,
};
pub use mesh::{CellId, EdgeId, EdgeKey, GridDims, MeshError, QuadMesh, RelOrientation, VertexId};
pub use orientation::{MoebiusError, OrientationMap};
pub use parallel::{negotiate_round, run_parallel, run_parallel_with, NegotiationTrace, ParallelError, Schedule};
pub use partition::{
    build_local_domain, local_preprocess, partition_cells, CellPartition, LocalDomain, LocalState, PartitionError,
    PartitionMethod,
};
pub use serial::{orient_serial, ribbons, RibbonPartition};
pub use sweep::{loglog_slope, scaling_sweep, MeshFamily, MeshKind, SweepError};
pub use unionfind::{orient_unionfind, OrientedForest};
pub use verify::{check_consistent, compare_verdicts, flip_ribbon, VerifyError};
