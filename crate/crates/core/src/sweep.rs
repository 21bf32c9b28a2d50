//! Communication-round scaling experiments.

use thiserror::Error;

use crate::gen::{gen_cubed_sphere, gen_structured, shuffle_mesh, GenError, GridSpec};
use crate::mesh::QuadMesh;
use crate::parallel::{run_parallel, ParallelError};
use crate::partition::PartitionMethod;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SweepError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("sweep run with P = {p} failed")]
    Run { p: usize, source: ParallelError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshKind {
    Square { nx: usize, ny: usize },
    Torus { nx: usize, ny: usize },
    Moebius { nx: usize, ny: usize },
    CubedSphere { n: usize },
}

/// A generated mesh, optionally relabeled with [`shuffle_mesh`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshFamily {
    pub kind: MeshKind,
    pub shuffle: Option<u64>,
}

impl MeshFamily {
    pub fn new(kind: MeshKind) -> Self {
        MeshFamily { kind, shuffle: None }
    }

    pub fn build(&self) -> Result<QuadMesh, GenError> {
        let mesh = match self.kind {
            MeshKind::Square { nx, ny } => gen_structured(GridSpec::square(nx, ny))?,
            MeshKind::Torus { nx, ny } => gen_structured(GridSpec::torus(nx, ny))?,
            MeshKind::Moebius { nx, ny } => gen_structured(GridSpec::moebius(nx, ny))?,
            MeshKind::CubedSphere { n } => gen_cubed_sphere(n)?,
        };
        Ok(match self.shuffle {
            Some(seed) => shuffle_mesh(&mesh, seed),
            None => mesh,
        })
    }

    /// Block partitioning for unshuffled grids, BFS otherwise.
    pub fn default_partitioner(&self) -> PartitionMethod {
        match (self.kind, self.shuffle) {
            (MeshKind::CubedSphere { .. }, _) | (_, Some(_)) => PartitionMethod::Bfs,
            _ => PartitionMethod::Block,
        }
    }
}

/// One `(P, rounds)` row per entry of `ps`, in the given order.
pub fn scaling_sweep(
    family: &MeshFamily,
    ps: &[usize],
    method: PartitionMethod,
) -> Result<Vec<(u64, u64)>, SweepError> {
    let mesh = family.build()?;
    ps.iter()
        .map(|&p| {
            let (_, trace) = run_parallel(&mesh, p, method).map_err(|source| SweepError::Run { p, source })?;
            Ok((p as u64, trace.rounds as u64))
        })
        .collect()
}

/// Least-squares slope of `ln(rounds)` against `ln(P)`. `NaN` with fewer
/// than two distinct process counts.
pub fn loglog_slope(rows: &[(u64, u64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(p, r)| ((p as f64).ln(), (r as f64).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}
