//! Orientation checking that relies only on mesh topology and the flags,
//! plus ribbon flips and a cross-algorithm comparison harness.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::mesh::{CellId, EdgeId, EdgeKey, QuadMesh, RelOrientation};
use crate::orientation::OrientationMap;
use crate::parallel::run_parallel;
use crate::partition::{block_factors, PartitionMethod};
use crate::serial::{orient_serial, RibbonPartition};
use crate::unionfind::orient_unionfind;

/// An opposite pair of a cell whose flags break the required relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation {
    pub cell: CellId,
    pub edge: EdgeKey,
    pub opposite: EdgeKey,
    pub required: RelOrientation,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell {}: edges {} and {} must be related by {}", self.cell, self.edge, self.opposite, self.required)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("orientation covers {got} edges, mesh has {expected}")]
    MissingEdge { expected: usize, got: usize },
    #[error("{} violated cell constraints", .0.len())]
    Inconsistent(Vec<Violation>),
    #[error("edge set is not a ribbon of the mesh")]
    NotARibbon,
}

/// Checks both opposite pairs of every cell.
pub fn check_consistent(mesh: &QuadMesh, map: &OrientationMap) -> Result<(), VerifyError> {
    if map.len() != mesh.num_edges() {
        return Err(VerifyError::MissingEdge { expected: mesh.num_edges(), got: map.len() });
    }
    let mut violations = Vec::new();
    for c in 0..mesh.num_cells() {
        for (slot, &e) in mesh.cell_edges(c)[..2].iter().enumerate() {
            let (opp, rel) = mesh.required_rel_slot(c, slot);
            if map[e] ^ map[opp] != rel {
                violations.push(Violation { cell: c, edge: mesh.edge(e), opposite: mesh.edge(opp), required: rel });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(VerifyError::Inconsistent(violations))
    }
}

/// Complements exactly the edges of `ribbon`, which must be a whole class
/// of `partition`.
pub fn flip_ribbon(
    map: &OrientationMap,
    ribbon: &[EdgeId],
    partition: &RibbonPartition,
) -> Result<OrientationMap, VerifyError> {
    let set: BTreeSet<EdgeId> = ribbon.iter().copied().collect();
    let first = *set.iter().next().ok_or(VerifyError::NotARibbon)?;
    if first >= map.len() || set.iter().any(|&e| e >= map.len()) {
        return Err(VerifyError::NotARibbon);
    }
    let class = partition.ribbon(partition.ribbon_of(first));
    if class.len() != set.len() || !class.iter().all(|e| set.contains(e)) {
        return Err(VerifyError::NotARibbon);
    }
    let mut out = map.clone();
    for &e in &set {
        out.flip(e);
    }
    Ok(out)
}

/// Ribbons on which `a` and `b` differ, if they differ by whole ribbons only.
pub fn differing_ribbons(a: &OrientationMap, b: &OrientationMap, partition: &RibbonPartition) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for (r, members) in partition.ribbons().iter().enumerate() {
        let diff: Vec<bool> = members.iter().map(|&e| a[e] != b[e]).collect();
        if diff.iter().all(|&d| d) {
            out.push(r);
        } else if diff.iter().any(|&d| d) {
            return None;
        }
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    /// The algorithm returned an orientation that fails the check.
    Inconsistent(usize),
    Moebius,
    Failed(String),
}

impl Verdict {
    fn from_result<E: fmt::Display>(
        mesh: &QuadMesh,
        r: Result<OrientationMap, E>,
        moebius: impl Fn(&E) -> bool,
    ) -> Self {
        match r {
            Ok(map) => match check_consistent(mesh, &map) {
                Ok(()) => Verdict::Consistent,
                Err(VerifyError::Inconsistent(v)) => Verdict::Inconsistent(v.len()),
                Err(other) => Verdict::Failed(other.to_string()),
            },
            Err(e) if moebius(&e) => Verdict::Moebius,
            Err(e) => Verdict::Failed(e.to_string()),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Consistent => f.write_str("consistent"),
            Verdict::Inconsistent(n) => write!(f, "inconsistent ({n} violations)"),
            Verdict::Moebius => f.write_str("moebius"),
            Verdict::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerdictReport {
    pub serial: Verdict,
    pub unionfind: Verdict,
    /// `(P, partitioner, verdict)` for every applicable parallel run.
    pub parallel: Vec<(usize, PartitionMethod, Verdict)>,
}

impl VerdictReport {
    fn all(&self) -> impl Iterator<Item = &Verdict> {
        [&self.serial, &self.unionfind].into_iter().chain(self.parallel.iter().map(|(_, _, v)| v))
    }

    /// Every algorithm produced a consistent orientation, or every one
    /// reported a Moebius strip.
    pub fn agree(&self) -> bool {
        self.all().all(|v| *v == Verdict::Consistent) || self.all().all(|v| *v == Verdict::Moebius)
    }

    pub fn all_consistent(&self) -> bool {
        self.all().all(|v| *v == Verdict::Consistent)
    }

    pub fn all_moebius(&self) -> bool {
        self.all().all(|v| *v == Verdict::Moebius)
    }
}

/// Runs the serial, union-find and simulated parallel algorithms (each `P`
/// in `ps`, BFS always and block partitioning where the mesh supports it).
pub fn compare_verdicts(mesh: &QuadMesh, ps: &[usize]) -> VerdictReport {
    let serial = Verdict::from_result(mesh, orient_serial(mesh), |_| true);
    let unionfind = Verdict::from_result(mesh, orient_unionfind(mesh), |_| true);
    let mut parallel = Vec::new();
    for &p in ps {
        let mut methods = vec![PartitionMethod::Bfs];
        if mesh.grid().is_some_and(|g| block_factors(g, p).is_ok()) {
            methods.push(PartitionMethod::Block);
        }
        for method in methods {
            let r = run_parallel(mesh, p, method).map(|(map, _)| map);
            parallel.push((p, method, Verdict::from_result(mesh, r, |e| e.is_moebius())));
        }
    }
    VerdictReport { serial, unionfind, parallel }
}
