//! Cell decomposition into `P` simulated processes and the per-process
//! preprocessing that precedes negotiation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::mesh::{CellId, EdgeId, EdgeKey, GridDims, QuadMesh, RelOrientation};
use crate::orientation::MoebiusError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PartitionMethod {
    /// Contiguous `px x py` blocks of a structured grid.
    Block,
    /// Greedy region growing over the cell adjacency graph.
    Bfs,
}

impl fmt::Display for PartitionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMethod::Block => "block",
            PartitionMethod::Bfs => "bfs",
        })
    }
}

impl FromStr for PartitionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "block" => Ok(PartitionMethod::Block),
            "bfs" => Ok(PartitionMethod::Bfs),
            other => Err(format!("unknown partitioner `{other}` (expected block or bfs)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("invalid process count {p}: {reason}")]
    InvalidP { p: usize, reason: String },
}

fn invalid(p: usize, reason: impl Into<String>) -> PartitionError {
    PartitionError::InvalidP { p, reason: reason.into() }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellPartition {
    nparts: usize,
    owner: Vec<usize>,
}

impl CellPartition {
    pub fn from_owners(nparts: usize, owner: Vec<usize>) -> Result<Self, PartitionError> {
        if nparts == 0 {
            return Err(invalid(0, "need at least one process"));
        }
        if let Some(&r) = owner.iter().find(|&&r| r >= nparts) {
            return Err(invalid(nparts, format!("owner rank {r} out of range")));
        }
        Ok(CellPartition { nparts, owner })
    }

    pub fn nparts(&self) -> usize {
        self.nparts
    }

    pub fn owner(&self, c: CellId) -> usize {
        self.owner[c]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.nparts];
        for &r in &self.owner {
            sizes[r] += 1;
        }
        sizes
    }

    /// Debug dump: one `<cell> <rank>` line per cell.
    pub fn to_text(&self) -> String {
        self.owner.iter().enumerate().map(|(c, r)| format!("{c} {r}\n")).collect()
    }
}

pub fn partition_cells(mesh: &QuadMesh, p: usize, method: PartitionMethod) -> Result<CellPartition, PartitionError> {
    if p == 0 {
        return Err(invalid(0, "need at least one process"));
    }
    match method {
        PartitionMethod::Block => {
            let grid = mesh.grid().ok_or_else(|| invalid(p, "block partitioner needs a structured-grid mesh"))?;
            block_partition(grid, p)
        }
        PartitionMethod::Bfs => Ok(bfs_partition(mesh, p)),
    }
}

/// Process grid for `p` blocks on `grid`: the most square factorization
/// `px * py = p`, whose sides may differ by at most a factor of two.
pub fn block_factors(grid: GridDims, p: usize) -> Result<(usize, usize), PartitionError> {
    if p == 0 {
        return Err(invalid(0, "need at least one process"));
    }
    let small = (1..=p).take_while(|d| d * d <= p).filter(|d| p.is_multiple_of(*d)).max().unwrap_or(1);
    let large = p / small;
    if large > 2 * small {
        return Err(invalid(p, format!("no block factorization with aspect ratio <= 2 (best is {large}x{small})")));
    }
    let (px, py) = if grid.nx >= grid.ny { (large, small) } else { (small, large) };
    if px > grid.nx || py > grid.ny {
        return Err(invalid(p, format!("{px}x{py} blocks do not fit a {}x{} grid", grid.nx, grid.ny)));
    }
    Ok((px, py))
}

fn block_partition(grid: GridDims, p: usize) -> Result<CellPartition, PartitionError> {
    let (px, py) = block_factors(grid, p)?;
    let mut owner = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        let by = j * py / grid.ny;
        for i in 0..grid.nx {
            let bx = i * px / grid.nx;
            owner.push(by * px + bx);
        }
    }
    CellPartition::from_owners(p, owner)
}

const UNASSIGNED: usize = usize::MAX;

/// Greedy region growing. Part `k` receives `floor(C/P)` cells, plus one for
/// the first `C mod P` parts. Each part starts from the unassigned cell
/// touching the assigned region (or, for the first part, anywhere) with the
/// fewest unassigned neighbours, then repeatedly absorbs the frontier cell
/// with the most neighbours already in the part, breaking ties by fewest
/// unassigned neighbours and then lowest id. Cells whose removal could split
/// the unassigned region are taken only when no other candidate exists.
fn bfs_partition(mesh: &QuadMesh, p: usize) -> CellPartition {
    let n = mesh.num_cells();
    let adjacency: Vec<Vec<CellId>> = (0..n).map(|c| mesh.cell_neighbors(c).collect()).collect();
    let ring = vertex_rings(mesh);
    let mut owner = vec![UNASSIGNED; n];
    let mut free_neighbors: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut touches_assigned = vec![false; n];
    let mut in_part = vec![0usize; n];

    for k in 0..p {
        let target = n / p + usize::from(k < n % p);
        let mut members = Vec::with_capacity(target);
        // Max-heap on (neighbours in part, fewest free neighbours, lowest id).
        let mut heap: BinaryHeap<(usize, Reverse<usize>, Reverse<CellId>)> = BinaryHeap::new();
        let mut deferred = Vec::new();
        while members.len() < target {
            let mut fallback = None;
            let next = loop {
                match heap.pop() {
                    Some(item @ (cnt, Reverse(free), Reverse(c))) => {
                        if owner[c] != UNASSIGNED || in_part[c] != cnt || free_neighbors[c] != free {
                            continue;
                        }
                        if keeps_free_connected(c, &owner, &adjacency, &ring) {
                            break Some(c);
                        }
                        fallback.get_or_insert(c);
                        deferred.push(item);
                    }
                    None => break fallback,
                }
            };
            heap.extend(deferred.drain(..));
            let c = next.unwrap_or_else(|| pick_seed(&owner, &free_neighbors, &touches_assigned, &adjacency, &ring));
            owner[c] = k;
            members.push(c);
            for &d in &adjacency[c] {
                free_neighbors[d] -= 1;
                touches_assigned[d] = true;
                if owner[d] == UNASSIGNED {
                    in_part[d] += 1;
                    heap.push((in_part[d], Reverse(free_neighbors[d]), Reverse(d)));
                }
            }
        }
        for &c in &members {
            for &d in &adjacency[c] {
                in_part[d] = 0;
            }
        }
    }
    CellPartition { nparts: p, owner }
}

/// Cells sharing at least one vertex with each cell, excluding the cell.
fn vertex_rings(mesh: &QuadMesh) -> Vec<Vec<CellId>> {
    let mut cells_at: Vec<Vec<CellId>> = vec![Vec::new(); mesh.num_vertices()];
    for (c, cell) in mesh.cells().iter().enumerate() {
        for &v in cell {
            cells_at[v].push(c);
        }
    }
    (0..mesh.num_cells())
        .map(|c| {
            let mut ring: Vec<CellId> = mesh.cell(c).iter().flat_map(|&v| cells_at[v].iter().copied()).collect();
            ring.sort_unstable();
            ring.dedup();
            ring.retain(|&d| d != c);
            ring
        })
        .collect()
}

/// Sufficient condition for the unassigned cells to stay connected once `c`
/// is taken: its unassigned edge neighbours are linked through unassigned
/// cells of its vertex ring.
fn keeps_free_connected(c: CellId, owner: &[usize], adjacency: &[Vec<CellId>], ring: &[Vec<CellId>]) -> bool {
    let local: Vec<CellId> = ring[c].iter().copied().filter(|&d| owner[d] == UNASSIGNED).collect();
    let targets: Vec<CellId> = adjacency[c].iter().copied().filter(|&d| owner[d] == UNASSIGNED).collect();
    let Some(&start) = targets.first() else {
        return true;
    };
    let mut seen = vec![start];
    let mut stack = vec![start];
    while let Some(d) = stack.pop() {
        for &e in &adjacency[d] {
            if local.binary_search(&e).is_ok() && !seen.contains(&e) {
                seen.push(e);
                stack.push(e);
            }
        }
    }
    targets.iter().all(|t| seen.contains(t))
}

fn pick_seed(
    owner: &[usize],
    free_neighbors: &[usize],
    touches_assigned: &[bool],
    adjacency: &[Vec<CellId>],
    ring: &[Vec<CellId>],
) -> CellId {
    (0..owner.len())
        .filter(|&c| owner[c] == UNASSIGNED)
        .min_by_key(|&c| (!touches_assigned[c], !keeps_free_connected(c, owner, adjacency, ring), free_neighbors[c], c))
        .expect("part targets never exceed the number of cells")
}

/// One process's view of the mesh.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalDomain {
    pub rank: usize,
    pub nparts: usize,
    /// Owned cells, ascending.
    pub cells: Vec<CellId>,
    /// Every edge of an owned cell, ascending (shared edges included).
    pub edges: Vec<EdgeId>,
    /// Shared edge -> rank owning the other incident cell.
    pub shared: BTreeMap<EdgeId, usize>,
}

impl LocalDomain {
    pub fn owns_cell(&self, c: CellId) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    pub fn local_index(&self, e: EdgeId) -> Option<usize> {
        self.edges.binary_search(&e).ok()
    }

    /// Ranks this process exchanges data with, ascending.
    pub fn neighbor_ranks(&self) -> Vec<usize> {
        let mut ranks: Vec<usize> = self.shared.values().copied().collect();
        ranks.sort_unstable();
        ranks.dedup();
        ranks
    }
}

pub fn build_local_domain(mesh: &QuadMesh, partition: &CellPartition, rank: usize) -> LocalDomain {
    let cells: Vec<CellId> = (0..mesh.num_cells()).filter(|&c| partition.owner(c) == rank).collect();
    let mut edges: Vec<EdgeId> = cells.iter().flat_map(|&c| mesh.cell_edges(c)).collect();
    edges.sort_unstable();
    edges.dedup();
    let shared = edges
        .iter()
        .filter_map(|&e| {
            let owners: Vec<usize> = mesh.incidences(e).iter().map(|inc| partition.owner(inc.cell)).collect();
            match owners[..] {
                [a, b] if a != b => Some((e, if a == rank { b } else { a })),
                _ => None,
            }
        })
        .collect();
    LocalDomain { rank, nparts: partition.nparts(), cells, edges, shared }
}

/// A maximal chain of opposite edges through owned cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    /// Member edges, ascending.
    pub members: Vec<EdgeId>,
    /// Members that are shared edges (at most the two ends), ascending.
    pub shared: Vec<EdgeId>,
    /// No end at all: the segment is a closed loop inside this process.
    pub closed: bool,
}

/// Preprocessed state of one simulated process.
///
/// Per-shared-edge arrays are indexed by position in `shared`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalState {
    pub rank: usize,
    pub nparts: usize,
    /// Local edges, ascending; `orientation` and `segment_of` run parallel to it.
    pub edges: Vec<EdgeId>,
    pub orientation: Vec<RelOrientation>,
    pub segment_of: Vec<usize>,
    pub segments: Vec<Segment>,
    /// Shared edges, ascending, with their keys and the rank across each one.
    pub shared: Vec<EdgeId>,
    pub shared_keys: Vec<EdgeKey>,
    pub remote: Vec<usize>,
    pub affects_edge: Vec<Option<usize>>,
    pub affects_orient: Vec<Option<RelOrientation>>,
    pub our_weight: Vec<u64>,
    pub our_orient: Vec<RelOrientation>,
}

impl LocalState {
    pub fn shared_index(&self, e: EdgeId) -> Option<usize> {
        self.shared.binary_search(&e).ok()
    }

    fn local(&self, e: EdgeId) -> usize {
        self.edges.binary_search(&e).expect("local edge")
    }

    /// Local orientation of edge `e`, if this process holds it.
    pub fn orientation_of(&self, e: EdgeId) -> Option<RelOrientation> {
        self.edges.binary_search(&e).ok().map(|i| self.orientation[i])
    }

    /// Segment index `l(e)` of a local edge.
    pub fn segment_index(&self, e: EdgeId) -> Option<usize> {
        self.edges.binary_search(&e).ok().map(|i| self.segment_of[i])
    }

    pub fn weight(&self, e: EdgeId) -> Option<u64> {
        self.shared_index(e).map(|i| self.our_weight[i])
    }

    pub fn proposed(&self, e: EdgeId) -> Option<RelOrientation> {
        self.shared_index(e).map(|i| self.our_orient[i])
    }

    /// Partner of shared edge `e` along its segment, with the stored relation.
    pub fn affects(&self, e: EdgeId) -> Option<(EdgeId, RelOrientation)> {
        let i = self.shared_index(e)?;
        Some((self.shared[self.affects_edge[i]?], self.affects_orient[i]?))
    }

    /// Initial weight of segment `l` on this rank.
    pub fn segment_weight(&self, l: usize) -> u64 {
        (self.nparts * l + self.rank) as u64
    }

    /// Re-aligns every segment whose shared ends settled on the opposite of
    /// the local orientation, after negotiation has converged.
    pub(crate) fn finalize(&mut self, mesh: &QuadMesh) -> Result<(), MoebiusError> {
        for l in 0..self.segments.len() {
            let mut decision: Option<(EdgeId, bool)> = None;
            for &e in &self.segments[l].shared {
                let s = self.shared_index(e).expect("shared");
                let flip = self.our_orient[s] != self.orientation[self.local(e)];
                match decision {
                    None => decision = Some((e, flip)),
                    Some((_, prev)) if prev != flip => {
                        return Err(MoebiusError {
                            edge: mesh.edge(e),
                            found: self.orientation[self.local(e)],
                            required: self.our_orient[s],
                            rank: Some(self.rank),
                        });
                    }
                    Some(_) => {}
                }
            }
            if let Some((_, true)) = decision {
                for i in 0..self.segments[l].members.len() {
                    let e = self.segments[l].members[i];
                    let li = self.local(e);
                    self.orientation[li] = !self.orientation[li];
                }
            }
        }
        Ok(())
    }
}

/// Orients the domain locally, splits it into segments and initialises the
/// negotiation arrays: weights `P * l + rank`, proposals from the local
/// orientation, and `affects_*` links for segments with two shared ends.
pub fn local_preprocess(mesh: &QuadMesh, domain: &LocalDomain) -> Result<LocalState, MoebiusError> {
    let n = domain.edges.len();
    let mut orientation: Vec<Option<RelOrientation>> = vec![None; n];
    let mut segment_of = vec![usize::MAX; n];
    let mut segments = Vec::new();
    let mut stack = Vec::new();

    for start in 0..n {
        if orientation[start].is_some() {
            continue;
        }
        let l = segments.len();
        let mut members = Vec::new();
        stack.push((start, RelOrientation::Same));
        while let Some((li, o)) = stack.pop() {
            if let Some(found) = orientation[li] {
                if found != o {
                    return Err(MoebiusError {
                        edge: mesh.edge(domain.edges[li]),
                        found,
                        required: o,
                        rank: Some(domain.rank),
                    });
                }
                continue;
            }
            orientation[li] = Some(o);
            segment_of[li] = l;
            let e = domain.edges[li];
            members.push(e);
            for (cell, opp, rel) in mesh.constraints(e) {
                if domain.owns_cell(cell) {
                    let lo = domain.local_index(opp).expect("edges of owned cells are local");
                    stack.push((lo, o ^ rel));
                }
            }
        }
        members.sort_unstable();
        let shared: Vec<EdgeId> = members.iter().copied().filter(|e| domain.shared.contains_key(e)).collect();
        debug_assert!(shared.len() <= 2, "a segment has at most two ends");
        let closed = members
            .iter()
            .all(|&e| mesh.incidences(e).len() == 2 && mesh.incidences(e).iter().all(|inc| domain.owns_cell(inc.cell)));
        segments.push(Segment { members, shared, closed });
    }

    let orientation: Vec<RelOrientation> = orientation.into_iter().map(|o| o.expect("visited")).collect();
    let shared: Vec<EdgeId> = domain.shared.keys().copied().collect();
    let remote: Vec<usize> = domain.shared.values().copied().collect();
    let local = |e: EdgeId| domain.local_index(e).expect("shared edges are local");
    let shared_pos = |e: EdgeId| shared.binary_search(&e).expect("shared");

    let mut affects_edge = vec![None; shared.len()];
    let mut affects_orient = vec![None; shared.len()];
    for seg in &segments {
        if let [u, v] = seg.shared[..] {
            let rel = orientation[local(u)] ^ orientation[local(v)];
            let (iu, iv) = (shared_pos(u), shared_pos(v));
            affects_edge[iu] = Some(iv);
            affects_edge[iv] = Some(iu);
            affects_orient[iu] = Some(rel);
            affects_orient[iv] = Some(rel);
        }
    }

    let p = domain.nparts as u64;
    let our_weight = shared.iter().map(|&e| p * segment_of[local(e)] as u64 + domain.rank as u64).collect();
    let our_orient = shared.iter().map(|&e| orientation[local(e)]).collect();

    Ok(LocalState {
        rank: domain.rank,
        nparts: domain.nparts,
        edges: domain.edges.clone(),
        orientation,
        segment_of,
        segments,
        shared_keys: shared.iter().map(|&e| mesh.edge(e)).collect(),
        shared,
        remote,
        affects_edge,
        affects_orient,
        our_weight,
        our_orient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_cubed_sphere, gen_structured, GridSpec};

    #[test]
    fn block_two_by_two() {
        let m = gen_structured(GridSpec::square(4, 4)).unwrap();
        let part = partition_cells(&m, 4, PartitionMethod::Block).unwrap();
        assert_eq!(part.part_sizes(), vec![4, 4, 4, 4]);
        // Cell (1,1) sits in the first block, cell (2,1) in the second.
        assert_eq!(part.owner(5), 0);
        assert_eq!(part.owner(6), 1);
        assert_eq!(part.owner(4 * 2), 2);
    }

    #[test]
    fn block_factorizations() {
        let g = GridDims { nx: 128, ny: 128 };
        assert_eq!(block_factors(g, 1).unwrap(), (1, 1));
        assert_eq!(block_factors(g, 2).unwrap(), (2, 1));
        assert_eq!(block_factors(g, 8).unwrap(), (4, 2));
        assert_eq!(block_factors(g, 64).unwrap(), (8, 8));
        assert!(block_factors(g, 7).is_err());
        assert!(block_factors(GridDims { nx: 1, ny: 1 }, 2).is_err());
    }

    #[test]
    fn block_needs_grid() {
        let m = gen_cubed_sphere(2).unwrap();
        assert!(matches!(partition_cells(&m, 4, PartitionMethod::Block), Err(PartitionError::InvalidP { p: 4, .. })));
        assert!(partition_cells(&m, 0, PartitionMethod::Bfs).is_err());
    }

    #[test]
    fn single_process() {
        let m = gen_cubed_sphere(2).unwrap();
        let part = partition_cells(&m, 1, PartitionMethod::Bfs).unwrap();
        assert!(part.owners().iter().all(|&r| r == 0));
        let dom = build_local_domain(&m, &part, 0);
        assert!(dom.shared.is_empty());
        let st = local_preprocess(&m, &dom).unwrap();
        assert!(st.affects_edge.is_empty() && st.our_weight.is_empty());
    }

    #[test]
    fn bfs_balance_on_cubed_sphere() {
        let m = gen_cubed_sphere(2).unwrap();
        let part = partition_cells(&m, 5, PartitionMethod::Bfs).unwrap();
        assert_eq!(part.part_sizes(), vec![5, 5, 5, 5, 4]);
    }

    #[test]
    fn two_cells_one_shared_edge() {
        let m = gen_structured(GridSpec::square(2, 1)).unwrap();
        let part = partition_cells(&m, 2, PartitionMethod::Block).unwrap();
        for rank in 0..2 {
            let dom = build_local_domain(&m, &part, rank);
            assert_eq!(dom.shared.len(), 1);
            assert_eq!(dom.shared.values().copied().collect::<Vec<_>>(), vec![1 - rank]);
        }
    }

    #[test]
    fn weight_rule() {
        let st = LocalState {
            rank: 2,
            nparts: 4,
            edges: vec![],
            orientation: vec![],
            segment_of: vec![],
            segments: vec![],
            shared: vec![],
            shared_keys: vec![],
            remote: vec![],
            affects_edge: vec![],
            affects_orient: vec![],
            our_weight: vec![],
            our_orient: vec![],
        };
        assert_eq!(st.segment_weight(3), 14);
    }

    #[test]
    fn strip_split_in_half() {
        // 4x1 strip, rank 0 owns cells 0 and 1. Its long segment runs through
        // the vertical edges x=0 (boundary), x=1, x=2 (shared): one shared end.
        let m = gen_structured(GridSpec::square(4, 1)).unwrap();
        let part = partition_cells(&m, 2, PartitionMethod::Block).unwrap();
        assert_eq!(part.owners(), &[0, 0, 1, 1]);
        let dom = build_local_domain(&m, &part, 0);
        let st = local_preprocess(&m, &dom).unwrap();
        assert_eq!(st.shared.len(), 1);
        assert!(st.affects_edge.iter().all(Option::is_none));
        assert!(st.affects_orient.iter().all(Option::is_none));
        // Two transverse segments (one per cell) plus the long one.
        assert_eq!(st.segments.len(), 3);
        let long = &st.segments[st.segment_index(st.shared[0]).unwrap()];
        assert_eq!(long.members.len(), 3);
        assert_eq!(long.shared, st.shared);
        assert!(!long.closed);
    }

    #[test]
    fn torus_row_split_links_shared_ends() {
        // Torus split into two column blocks: every horizontal-direction
        // segment of a rank is bounded by two shared edges.
        let m = gen_structured(GridSpec::torus(6, 3)).unwrap();
        let part = partition_cells(&m, 2, PartitionMethod::Block).unwrap();
        for rank in 0..2 {
            let st = local_preprocess(&m, &build_local_domain(&m, &part, rank)).unwrap();
            assert_eq!(st.shared.len(), 6);
            for (i, &e) in st.shared.iter().enumerate() {
                let j = st.affects_edge[i].expect("both ends shared");
                assert_eq!(st.affects_edge[j], Some(i));
                assert_eq!(st.affects_orient[i], st.affects_orient[j]);
                assert_eq!(st.our_orient[i] ^ st.our_orient[j], st.affects_orient[i].unwrap());
                assert_eq!(st.our_weight[i], st.our_weight[j]);
                assert_eq!(st.remote[i], 1 - rank);
                assert!(st.affects(e).is_some());
            }
            // Vertical ribbons of the owned columns close up locally.
            assert_eq!(st.segments.iter().filter(|s| s.closed).count(), 3);
        }
    }

    #[test]
    fn local_moebius_is_caught() {
        let m = gen_structured(GridSpec::moebius(5, 1)).unwrap();
        let part = partition_cells(&m, 1, PartitionMethod::Bfs).unwrap();
        let err = local_preprocess(&m, &build_local_domain(&m, &part, 0)).unwrap_err();
        assert_eq!(err.rank, Some(0));
    }

    #[test]
    fn partition_dump() {
        let part = CellPartition::from_owners(2, vec![0, 1, 1]).unwrap();
        assert_eq!(part.to_text(), "0 0\n1 1\n2 1\n");
    }
}
