//! Immutable quadrilateral mesh topology.
//!
//! Edges are derived from the cells and identified by their unordered
//! endpoint pair. Every edge has a canonical direction `lo -> hi`; all
//! orientation flags in this crate are relative to that direction.
//!
//! Local edge slot `s` of a cell `(v0, v1, v2, v3)` joins `v[s]` and
//! `v[(s + 1) % 4]`, so slots `s` and `(s + 2) % 4` are opposite.

use std::fmt;
use std::ops::{BitXor, BitXorAssign, Not};

use thiserror::Error;

pub type VertexId = usize;
pub type CellId = usize;
/// Index into [`QuadMesh::edges`]; ascending id order is canonical `EdgeKey` order.
pub type EdgeId = usize;

/// An undirected edge with canonical endpoint order `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub lo: VertexId,
    pub hi: VertexId,
}

impl EdgeKey {
    /// Builds the canonical key of the edge joining `a` and `b`.
    ///
    /// Panics if `a == b`.
    pub fn new(a: VertexId, b: VertexId) -> Self {
        assert_ne!(a, b, "edge endpoints must differ");
        if a < b {
            EdgeKey { lo: a, hi: b }
        } else {
            EdgeKey { lo: b, hi: a }
        }
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.lo == v || self.hi == v
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.lo, self.hi)
    }
}

/// Element of the two-element group of relative orientations.
///
/// As a per-edge flag, `Same` means the consistent direction is the
/// canonical `lo -> hi`; `Flip` means `hi -> lo`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum RelOrientation {
    #[default]
    Same = 0,
    Flip = 1,
}

impl RelOrientation {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            RelOrientation::Flip
        } else {
            RelOrientation::Same
        }
    }

    pub fn is_flip(self) -> bool {
        self == RelOrientation::Flip
    }
}

impl BitXor for RelOrientation {
    type Output = RelOrientation;

    fn bitxor(self, rhs: Self) -> Self {
        RelOrientation::from_bit((self as u8 ^ rhs as u8) == 1)
    }
}

impl BitXorAssign for RelOrientation {
    fn bitxor_assign(&mut self, rhs: Self) {
        *self = *self ^ rhs;
    }
}

impl Not for RelOrientation {
    type Output = RelOrientation;

    fn not(self) -> Self {
        self ^ RelOrientation::Flip
    }
}

impl fmt::Display for RelOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelOrientation::Same => f.write_str("same"),
            RelOrientation::Flip => f.write_str("flip"),
        }
    }
}

/// Structured-grid provenance carried by meshes that come straight out of
/// the grid generator. Cell `(i, j)` has index `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("cell {cell} references vertex {vertex}, but the mesh has {nv} vertices")]
    VertexOutOfRange { cell: CellId, vertex: VertexId, nv: usize },
    #[error("cell {cell} repeats a vertex: {vertices:?}")]
    DegenerateCell { cell: CellId, vertices: [VertexId; 4] },
    #[error("edge {edge} is incident to {count} cells (at most 2 allowed)")]
    NonManifold { edge: EdgeKey, count: usize },
    #[error("cells {first} and {second} share every edge; edge {edge} would stand for two distinct edges")]
    DuplicateEdge { edge: EdgeKey, first: CellId, second: CellId },
    #[error("edge {edge} is not an edge of cell {cell}")]
    NotIncident { cell: CellId, edge: EdgeKey },
    #[error("edge {0} is not in the mesh")]
    UnknownEdge(EdgeKey),
    #[error("cell {0} is out of range")]
    UnknownCell(CellId),
    #[error("cells are not a row-major {nx}x{ny} grid: {reason}")]
    GridMismatch { nx: usize, ny: usize, reason: String },
}

/// One (cell, local slot) occurrence of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub cell: CellId,
    pub slot: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct EdgeIncidence {
    items: [Incidence; 2],
    len: u8,
}

impl EdgeIncidence {
    fn as_slice(&self) -> &[Incidence] {
        &self.items[..self.len as usize]
    }
}

#[derive(Clone, Debug)]
pub struct QuadMesh {
    nv: usize,
    cells: Vec<[VertexId; 4]>,
    edges: Vec<EdgeKey>,
    cell_edges: Vec<[EdgeId; 4]>,
    incidence: Vec<EdgeIncidence>,
    grid: Option<GridDims>,
}

/// Topological equality; grid provenance is not compared.
impl PartialEq for QuadMesh {
    fn eq(&self, other: &Self) -> bool {
        self.nv == other.nv && self.cells == other.cells
    }
}

impl Eq for QuadMesh {}

impl QuadMesh {
    /// Validates the cell list and derives edges, incidence and opposite
    /// relations.
    pub fn new(nv: usize, cells: Vec<[VertexId; 4]>) -> Result<Self, MeshError> {
        for (c, cell) in cells.iter().enumerate() {
            if let Some(&v) = cell.iter().find(|&&v| v >= nv) {
                return Err(MeshError::VertexOutOfRange { cell: c, vertex: v, nv });
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if cell[a] == cell[b] {
                        return Err(MeshError::DegenerateCell { cell: c, vertices: *cell });
                    }
                }
            }
        }

        let mut occurrences: Vec<(EdgeKey, Incidence)> = Vec::with_capacity(cells.len() * 4);
        for (c, cell) in cells.iter().enumerate() {
            for s in 0..4 {
                let key = EdgeKey::new(cell[s], cell[(s + 1) % 4]);
                occurrences.push((key, Incidence { cell: c, slot: s as u8 }));
            }
        }
        occurrences.sort_unstable_by_key(|&(k, inc)| (k, inc.cell, inc.slot));

        let mut edges = Vec::new();
        let mut incidence = Vec::new();
        let mut cell_edges = vec![[usize::MAX; 4]; cells.len()];
        let mut i = 0;
        while i < occurrences.len() {
            let key = occurrences[i].0;
            let mut j = i;
            while j < occurrences.len() && occurrences[j].0 == key {
                j += 1;
            }
            if j - i > 2 {
                return Err(MeshError::NonManifold { edge: key, count: j - i });
            }
            let id = edges.len();
            let first = occurrences[i].1;
            let mut entry = EdgeIncidence { items: [first, first], len: 1 };
            if j - i == 2 {
                entry.items[1] = occurrences[i + 1].1;
                entry.len = 2;
            }
            for &(_, inc) in &occurrences[i..j] {
                cell_edges[inc.cell][inc.slot as usize] = id;
            }
            edges.push(key);
            incidence.push(entry);
            i = j;
        }

        let mesh = QuadMesh { nv, cells, edges, cell_edges, incidence, grid: None };
        mesh.check_duplicate_edges()?;
        Ok(mesh)
    }

    // Two cells sharing all four edges mean the endpoint pairs stand for
    // more than one topological edge (e.g. a periodic direction of width 2).
    fn check_duplicate_edges(&self) -> Result<(), MeshError> {
        for c in 0..self.cells.len() {
            let mut mine = self.cell_edges[c];
            mine.sort_unstable();
            for inc in self.incidence[mine[0]].as_slice() {
                let d = inc.cell;
                if d <= c {
                    continue;
                }
                let mut theirs = self.cell_edges[d];
                theirs.sort_unstable();
                if mine == theirs {
                    return Err(MeshError::DuplicateEdge { edge: self.edges[mine[0]], first: c, second: d });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn with_grid(mut self, grid: GridDims) -> Self {
        self.grid = Some(grid);
        self
    }

    /// Declares that cell `j * nx + i` is grid cell `(i, j)`, enabling block
    /// partitioning of meshes read from files. Checks the cell count and that
    /// every pair of grid neighbours shares an edge.
    pub fn with_grid_layout(self, grid: GridDims) -> Result<Self, MeshError> {
        let GridDims { nx, ny } = grid;
        let mismatch = |reason: String| MeshError::GridMismatch { nx, ny, reason };
        if nx.checked_mul(ny) != Some(self.num_cells()) {
            return Err(mismatch(format!("mesh has {} cells", self.num_cells())));
        }
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let right = (i + 1 < nx).then_some(c + 1);
                let up = (j + 1 < ny).then_some(c + nx);
                for d in right.into_iter().chain(up) {
                    if !self.cell_neighbors(c).any(|n| n == d) {
                        return Err(mismatch(format!("cells {c} and {d} share no edge")));
                    }
                }
            }
        }
        Ok(self.with_grid(grid))
    }

    pub fn num_vertices(&self) -> usize {
        self.nv
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cells(&self) -> &[[VertexId; 4]] {
        &self.cells
    }

    pub fn cell(&self, c: CellId) -> [VertexId; 4] {
        self.cells[c]
    }

    /// All edges in canonical `(lo, hi)` order.
    pub fn edges(&self) -> &[EdgeKey] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> EdgeKey {
        self.edges[e]
    }

    pub fn edge_id(&self, key: EdgeKey) -> Option<EdgeId> {
        self.edges.binary_search(&key).ok()
    }

    /// Edge ids of a cell, indexed by local slot.
    pub fn cell_edges(&self, c: CellId) -> [EdgeId; 4] {
        self.cell_edges[c]
    }

    pub fn incidences(&self, e: EdgeId) -> &[Incidence] {
        self.incidence[e].as_slice()
    }

    pub fn is_boundary(&self, e: EdgeId) -> bool {
        self.incidence[e].len == 1
    }

    pub fn grid(&self) -> Option<GridDims> {
        self.grid
    }

    /// The opposite edge of local slot `slot` in `cell`, and the relative
    /// orientation a consistent orientation must give the pair.
    ///
    /// With the cell rotated so the slot is `(v0, v1)`, the opposite edge is
    /// `(v2, v3)` and the direction `v0 -> v1` must be parallel to `v3 -> v2`.
    /// The pair is `Same` exactly when both of these directions agree with
    /// their edge's canonical direction, or both disagree.
    pub fn required_rel_slot(&self, cell: CellId, slot: usize) -> (EdgeId, RelOrientation) {
        let v = self.cells[cell];
        let a = v[slot];
        let b = v[(slot + 1) % 4];
        let c = v[(slot + 2) % 4];
        let d = v[(slot + 3) % 4];
        let rel = RelOrientation::from_bit((a < b) != (d < c));
        (self.cell_edges[cell][(slot + 2) % 4], rel)
    }

    /// Every `(cell, opposite edge, required relation)` constraint touching `e`.
    pub fn constraints(&self, e: EdgeId) -> impl Iterator<Item = (CellId, EdgeId, RelOrientation)> + '_ {
        self.incidences(e).iter().map(move |inc| {
            let (opp, rel) = self.required_rel_slot(inc.cell, inc.slot as usize);
            (inc.cell, opp, rel)
        })
    }

    /// Cells sharing an edge with `c`, in slot order.
    pub fn cell_neighbors(&self, c: CellId) -> impl Iterator<Item = CellId> + '_ {
        self.cell_edges[c]
            .into_iter()
            .filter_map(move |e| self.incidences(e).iter().map(|inc| inc.cell).find(|&d| d != c))
    }

    fn slot_of(&self, cell: CellId, key: EdgeKey) -> Result<usize, MeshError> {
        let vertices = self.cells.get(cell).ok_or(MeshError::UnknownCell(cell))?;
        (0..4)
            .find(|&s| EdgeKey::new(vertices[s], vertices[(s + 1) % 4]) == key)
            .ok_or(MeshError::NotIncident { cell, edge: key })
    }

    /// The cell edge sharing no vertex with `key`.
    pub fn opposite_edge(&self, cell: CellId, key: EdgeKey) -> Result<EdgeKey, MeshError> {
        let slot = self.slot_of(cell, key)?;
        Ok(self.edges[self.cell_edges[cell][(slot + 2) % 4]])
    }

    /// Opposite edge of `key` in `cell` plus the relation
    /// `orient(key) ^ orient(opposite)` every consistent orientation satisfies.
    pub fn required_rel(&self, cell: CellId, key: EdgeKey) -> Result<(EdgeKey, RelOrientation), MeshError> {
        let slot = self.slot_of(cell, key)?;
        let (opp, rel) = self.required_rel_slot(cell, slot);
        Ok((self.edges[opp], rel))
    }

    pub fn edge_cells(&self, key: EdgeKey) -> Result<Vec<CellId>, MeshError> {
        let e = self.edge_id(key).ok_or(MeshError::UnknownEdge(key))?;
        Ok(self.incidences(e).iter().map(|inc| inc.cell).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell() -> QuadMesh {
        QuadMesh::new(4, vec![[0, 1, 3, 2]]).unwrap()
    }

    #[test]
    fn single_cell_edges() {
        let m = one_cell();
        let expect: Vec<EdgeKey> = [(0, 1), (0, 2), (1, 3), (2, 3)].iter().map(|&(a, b)| EdgeKey::new(a, b)).collect();
        assert_eq!(m.edges(), &expect[..]);
        for e in 0..4 {
            assert_eq!(m.incidences(e).len(), 1);
        }
    }

    #[test]
    fn degenerate_and_nonmanifold() {
        assert!(matches!(QuadMesh::new(4, vec![[0, 1, 0, 2]]), Err(MeshError::DegenerateCell { cell: 0, .. })));
        // {0,1} appears in cells 0 and 2 only; {1,4} is the edge all three share.
        let err = QuadMesh::new(6, vec![[0, 1, 4, 3], [1, 2, 5, 4], [0, 1, 4, 3]]).unwrap_err();
        assert_eq!(err, MeshError::NonManifold { edge: EdgeKey::new(1, 4), count: 3 });
        assert!(matches!(QuadMesh::new(3, vec![[0, 1, 2, 3]]), Err(MeshError::VertexOutOfRange { vertex: 3, .. })));
    }

    #[test]
    fn duplicate_edges_rejected() {
        // Width-2 periodic strip: both cells span the same four endpoint pairs.
        let err = QuadMesh::new(4, vec![[0, 1, 3, 2], [1, 0, 2, 3]]).unwrap_err();
        assert!(matches!(err, MeshError::DuplicateEdge { first: 0, second: 1, .. }));
    }

    #[test]
    fn opposite_edges() {
        let m = one_cell();
        assert_eq!(m.opposite_edge(0, EdgeKey::new(0, 1)).unwrap(), EdgeKey::new(2, 3));
        assert_eq!(m.opposite_edge(0, EdgeKey::new(1, 3)).unwrap(), EdgeKey::new(0, 2));
        assert_eq!(
            m.opposite_edge(0, EdgeKey::new(1, 2)),
            Err(MeshError::NotIncident { cell: 0, edge: EdgeKey::new(1, 2) })
        );
    }

    #[test]
    fn required_relations() {
        let m = one_cell();
        assert_eq!(m.required_rel(0, EdgeKey::new(0, 1)).unwrap(), (EdgeKey::new(2, 3), RelOrientation::Same));
        assert_eq!(m.required_rel(0, EdgeKey::new(1, 3)).unwrap(), (EdgeKey::new(0, 2), RelOrientation::Same));
        // (1,0,2,3) is (0,1,3,2) traversed backwards: still parallel-canonical.
        let reflected = QuadMesh::new(4, vec![[1, 0, 2, 3]]).unwrap();
        assert_eq!(reflected.required_rel(0, EdgeKey::new(0, 1)).unwrap(), (EdgeKey::new(2, 3), RelOrientation::Same));
        // 0->1 runs parallel to 3->2, which is against {2,3}'s canonical direction.
        let twisted = QuadMesh::new(4, vec![[0, 1, 2, 3]]).unwrap();
        assert_eq!(twisted.required_rel(0, EdgeKey::new(0, 1)).unwrap(), (EdgeKey::new(2, 3), RelOrientation::Flip));
    }

    #[test]
    fn edge_cell_lookup() {
        let m = one_cell();
        assert_eq!(m.edge_cells(EdgeKey::new(0, 1)).unwrap(), vec![0]);
        assert_eq!(m.edge_cells(EdgeKey::new(9, 10)), Err(MeshError::UnknownEdge(EdgeKey::new(9, 10))));
    }

    #[test]
    fn xor_group() {
        use RelOrientation::*;
        for x in [Same, Flip] {
            assert_eq!(Same ^ x, x);
            assert_eq!(x ^ x, Same);
        }
        assert_eq!(Flip ^ Flip, Same);
        assert_eq!(!Same, Flip);
    }

    #[test]
    fn grid_layout_is_checked() {
        let strip = QuadMesh::new(6, vec![[0, 1, 4, 3], [1, 2, 5, 4]]).unwrap();
        let tagged = strip.clone().with_grid_layout(GridDims { nx: 2, ny: 1 }).unwrap();
        assert_eq!(tagged.grid(), Some(GridDims { nx: 2, ny: 1 }));
        assert!(matches!(
            strip.clone().with_grid_layout(GridDims { nx: 1, ny: 2 }),
            Ok(m) if m.grid() == Some(GridDims { nx: 1, ny: 2 })
        ));
        assert!(matches!(strip.with_grid_layout(GridDims { nx: 3, ny: 1 }), Err(MeshError::GridMismatch { .. })));
        let apart = QuadMesh::new(8, vec![[0, 1, 3, 2], [4, 5, 7, 6]]).unwrap();
        assert!(matches!(apart.with_grid_layout(GridDims { nx: 2, ny: 1 }), Err(MeshError::GridMismatch { .. })));
    }
}
