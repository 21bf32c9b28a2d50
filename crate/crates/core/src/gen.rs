//! Deterministic mesh generators: structured grids (optionally periodic or
//! twisted), the topological cubed sphere, and a seeded relabeler.

use std::collections::HashMap;

use thiserror::Error;

use crate::mesh::{GridDims, MeshError, QuadMesh, VertexId};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Structured grid of `nx * ny` cells.
///
/// `periodic_x`/`periodic_y` glue opposite sides; `twist_x` glues the x ends
/// with a vertical flip (a Moebius strip, or a Klein bottle when combined
/// with `periodic_y`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub periodic_x: bool,
    pub periodic_y: bool,
    pub twist_x: bool,
}

impl GridSpec {
    pub fn square(nx: usize, ny: usize) -> Self {
        GridSpec { nx, ny, periodic_x: false, periodic_y: false, twist_x: false }
    }

    pub fn torus(nx: usize, ny: usize) -> Self {
        GridSpec { nx, ny, periodic_x: true, periodic_y: true, twist_x: false }
    }

    pub fn moebius(nx: usize, ny: usize) -> Self {
        GridSpec { nx, ny, periodic_x: true, periodic_y: false, twist_x: true }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.nx == 0 || self.ny == 0 {
            return Err(GenError::InvalidSpec(format!(
                "grid needs at least one cell per direction, got {}x{}",
                self.nx, self.ny
            )));
        }
        if self.twist_x && !self.periodic_x {
            return Err(GenError::InvalidSpec("twist_x requires periodic_x".into()));
        }
        if self.periodic_x && self.nx < 3 {
            return Err(GenError::InvalidSpec(format!("periodic x direction needs nx >= 3, got {}", self.nx)));
        }
        if self.periodic_y && self.ny < 3 {
            return Err(GenError::InvalidSpec(format!("periodic y direction needs ny >= 3, got {}", self.ny)));
        }
        Ok(())
    }

    fn vertex_columns(&self) -> usize {
        if self.periodic_x {
            self.nx
        } else {
            self.nx + 1
        }
    }

    fn vertex_rows(&self) -> usize {
        if self.periodic_y {
            self.ny
        } else {
            self.ny + 1
        }
    }

    /// Index of lattice point `(i, j)` with `0 <= i <= nx`, `0 <= j <= ny`
    /// after applying the identifications.
    fn vertex(&self, mut i: usize, mut j: usize) -> VertexId {
        if self.periodic_y && j == self.ny {
            j = 0;
        }
        if self.periodic_x && i == self.nx {
            i = 0;
            if self.twist_x {
                j = if self.periodic_y { (self.ny - j) % self.ny } else { self.ny - j };
            }
        }
        j * self.vertex_columns() + i
    }
}

/// Row-major structured grid. Cell `(i, j)` has index `j * nx + i` and
/// vertices `(v(i,j), v(i+1,j), v(i+1,j+1), v(i,j+1))`.
pub fn gen_structured(spec: GridSpec) -> Result<QuadMesh, GenError> {
    spec.validate()?;
    let nv = spec.vertex_columns() * spec.vertex_rows();
    let mut cells = Vec::with_capacity(spec.nx * spec.ny);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            cells.push([spec.vertex(i, j), spec.vertex(i + 1, j), spec.vertex(i + 1, j + 1), spec.vertex(i, j + 1)]);
        }
    }
    let mesh = QuadMesh::new(nv, cells)?;
    Ok(mesh.with_grid(GridDims { nx: spec.nx, ny: spec.ny }))
}

/// Surface of an `n x n x n` cube of cells: six `n x n` faces glued along
/// the cube's edges and corners. Vertices are the surface lattice points
/// numbered in lexicographic `(x, y, z)` order; cells are wound outward.
pub fn gen_cubed_sphere(n: usize) -> Result<QuadMesh, GenError> {
    if n == 0 {
        return Err(GenError::InvalidSpec("cubed sphere needs n >= 1".into()));
    }
    let on_surface = |p: [usize; 3]| p.iter().any(|&c| c == 0 || c == n);
    let mut ids: HashMap<[usize; 3], VertexId> = HashMap::new();
    for x in 0..=n {
        for y in 0..=n {
            for z in 0..=n {
                let p = [x, y, z];
                if on_surface(p) {
                    let id = ids.len();
                    ids.insert(p, id);
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(6 * n * n);
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n] {
            let q = |s: usize, t: usize| {
                let mut p = [0; 3];
                p[axis] = side;
                p[b] = s;
                p[c] = t;
                ids[&p]
            };
            for j in 0..n {
                for i in 0..n {
                    let cell = if side == n {
                        [q(i, j), q(i + 1, j), q(i + 1, j + 1), q(i, j + 1)]
                    } else {
                        [q(i, j), q(i, j + 1), q(i + 1, j + 1), q(i + 1, j)]
                    };
                    cells.push(cell);
                }
            }
        }
    }
    Ok(QuadMesh::new(ids.len(), cells)?)
}

/// Isomorphic relabeling of `mesh` driven by [`SplitMix64`] seeded with `seed`.
///
/// Draw order: a permutation of the vertex ids (vertex `v` becomes
/// `perm[v]`), then a permutation of the cells (new cell `k` is old cell
/// `order[k]`), then for each new cell in order a rotation `below(4)`
/// followed by a reflection flag `below(2)`. The result carries no grid
/// provenance.
pub fn shuffle_mesh(mesh: &QuadMesh, seed: u64) -> QuadMesh {
    let mut rng = SplitMix64::new(seed);
    let perm = rng.permutation(mesh.num_vertices());
    let order = rng.permutation(mesh.num_cells());
    let cells = order
        .iter()
        .map(|&old| {
            let mut cell = mesh.cell(old).map(|v| perm[v]);
            let rot = rng.below(4);
            cell.rotate_left(rot);
            if rng.below(2) == 1 {
                cell.reverse();
            }
            cell
        })
        .collect();
    QuadMesh::new(mesh.num_vertices(), cells).expect("relabeling preserves validity")
}
