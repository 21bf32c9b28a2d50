//! Disjoint sets whose parent links carry a relative orientation, and the
//! edge-orientation driver built on them.
//!
//! `label(u)` is the orientation of `u` relative to `parent(u)`; XOR-ing the
//! labels along the path to the root gives the orientation of `u` relative
//! to its representative. Plain union-find is the case where every union
//! passes `Same`.

use thiserror::Error;

use crate::mesh::{EdgeId, QuadMesh, RelOrientation};
use crate::orientation::{MoebiusError, OrientationMap};
use crate::serial::RibbonPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ForestError {
    #[error("element {0} is out of range")]
    UnknownElement(usize),
    /// `u` and `v` are already related by `found` but the union asked for `required`.
    #[error("Moebius strip found: elements {u} and {v} are related by {found}, union requires {required}")]
    Moebius { u: usize, v: usize, found: RelOrientation, required: RelOrientation },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrientedForest {
    parent: Vec<usize>,
    label: Vec<RelOrientation>,
    rank: Vec<u8>,
}

impl OrientedForest {
    /// `n` singleton sets.
    pub fn new(n: usize) -> Self {
        OrientedForest { parent: (0..n).collect(), label: vec![RelOrientation::Same; n], rank: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    fn check(&self, u: usize) -> Result<(), ForestError> {
        if u < self.parent.len() {
            Ok(())
        } else {
            Err(ForestError::UnknownElement(u))
        }
    }

    pub fn parent(&self, u: usize) -> usize {
        self.parent[u]
    }

    pub fn label(&self, u: usize) -> RelOrientation {
        self.label[u]
    }

    /// Number of parent links between `u` and its root.
    pub fn depth(&self, u: usize) -> usize {
        let mut d = 0;
        let mut x = u;
        while self.parent[x] != x {
            x = self.parent[x];
            d += 1;
        }
        d
    }

    /// Root of `u` and `u`'s orientation relative to it, without modifying
    /// the forest.
    pub fn find_uncompressed(&self, u: usize) -> Result<(usize, RelOrientation), ForestError> {
        self.check(u)?;
        let mut x = u;
        let mut acc = RelOrientation::Same;
        while self.parent[x] != x {
            acc ^= self.label[x];
            x = self.parent[x];
        }
        Ok((x, acc))
    }

    /// Root of `u` and `u`'s orientation relative to it. Every element on
    /// the path is relinked directly to the root with its accumulated label.
    pub fn find(&mut self, u: usize) -> Result<(usize, RelOrientation), ForestError> {
        self.check(u)?;
        let mut path = Vec::new();
        let mut x = u;
        while self.parent[x] != x {
            path.push(x);
            x = self.parent[x];
        }
        let root = x;
        let mut acc = RelOrientation::Same;
        for &node in path.iter().rev() {
            acc ^= self.label[node];
            self.parent[node] = root;
            self.label[node] = acc;
        }
        Ok((root, self.label_to_root(u, root)))
    }

    fn label_to_root(&self, u: usize, root: usize) -> RelOrientation {
        if u == root {
            RelOrientation::Same
        } else {
            self.label[u]
        }
    }

    /// Joins the sets of `u` and `v` under the constraint
    /// `orient(u) ^ orient(v) == rel`, or checks it when they already share
    /// a set.
    ///
    /// The root of higher rank wins; on equal rank the larger id becomes the
    /// representative.
    pub fn union(&mut self, u: usize, v: usize, rel: RelOrientation) -> Result<(), ForestError> {
        let (ru, ou) = self.find(u)?;
        let (rv, ov) = self.find(v)?;
        let link = ou ^ rel ^ ov;
        if ru == rv {
            if link == RelOrientation::Flip {
                return Err(ForestError::Moebius { u, v, found: ou ^ ov, required: rel });
            }
            return Ok(());
        }
        let (child, root) = match self.rank[ru].cmp(&self.rank[rv]) {
            std::cmp::Ordering::Less => (ru, rv),
            std::cmp::Ordering::Greater => (rv, ru),
            std::cmp::Ordering::Equal => {
                let (child, root) = if ru < rv { (ru, rv) } else { (rv, ru) };
                self.rank[root] += 1;
                (child, root)
            }
        };
        self.parent[child] = root;
        self.label[child] = link;
        Ok(())
    }

    /// Set partition induced by the forest, numbered canonically.
    pub fn partition(&self) -> RibbonPartition {
        let roots: Vec<usize> = (0..self.len()).map(|u| self.find_uncompressed(u).expect("in range").0).collect();
        RibbonPartition::from_labels(&roots)
    }
}

fn moebius_at(mesh: &QuadMesh, err: ForestError) -> MoebiusError {
    match err {
        ForestError::Moebius { u, found, required, .. } => {
            MoebiusError { edge: mesh.edge(u), found, required, rank: None }
        }
        ForestError::UnknownElement(u) => unreachable!("edge id {u} out of range"),
    }
}

/// Orientation via the labeled union-find: both opposite pairs of every cell
/// are united with their required relation, then each edge takes its
/// orientation relative to its representative.
pub fn orient_unionfind(mesh: &QuadMesh) -> Result<OrientationMap, MoebiusError> {
    orient_unionfind_forest(mesh).map(|(map, _)| map)
}

/// [`orient_unionfind`] that also returns the final (fully compressed) forest.
pub fn orient_unionfind_forest(mesh: &QuadMesh) -> Result<(OrientationMap, OrientedForest), MoebiusError> {
    let mut forest = OrientedForest::new(mesh.num_edges());
    for c in 0..mesh.num_cells() {
        for (slot, &e) in mesh.cell_edges(c)[..2].iter().enumerate() {
            let (opp, rel) = mesh.required_rel_slot(c, slot);
            forest.union(e, opp, rel).map_err(|err| moebius_at(mesh, err))?;
        }
    }
    let flags = (0..mesh.num_edges() as EdgeId).map(|e| forest.find(e).expect("in range").1).collect();
    Ok((OrientationMap::from_flags(flags), forest))
}
