//! Serial orientation by ribbon traversal, and ribbon extraction.
//!
//! Each unvisited edge (in canonical order) seeds a traversal that walks
//! opposite-edge constraints through incident cells. The traversal uses an
//! explicit stack, so ribbon length is not limited by the call stack.

use crate::mesh::{EdgeId, QuadMesh, RelOrientation};
use crate::orientation::{MoebiusError, OrientationMap};

/// Work counters from one serial run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SerialStats {
    /// Edges whose flag was assigned (each exactly once).
    pub visited: usize,
    /// Orient invocations: one per edge from the outer loop plus one per
    /// propagation into an opposite edge.
    pub orient_calls: usize,
}

/// Partial orientation under construction; `None` means unvisited.
struct Propagator<'m> {
    mesh: &'m QuadMesh,
    flags: Vec<Option<RelOrientation>>,
    stack: Vec<(EdgeId, RelOrientation)>,
    stats: SerialStats,
}

impl<'m> Propagator<'m> {
    fn new(mesh: &'m QuadMesh) -> Self {
        Propagator { mesh, flags: vec![None; mesh.num_edges()], stack: Vec::new(), stats: SerialStats::default() }
    }

    fn is_visited(&self, e: EdgeId) -> bool {
        self.flags[e].is_some()
    }

    /// Orients `start` as `seed` and every edge it determines.
    fn propagate(&mut self, start: EdgeId, seed: RelOrientation) -> Result<(), MoebiusError> {
        self.stack.push((start, seed));
        while let Some((e, o)) = self.stack.pop() {
            match self.flags[e] {
                Some(found) => {
                    if found != o {
                        self.stack.clear();
                        return Err(MoebiusError { edge: self.mesh.edge(e), found, required: o, rank: None });
                    }
                }
                None => {
                    self.flags[e] = Some(o);
                    self.stats.visited += 1;
                    for (_, opp, rel) in self.mesh.constraints(e) {
                        self.stats.orient_calls += 1;
                        self.stack.push((opp, o ^ rel));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Consistent orientation of the whole mesh; the first edge reached in each
/// ribbon is oriented canonically.
pub fn orient_serial(mesh: &QuadMesh) -> Result<OrientationMap, MoebiusError> {
    orient_serial_with_stats(mesh).map(|(map, _)| map)
}

pub fn orient_serial_with_stats(mesh: &QuadMesh) -> Result<(OrientationMap, SerialStats), MoebiusError> {
    orient_serial_seeded(mesh, |_| RelOrientation::Same)
}

/// Like [`orient_serial`], but the ribbon first reached from edge `e` in the
/// outer loop is seeded with `seed(e)`.
pub fn orient_serial_seeded(
    mesh: &QuadMesh,
    seed: impl Fn(EdgeId) -> RelOrientation,
) -> Result<(OrientationMap, SerialStats), MoebiusError> {
    let mut prop = Propagator::new(mesh);
    for e in 0..mesh.num_edges() {
        prop.stats.orient_calls += 1;
        if prop.is_visited(e) {
            continue;
        }
        prop.propagate(e, seed(e))?;
    }
    let stats = prop.stats;
    let flags = prop.flags.into_iter().map(|f| f.expect("every edge visited")).collect();
    Ok((OrientationMap::from_flags(flags), stats))
}

/// Equivalence classes of the orientation determination relation.
///
/// Ribbons are numbered by their smallest edge id; members are ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RibbonPartition {
    ribbon_of: Vec<usize>,
    ribbons: Vec<Vec<EdgeId>>,
}

impl RibbonPartition {
    /// Builds a partition from an arbitrary per-edge class label, renumbering
    /// classes into canonical order.
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(labels: &[L]) -> Self {
        let mut index = std::collections::HashMap::new();
        let mut ribbon_of = Vec::with_capacity(labels.len());
        let mut ribbons: Vec<Vec<EdgeId>> = Vec::new();
        for (e, &label) in labels.iter().enumerate() {
            let r = *index.entry(label).or_insert_with(|| {
                ribbons.push(Vec::new());
                ribbons.len() - 1
            });
            ribbons[r].push(e);
            ribbon_of.push(r);
        }
        RibbonPartition { ribbon_of, ribbons }
    }

    pub fn len(&self) -> usize {
        self.ribbons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ribbons.is_empty()
    }

    pub fn ribbon_of(&self, e: EdgeId) -> usize {
        self.ribbon_of[e]
    }

    pub fn ribbon(&self, r: usize) -> &[EdgeId] {
        &self.ribbons[r]
    }

    pub fn ribbons(&self) -> &[Vec<EdgeId>] {
        &self.ribbons
    }

    /// Ribbon sizes, sorted ascending.
    pub fn size_multiset(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.ribbons.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        sizes
    }
}

pub fn ribbons(mesh: &QuadMesh) -> RibbonPartition {
    const UNSET: usize = usize::MAX;
    let mut label = vec![UNSET; mesh.num_edges()];
    let mut stack = Vec::new();
    let mut next = 0;
    for start in 0..mesh.num_edges() {
        if label[start] != UNSET {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(e) = stack.pop() {
            for (_, opp, _) in mesh.constraints(e) {
                if label[opp] == UNSET {
                    label[opp] = next;
                    stack.push(opp);
                }
            }
        }
        next += 1;
    }
    RibbonPartition::from_labels(&label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_cubed_sphere, gen_structured, GridSpec};
    use crate::mesh::EdgeKey;

    #[test]
    fn single_cell_all_same() {
        let m = QuadMesh::new(4, vec![[0, 1, 3, 2]]).unwrap();
        let (o, stats) = orient_serial_with_stats(&m).unwrap();
        assert!(o.flags().iter().all(|&f| f == RelOrientation::Same));
        assert_eq!(stats.visited, 4);
        // 4 outer calls + one propagation per (edge, cell) incidence.
        assert_eq!(stats.orient_calls, 8);
    }

    #[test]
    fn moebius_strip_aborts() {
        let m = gen_structured(GridSpec::moebius(3, 1)).unwrap();
        let err = orient_serial(&m).unwrap_err();
        assert_ne!(err.found, err.required);
        assert!(m.edge_id(err.edge).is_some());
    }

    #[test]
    fn odd_torus_orients() {
        let m = gen_structured(GridSpec::torus(3, 3)).unwrap();
        let o = orient_serial(&m).unwrap();
        assert_eq!(o.len(), 18);
    }

    #[test]
    fn twisted_cell_flips_opposite() {
        let m = QuadMesh::new(4, vec![[0, 1, 2, 3]]).unwrap();
        let o = orient_serial(&m).unwrap();
        let e01 = m.edge_id(EdgeKey::new(0, 1)).unwrap();
        let e23 = m.edge_id(EdgeKey::new(2, 3)).unwrap();
        assert_eq!(o[e01] ^ o[e23], RelOrientation::Flip);
    }

    #[test]
    fn ribbon_counts() {
        for n in 1..=6 {
            let m = gen_structured(GridSpec::square(n, n)).unwrap();
            let r = ribbons(&m);
            assert_eq!(r.len(), 2 * n);
            assert!(r.ribbons().iter().all(|rib| rib.len() == n + 1));
        }
        let cube = ribbons(&gen_cubed_sphere(1).unwrap());
        assert_eq!(cube.size_multiset(), vec![4, 4, 4]);
        let single = ribbons(&QuadMesh::new(4, vec![[0, 1, 3, 2]]).unwrap());
        assert_eq!(single.size_multiset(), vec![2, 2]);
    }

    #[test]
    fn long_strip_is_linear() {
        let m = gen_structured(GridSpec::square(200_000, 1)).unwrap();
        let (_, stats) = orient_serial_with_stats(&m).unwrap();
        assert_eq!(stats.visited, m.num_edges());
        assert!(stats.orient_calls <= 3 * m.num_edges());
    }

    #[test]
    fn flipped_seed_complements_ribbon() {
        let m = gen_structured(GridSpec::square(3, 2)).unwrap();
        let part = ribbons(&m);
        let (base, _) = orient_serial_with_stats(&m).unwrap();
        let target = part.ribbon(1)[0];
        let (flipped, _) =
            orient_serial_seeded(&m, |e| if e == target { RelOrientation::Flip } else { RelOrientation::Same })
                .unwrap();
        for e in 0..m.num_edges() {
            let expect = if part.ribbon_of(e) == 1 { !base[e] } else { base[e] };
            assert_eq!(flipped[e], expect);
        }
    }
}
