use std::fmt;
use std::ops::Index;

use thiserror::Error;

use crate::mesh::{EdgeId, EdgeKey, RelOrientation};

/// Per-edge orientation flag, indexed by [`EdgeId`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrientationMap {
    flags: Vec<RelOrientation>,
}

impl OrientationMap {
    /// All edges canonical (`Same`).
    pub fn canonical(num_edges: usize) -> Self {
        OrientationMap { flags: vec![RelOrientation::Same; num_edges] }
    }

    pub fn from_flags(flags: Vec<RelOrientation>) -> Self {
        OrientationMap { flags }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn get(&self, e: EdgeId) -> RelOrientation {
        self.flags[e]
    }

    pub fn set(&mut self, e: EdgeId, o: RelOrientation) {
        self.flags[e] = o;
    }

    pub fn flip(&mut self, e: EdgeId) {
        self.flags[e] = !self.flags[e];
    }

    pub fn flags(&self) -> &[RelOrientation] {
        &self.flags
    }

    pub fn into_flags(self) -> Vec<RelOrientation> {
        self.flags
    }
}

impl Index<EdgeId> for OrientationMap {
    type Output = RelOrientation;

    fn index(&self, e: EdgeId) -> &RelOrientation {
        &self.flags[e]
    }
}

/// No consistent orientation exists: propagation reached `edge` demanding
/// `required` while it already carried `found`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub struct MoebiusError {
    pub edge: EdgeKey,
    pub found: RelOrientation,
    pub required: RelOrientation,
    /// Simulated process that detected the conflict, for the distributed run.
    pub rank: Option<usize>,
}

impl fmt::Display for MoebiusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Moebius strip found at edge {}: orientation {} conflicts with required {}",
            self.edge, self.found, self.required
        )?;
        if let Some(rank) = self.rank {
            write!(f, " (detected by rank {rank})")?;
        }
        Ok(())
    }
}
