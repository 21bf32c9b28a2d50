//! Superstep simulation of the distributed negotiation.
//!
//! Every round, each rank snapshots its proposals for shared edges into
//! per-neighbour messages; then every rank negotiates against the messages
//! it received; then the conflict flags are OR-reduced. Ranks read only the
//! snapshot and write only their own state, so any execution order of the
//! ranks inside a round yields the same trace.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{EdgeId, QuadMesh, RelOrientation};
use crate::orientation::{MoebiusError, OrientationMap};
use crate::partition::{
    build_local_domain, local_preprocess, partition_cells, CellPartition, LocalDomain, LocalState, PartitionError,
    PartitionMethod,
};
use crate::rng::SplitMix64;
use crate::serial::ribbons;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParallelError {
    #[error(transparent)]
    Moebius(#[from] MoebiusError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("rank {rank} received no proposal for shared edge {edge}")]
    MissingProposal { rank: usize, edge: EdgeId },
}

impl ParallelError {
    pub fn is_moebius(&self) -> bool {
        matches!(self, ParallelError::Moebius(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeProposal {
    pub edge: EdgeId,
    pub orient: RelOrientation,
    pub weight: u64,
}

/// Proposals for every edge shared between `sender` and the receiver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundMessage {
    pub sender: usize,
    pub entries: Vec<EdgeProposal>,
}

/// Snapshot of `state`'s proposals, batched per neighbour rank.
pub fn outgoing_messages(state: &LocalState) -> BTreeMap<usize, RoundMessage> {
    let mut out: BTreeMap<usize, RoundMessage> = BTreeMap::new();
    for (i, &edge) in state.shared.iter().enumerate() {
        out.entry(state.remote[i])
            .or_insert_with(|| RoundMessage { sender: state.rank, entries: Vec::new() })
            .entries
            .push(EdgeProposal { edge, orient: state.our_orient[i], weight: state.our_weight[i] });
    }
    out
}

/// One pass over the shared edges in ascending order, updating `state` in
/// place. Returns whether another round is needed: a propagation along a
/// segment flipped a shared edge, or left one holding a proposal that
/// neither side exchanged this round, so the neighbour decided on stale data.
pub fn negotiate_round(state: &mut LocalState, incoming: &[RoundMessage]) -> Result<bool, ParallelError> {
    let sent: Vec<(RelOrientation, u64)> =
        state.our_orient.iter().copied().zip(state.our_weight.iter().copied()).collect();
    let mut theirs: Vec<Option<(RelOrientation, u64)>> = vec![None; state.shared.len()];
    for msg in incoming {
        for p in &msg.entries {
            if let Some(i) = state.shared_index(p.edge) {
                theirs[i] = Some((p.orient, p.weight));
            }
        }
    }

    let mut conflict = false;
    for (i, their) in theirs.iter().enumerate() {
        let (their_orient, their_weight) =
            their.ok_or(ParallelError::MissingProposal { rank: state.rank, edge: state.shared[i] })?;
        if state.our_weight[i] == their_weight {
            if state.our_orient[i] != their_orient {
                return Err(MoebiusError {
                    edge: state.shared_keys[i],
                    found: state.our_orient[i],
                    required: their_orient,
                    rank: Some(state.rank),
                }
                .into());
            }
        } else if state.our_weight[i] < their_weight {
            state.our_weight[i] = their_weight;
            state.our_orient[i] = their_orient;
            if let Some(j) = state.affects_edge[i] {
                let rel = state.affects_orient[i].expect("affects arrays are set together");
                let propagated = rel ^ state.our_orient[i];
                if state.our_orient[j] != propagated {
                    conflict = true;
                }
                state.our_weight[j] = state.our_weight[i];
                state.our_orient[j] = propagated;
            }
        }
    }
    for (i, their) in theirs.iter().enumerate() {
        let now = (state.our_orient[i], state.our_weight[i]);
        if now != sent[i] && Some(now) != *their {
            conflict = true;
        }
    }
    Ok(conflict)
}

/// Order in which rank steps execute inside a superstep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Sequential,
    Reversed,
    /// Fresh seeded permutation of the ranks every round.
    Shuffled(u64),
    /// Ranks run concurrently on the rayon pool.
    Threaded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegotiationTrace {
    /// While-loop iterations executed, including the final conflict-free one.
    pub rounds: usize,
    /// Reduced conflict flag of every round.
    pub conflicts: Vec<bool>,
    /// Largest number of local segments any global ribbon is split into.
    pub k_observed: usize,
    pub partition: CellPartition,
    /// Per-rank states after negotiation and re-alignment.
    pub final_states: Vec<LocalState>,
}

fn for_each_rank<T, F>(states: &mut [LocalState], schedule: Schedule, round: usize, step: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut LocalState) -> T + Sync + Send,
{
    let order: Vec<usize> = match schedule {
        Schedule::Sequential | Schedule::Threaded => (0..states.len()).collect(),
        Schedule::Reversed => (0..states.len()).rev().collect(),
        Schedule::Shuffled(seed) => {
            SplitMix64::new(seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)).permutation(states.len())
        }
    };
    if schedule == Schedule::Threaded {
        return states.par_iter_mut().map(step).collect();
    }
    let mut results: Vec<Option<T>> = (0..states.len()).map(|_| None).collect();
    for r in order {
        results[r] = Some(step(&mut states[r]));
    }
    results.into_iter().map(|r| r.expect("every rank stepped")).collect()
}

/// First error in rank order, so the reported witness does not depend on
/// the schedule.
fn first_error<T>(results: Vec<Result<T, ParallelError>>) -> Result<Vec<T>, ParallelError> {
    results.into_iter().collect()
}

pub fn run_parallel(
    mesh: &QuadMesh,
    p: usize,
    method: PartitionMethod,
) -> Result<(OrientationMap, NegotiationTrace), ParallelError> {
    run_parallel_with(mesh, p, method, Schedule::Sequential)
}

pub fn run_parallel_with(
    mesh: &QuadMesh,
    p: usize,
    method: PartitionMethod,
    schedule: Schedule,
) -> Result<(OrientationMap, NegotiationTrace), ParallelError> {
    let partition = partition_cells(mesh, p, method)?;
    run_partitioned(mesh, partition, schedule)
}

/// Runs the negotiation on an explicit cell partition.
pub fn run_partitioned(
    mesh: &QuadMesh,
    partition: CellPartition,
    schedule: Schedule,
) -> Result<(OrientationMap, NegotiationTrace), ParallelError> {
    let p = partition.nparts();
    let domains: Vec<_> = (0..p).map(|r| build_local_domain(mesh, &partition, r)).collect();
    let preprocess = |d: &LocalDomain| local_preprocess(mesh, d).map_err(ParallelError::from);
    let mut states: Vec<LocalState> = first_error(if schedule == Schedule::Threaded {
        domains.par_iter().map(preprocess).collect()
    } else {
        domains.iter().map(preprocess).collect()
    })?;

    let mut conflicts = Vec::new();
    loop {
        let round = conflicts.len();
        let mut mailboxes: Vec<Vec<RoundMessage>> = vec![Vec::new(); p];
        for state in &states {
            for (to, msg) in outgoing_messages(state) {
                mailboxes[to].push(msg);
            }
        }
        let results = for_each_rank(&mut states, schedule, round, |st| negotiate_round(st, &mailboxes[st.rank]));
        let flags = first_error(results)?;
        let conflict = flags.into_iter().any(|c| c);
        conflicts.push(conflict);
        if !conflict {
            break;
        }
    }

    first_error(for_each_rank(&mut states, schedule, conflicts.len(), |st| {
        st.finalize(mesh).map_err(ParallelError::from)
    }))?;

    let mut merged: Vec<Option<RelOrientation>> = vec![None; mesh.num_edges()];
    for st in &states {
        for (i, &e) in st.edges.iter().enumerate() {
            let o = st.orientation[i];
            match merged[e] {
                None => merged[e] = Some(o),
                Some(prev) if prev != o => {
                    return Err(
                        MoebiusError { edge: mesh.edge(e), found: prev, required: o, rank: Some(st.rank) }.into()
                    );
                }
                Some(_) => {}
            }
        }
    }
    let flags = merged.into_iter().map(|o| o.expect("every edge belongs to a cell")).collect();

    let k_observed = max_segments_per_ribbon(mesh, &states);
    let trace = NegotiationTrace { rounds: conflicts.len(), conflicts, k_observed, partition, final_states: states };
    Ok((OrientationMap::from_flags(flags), trace))
}

/// `k`: the maximum over global ribbons of the number of distinct
/// `(rank, segment)` pieces the ribbon is cut into.
pub fn max_segments_per_ribbon(mesh: &QuadMesh, states: &[LocalState]) -> usize {
    let part = ribbons(mesh);
    let mut pieces: Vec<Vec<(usize, usize)>> = vec![Vec::new(); part.len()];
    for st in states {
        for (l, seg) in st.segments.iter().enumerate() {
            pieces[part.ribbon_of(seg.members[0])].push((st.rank, l));
        }
    }
    pieces.iter().map(Vec::len).max().unwrap_or(0)
}

/// Per global ribbon, the `(weight, rank, segment)` with the largest
/// initial weight.
pub fn heaviest_segments(
    states: &[LocalState],
    ribbon_of: impl Fn(EdgeId) -> usize,
) -> BTreeMap<usize, (u64, usize, usize)> {
    let mut best: BTreeMap<usize, (u64, usize, usize)> = BTreeMap::new();
    for st in states {
        for (l, seg) in st.segments.iter().enumerate() {
            let w = st.segment_weight(l);
            let r = ribbon_of(seg.members[0]);
            let entry = best.entry(r).or_insert((w, st.rank, l));
            if w > entry.0 {
                *entry = (w, st.rank, l);
            }
        }
    }
    best
}
