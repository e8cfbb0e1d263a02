//! Batch-incremental maintenance of an [`EngineState`].
//!
//! A batch is applied in three steps. The insertion phase appends the new
//! points, builds their extended lists, and merges them into every existing
//! list. The deletion phase drops the deleted points from every list,
//! rebuilding only lists that fall below `k`. Points whose k-nearest list
//! changed in either phase (`t1`) have their adjacency recomputed in full;
//! points that merely list a `t1` point among their k nearest (`t2`) only have
//! those entries refreshed. The result is the graph a from-scratch run over
//! the final dataset would build, so reclustering it gives identical labels.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::dataset::{apply_batch_ids, distance, PointId, UpdateBatch};
use crate::error::{Error, Result};
use crate::neighbors::{build_at, BoundedNeighbors, ExtendedNeighborList, Neighbor};
use crate::snnd::EngineState;

/// Points touched by one batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AffectedSets {
    pub t1_add: BTreeSet<PointId>,
    pub t2_add: BTreeSet<PointId>,
    pub t1_del: BTreeSet<PointId>,
    pub t2_del: BTreeSet<PointId>,
    /// Surviving points whose k-nearest list changed.
    pub t1: BTreeSet<PointId>,
    /// Surviving points with an unchanged k-nearest list that contains a
    /// `t1` point.
    pub t2: BTreeSet<PointId>,
    pub new_ids: Vec<PointId>,
    pub deleted_ids: BTreeSet<PointId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InsertionOutcome {
    pub t1_add: BTreeSet<PointId>,
    pub t2_add: BTreeSet<PointId>,
    pub new_ids: Vec<PointId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeletionOutcome {
    pub t1_del: BTreeSet<PointId>,
    pub t2_del: BTreeSet<PointId>,
    /// Owners whose list had to be recomputed.
    pub rebuilt: BTreeSet<PointId>,
}

/// Points outside `changed` whose k-nearest list contains a member of
/// `changed`, restricted to positions `0..limit`.
fn second_ring(state: &EngineState, changed: &BTreeSet<PointId>, limit: usize) -> BTreeSet<PointId> {
    if changed.is_empty() {
        return BTreeSet::new();
    }
    let k = state.params.k;
    state.wlists[..limit]
        .par_iter()
        .filter(|l| !changed.contains(&l.owner()))
        .filter(|l| l.topk_slice(k).iter().any(|n| changed.contains(&n.id)))
        .map(|l| l.owner())
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Appends `additions` to the dataset and folds them into every neighbor
/// list. Leaves the graph stale until [`update_snn_graph`] runs.
pub fn insertion_phase(state: &mut EngineState, additions: &[Vec<f64>]) -> Result<InsertionOutcome> {
    if additions.is_empty() {
        return Ok(InsertionOutcome::default());
    }
    for row in additions {
        state.dataset.check_dim(row)?;
    }
    let k = state.params.k;
    let w = state.params.w;
    let old_len = state.dataset.len();

    // A merged list keeps its length, so a new point can only enter a list by
    // outranking its current last entry.
    let cutoffs: Vec<Neighbor> = state
        .wlists
        .iter()
        .map(|l| *l.entries().last().expect("neighbor lists are never empty"))
        .collect();

    let new_ids: Vec<PointId> = additions.iter().map(|row| state.dataset.push(row)).collect();
    let dataset = &state.dataset;

    // One pass per new point computes each new-to-existing distance once and
    // serves both the new point's own list and the existing lists it enters.
    let scans: Vec<(ExtendedNeighborList, Vec<(usize, Neighbor)>)> = (old_len..dataset.len())
        .into_par_iter()
        .map(|index| {
            let id = dataset.id_at(index);
            let origin = dataset.coords_at(index);
            let mut best = BoundedNeighbors::new(w);
            let mut hits = Vec::new();
            for (j, point) in dataset.iter().enumerate() {
                if j == index {
                    continue;
                }
                let d = distance(origin, point.coords);
                best.offer(Neighbor::new(point.id, d));
                if j < old_len {
                    let candidate = Neighbor::new(id, d);
                    if candidate.rank_cmp(&cutoffs[j]).is_lt() {
                        hits.push((j, candidate));
                    }
                }
            }
            let list = ExtendedNeighborList::from_entries(id, w, best.into_sorted())
                .expect("bounded scan yields a ranked list");
            (list, hits)
        })
        .collect();

    let mut hits: Vec<(usize, Neighbor)> = Vec::new();
    for (list, point_hits) in scans {
        state.wlists.push(list);
        hits.extend(point_hits);
    }
    hits.sort_unstable_by_key(|(j, _)| *j);

    let mut t1_add = BTreeSet::new();
    for group in hits.chunk_by(|a, b| a.0 == b.0) {
        let j = group[0].0;
        let candidates: Vec<Neighbor> = group.iter().map(|(_, n)| *n).collect();
        if state.wlists[j].merge_new_candidates(&candidates, k) {
            t1_add.insert(state.wlists[j].owner());
        }
    }
    let t2_add = second_ring(state, &t1_add, old_len);

    Ok(InsertionOutcome {
        t1_add,
        t2_add,
        new_ids,
    })
}

/// Removes `deletions` from the dataset and from every neighbor list,
/// rebuilding lists that drop below `k`. Leaves the graph stale until
/// [`update_snn_graph`] runs.
pub fn deletion_phase(state: &mut EngineState, deletions: &BTreeSet<PointId>) -> Result<DeletionOutcome> {
    if deletions.is_empty() {
        return Ok(DeletionOutcome::default());
    }
    let missing: Vec<PointId> = deletions
        .iter()
        .copied()
        .filter(|id| !state.dataset.contains(*id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    check_remaining(state, state.dataset.len() - deletions.len())?;

    let k = state.params.k;
    let w = state.params.w;
    let mut dead = vec![false; state.dataset.next_id().0 as usize];
    for id in deletions {
        dead[id.0 as usize] = true;
    }
    state.dataset.remove(deletions);
    state.wlists.retain(|l| !dead[l.owner().0 as usize]);

    let dataset = &state.dataset;
    let flags: Vec<(bool, bool)> = state
        .wlists
        .par_iter_mut()
        .enumerate()
        .map(|(index, list)| {
            let outcome = list.remove_where(|id| dead[id.0 as usize], k);
            if outcome.needs_rebuild {
                list.replace(build_at(dataset, index, w));
            }
            (outcome.topk_changed || outcome.needs_rebuild, outcome.needs_rebuild)
        })
        .collect();

    let mut t1_del = BTreeSet::new();
    let mut rebuilt = BTreeSet::new();
    for (list, (changed, was_rebuilt)) in state.wlists.iter().zip(flags) {
        if changed {
            t1_del.insert(list.owner());
        }
        if was_rebuilt {
            rebuilt.insert(list.owner());
        }
    }
    let t2_del = second_ring(state, &t1_del, state.wlists.len());

    Ok(DeletionOutcome {
        t1_del,
        t2_del,
        rebuilt,
    })
}

/// Combines the per-phase sets: `t1 = (t1_add ∪ t1_del) − deleted` and
/// `t2 = ((t2_add ∪ t2_del) − t1) − deleted`.
pub fn combine_affected(
    insertion: InsertionOutcome,
    deletion: DeletionOutcome,
    deleted_ids: BTreeSet<PointId>,
) -> AffectedSets {
    let t1: BTreeSet<PointId> = insertion
        .t1_add
        .union(&deletion.t1_del)
        .filter(|id| !deleted_ids.contains(id))
        .copied()
        .collect();
    let t2: BTreeSet<PointId> = insertion
        .t2_add
        .union(&deletion.t2_del)
        .filter(|id| !t1.contains(id) && !deleted_ids.contains(id))
        .copied()
        .collect();
    AffectedSets {
        t1_add: insertion.t1_add,
        t2_add: insertion.t2_add,
        t1_del: deletion.t1_del,
        t2_del: deletion.t2_del,
        t1,
        t2,
        new_ids: insertion.new_ids,
        deleted_ids,
    }
}

/// Brings the graph in line with the current neighbor lists.
///
/// Deleted vertices go with all their edges and new vertices are added.
/// Vertices in `t1` and new vertices get their adjacency recomputed from
/// scratch. Vertices in `t2` only refresh their entries towards those
/// vertices; all other adjacency stays as it was.
pub fn update_snn_graph(state: &mut EngineState, affected: &AffectedSets) {
    let sim = state.params.sim_threshold;
    let k = state.params.k;
    let view = state.kview();
    let dirty: BTreeSet<PointId> = affected
        .t1
        .iter()
        .chain(&affected.new_ids)
        .copied()
        .filter(|id| state.dataset.contains(*id))
        .collect();

    let graph = &mut state.graph;
    for &id in &affected.deleted_ids {
        graph.remove_vertex(id);
    }
    for &id in &affected.new_ids {
        graph.add_vertex(id);
    }
    if dirty.is_empty() {
        return;
    }

    let dirty_ids: Vec<PointId> = dirty.iter().copied().collect();
    let full: Vec<_> = dirty_ids.par_iter().map(|&p| view.vertex_edges(p, sim)).collect();
    for (&p, edges) in dirty_ids.iter().zip(full) {
        graph.set_adjacency(p, edges);
    }

    let ring: Vec<PointId> = affected.t2.iter().copied().collect();
    let partial: Vec<Vec<(PointId, Option<u32>)>> = ring
        .par_iter()
        .map(|&r| {
            let kr = view.get(r).expect("t2 point without a k-list");
            kr.iter()
                .take(k)
                .filter(|s| dirty.contains(s))
                .map(|&s| (s, view.edge(r, s, sim)))
                .collect()
        })
        .collect();
    for (&r, updates) in ring.iter().zip(partial) {
        for (s, weight) in updates {
            graph.set_half(r, s, weight);
        }
    }
}

fn check_remaining(state: &EngineState, remaining: usize) -> Result<()> {
    if remaining < state.params.k + 1 {
        return Err(Error::TooSmallAfterDeletions {
            k: state.params.k,
            remaining,
        });
    }
    state.params.check_size(remaining)
}

/// Applies a whole batch: all insertions, then all deletions, one graph
/// update and one reclustering. On error the state is left untouched.
pub fn bisd_update(state: &mut EngineState, batch: &UpdateBatch) -> Result<AffectedSets> {
    apply_batch_ids(&state.dataset, batch)?;
    check_remaining(
        state,
        state.dataset.len() + batch.additions.len() - batch.deletions.len(),
    )?;
    if batch.is_empty() {
        return Ok(AffectedSets::default());
    }

    let insertion = insertion_phase(state, &batch.additions)?;
    let deletion = deletion_phase(state, &batch.deletions)?;
    let affected = combine_affected(insertion, deletion, batch.deletions.clone());
    update_snn_graph(state, &affected);
    state.recluster();
    Ok(affected)
}
