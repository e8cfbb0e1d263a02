//! Extended nearest-neighbor lists.
//!
//! Each point keeps up to `w` neighbors ranked by `(distance, id)`; only the
//! first `k` entries feed the SNN graph. A list always holds an exact prefix
//! of the owner's full ranking over the current dataset, which is what lets
//! insertions be merged and deletions be truncated without recomputation.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use crate::dataset::{squared_distance, Dataset, PointId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: PointId,
    pub distance: f64,
}

impl Neighbor {
    pub fn new(id: PointId, distance: f64) -> Self {
        Neighbor { id, distance }
    }

    /// Total ranking order: distance first, id breaks ties.
    #[inline]
    pub fn rank_cmp(&self, other: &Neighbor) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }
}

/// Heap adapter ordering neighbors by rank.
#[derive(Clone, Copy, Debug)]
struct Ranked(Neighbor);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

// Relative slack on squared distances, far above the rounding error of a
// square root, so anything beyond it is certainly farther than the cutoff.
const SQUARED_SLACK: f64 = 1e-12;

/// Keeps the `capacity` best-ranked neighbors seen so far.
pub(crate) struct BoundedNeighbors {
    heap: BinaryHeap<Ranked>,
    capacity: usize,
    /// Squared distances above this cannot enter the full heap.
    reject_above: f64,
}

impl BoundedNeighbors {
    pub(crate) fn new(capacity: usize) -> Self {
        BoundedNeighbors {
            heap: BinaryHeap::with_capacity(capacity + 1),
            capacity,
            reject_above: f64::INFINITY,
        }
    }

    #[inline]
    pub(crate) fn offer(&mut self, candidate: Neighbor) {
        if self.heap.len() < self.capacity {
            self.heap.push(Ranked(candidate));
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if candidate.rank_cmp(&worst.0) == Ordering::Less {
                *worst = Ranked(candidate);
            } else {
                return;
            }
        } else {
            return;
        }
        if self.heap.len() == self.capacity {
            let d = self.heap.peek().map_or(f64::INFINITY, |w| w.0.distance);
            self.reject_above = d * d * (1.0 + SQUARED_SLACK);
        }
    }

    /// Same as `offer` for a point at squared distance `squared`, skipping the
    /// square root when the point is clearly too far.
    #[inline]
    pub(crate) fn offer_squared(&mut self, id: PointId, squared: f64) {
        if squared > self.reject_above {
            return;
        }
        self.offer(Neighbor::new(id, squared.sqrt()));
    }

    pub(crate) fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }
}

/// Result of dropping deleted ids from a list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RemoveOutcome {
    pub topk_changed: bool,
    pub needs_rebuild: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedNeighborList {
    owner: PointId,
    entries: Vec<Neighbor>,
    capacity: usize,
}

impl ExtendedNeighborList {
    /// Wraps pre-ranked entries, checking ordering, uniqueness, ownership and
    /// capacity.
    pub fn from_entries(owner: PointId, capacity: usize, entries: Vec<Neighbor>) -> Result<Self> {
        if entries.len() > capacity {
            return Err(Error::InvalidParams(format!(
                "list of {owner} has {} entries, capacity {capacity}",
                entries.len()
            )));
        }
        if entries.iter().any(|n| n.id == owner) {
            return Err(Error::InvalidParams(format!("list of {owner} contains its owner")));
        }
        if entries.iter().any(|n| !(n.distance >= 0.0)) {
            return Err(Error::InvalidParams(format!("list of {owner} has an invalid distance")));
        }
        if entries.windows(2).any(|w| w[0].rank_cmp(&w[1]) != Ordering::Less) {
            return Err(Error::InvalidParams(format!("list of {owner} is not strictly ranked")));
        }
        let mut ids: Vec<PointId> = entries.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams(format!("list of {owner} repeats a neighbor")));
        }
        Ok(ExtendedNeighborList {
            owner,
            entries,
            capacity,
        })
    }

    pub fn owner(&self) -> PointId {
        self.owner
    }

    pub fn entries(&self) -> &[Neighbor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// The `k` nearest neighbors, sliced from the front of the list.
    ///
    /// Panics if the list holds fewer than `k` entries; maintenance rebuilds
    /// short lists before anyone reads them.
    pub fn topk_slice(&self, k: usize) -> &[Neighbor] {
        assert!(
            self.entries.len() >= k,
            "neighbor list of {} has {} entries, fewer than k = {k}",
            self.owner,
            self.entries.len()
        );
        &self.entries[..k]
    }

    pub fn topk(&self, k: usize) -> Vec<PointId> {
        self.topk_slice(k).iter().map(|n| n.id).collect()
    }

    pub fn contains_in_topk(&self, id: PointId, k: usize) -> bool {
        self.topk_slice(k).iter().any(|n| n.id == id)
    }

    /// Merges freshly inserted points into the list.
    ///
    /// The merged list never grows past its pre-merge length: an old point
    /// beyond the current prefix could outrank entries appended past it.
    /// Returns whether the top-k ids changed.
    pub fn merge_new_candidates(&mut self, candidates: &[Neighbor], k: usize) -> bool {
        if candidates.is_empty() {
            return false;
        }
        debug_assert!(candidates.iter().all(|c| c.id != self.owner));
        debug_assert!(candidates.iter().all(|c| self.entries.iter().all(|e| e.id != c.id)));

        let limit = self.entries.len().min(self.capacity);
        let mut sorted = candidates.to_vec();
        sorted.sort_unstable_by(Neighbor::rank_cmp);

        let mut merged = Vec::with_capacity(limit);
        let (mut a, mut b) = (0, 0);
        while merged.len() < limit {
            let take_old = match (self.entries.get(a), sorted.get(b)) {
                (Some(old), Some(new)) => old.rank_cmp(new) == Ordering::Less,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if take_old {
                merged.push(self.entries[a]);
                a += 1;
            } else {
                merged.push(sorted[b]);
                b += 1;
            }
        }

        let top = k.min(limit);
        let changed = merged[..top]
            .iter()
            .zip(&self.entries[..top])
            .any(|(x, y)| x.id != y.id);
        self.entries = merged;
        changed
    }

    /// Drops deleted ids while preserving rank order.
    pub fn remove_deleted(&mut self, deleted: &BTreeSet<PointId>, k: usize) -> RemoveOutcome {
        self.remove_where(|id| deleted.contains(&id), k)
    }

    pub(crate) fn remove_where(&mut self, is_deleted: impl Fn(PointId) -> bool, k: usize) -> RemoveOutcome {
        let old_top: Vec<PointId> = self.entries.iter().take(k).map(|n| n.id).collect();
        let before = self.entries.len();
        self.entries.retain(|n| !is_deleted(n.id));
        if self.entries.len() == before {
            return RemoveOutcome {
                topk_changed: false,
                needs_rebuild: false,
            };
        }
        let needs_rebuild = self.entries.len() < k;
        let topk_changed = needs_rebuild || self.entries.iter().take(k).map(|n| n.id).ne(old_top.iter().copied());
        RemoveOutcome {
            topk_changed,
            needs_rebuild,
        }
    }

    /// Replaces the entries wholesale.
    pub(crate) fn replace(&mut self, rebuilt: ExtendedNeighborList) {
        debug_assert_eq!(rebuilt.owner, self.owner);
        *self = rebuilt;
    }

    /// First `len` entries only; used to derive the `w = k` equivalent state.
    pub(crate) fn truncated(&self, len: usize) -> ExtendedNeighborList {
        ExtendedNeighborList {
            owner: self.owner,
            entries: self.entries[..len.min(self.entries.len())].to_vec(),
            capacity: len,
        }
    }
}

/// Builds the extended list of the point at position `index` by scanning the
/// whole dataset.
pub(crate) fn build_at(dataset: &Dataset, index: usize, w: usize) -> ExtendedNeighborList {
    let owner = dataset.id_at(index);
    let origin = dataset.coords_at(index);
    let mut best = BoundedNeighbors::new(w);
    for (j, point) in dataset.iter().enumerate() {
        if j != index {
            best.offer_squared(point.id, squared_distance(origin, point.coords));
        }
    }
    ExtendedNeighborList {
        owner,
        entries: best.into_sorted(),
        capacity: w,
    }
}

/// Builds `owner`'s extended list over `dataset` with capacity `w`.
pub fn build_wlist(owner: PointId, dataset: &Dataset, w: usize, k: usize) -> Result<ExtendedNeighborList> {
    if w < k || k == 0 {
        return Err(Error::InvalidParams(format!("need w >= k >= 1, got k = {k}, w = {w}")));
    }
    if dataset.len() < k + 1 {
        return Err(Error::DatasetTooSmall {
            k,
            points: dataset.len(),
        });
    }
    let index = dataset.index_of(owner).ok_or_else(|| Error::MissingIds(vec![owner]))?;
    Ok(build_at(dataset, index, w))
}
