//! Shared-nearest-neighbor graph and density-based cluster extraction.
//!
//! Two points are linked when each appears in the other's k-nearest list; the
//! link weight is the number of third-party neighbors they share. Links
//! lighter than the similarity threshold are dropped. Points whose surviving
//! degree reaches the core threshold are cores; connected cores form clusters,
//! every other linked point joins the cluster of its strongest core link, and
//! whatever is left is an outlier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::dataset::PointId;
use crate::error::{Error, Result};
use crate::union_find::DisjointSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Params {
    /// Size of the k-nearest list used to build the graph.
    pub k: usize,
    /// Capacity of the extended neighbor list (`w >= k`).
    pub w: usize,
    /// Minimum shared-neighbor count for an edge to survive.
    pub sim_threshold: usize,
    /// Minimum surviving degree for a point to be a core.
    pub core_threshold: usize,
}

impl Params {
    pub fn new(k: usize, w: usize, sim_threshold: usize, core_threshold: usize) -> Result<Self> {
        let params = Params {
            k,
            w,
            sim_threshold,
            core_threshold,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        if self.w < self.k {
            return Err(Error::InvalidParams(format!(
                "w ({}) must be at least k ({})",
                self.w, self.k
            )));
        }
        if self.sim_threshold > self.k {
            return Err(Error::InvalidParams(format!(
                "similarity threshold ({}) cannot exceed k ({})",
                self.sim_threshold, self.k
            )));
        }
        Ok(())
    }

    /// Checks the size-dependent constraints for a dataset of `points` points.
    pub(crate) fn check_size(&self, points: usize) -> Result<()> {
        if points < self.k + 1 {
            return Err(Error::DatasetTooSmall { k: self.k, points });
        }
        if self.core_threshold > points - 1 {
            return Err(Error::InvalidParams(format!(
                "core threshold ({}) exceeds the largest possible degree ({})",
                self.core_threshold,
                points - 1
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k={} w={} sim_threshold={} core_threshold={}",
            self.k, self.w, self.sim_threshold, self.core_threshold
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub neighbor: PointId,
    pub weight: u32,
}

/// Undirected weighted graph stored as per-vertex adjacency lists sorted by
/// neighbor id. Every current point is a vertex, isolated or not.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SnnGraph {
    adjacency: BTreeMap<PointId, Vec<Edge>>,
}

impl SnnGraph {
    pub fn with_vertices(ids: impl IntoIterator<Item = PointId>) -> Self {
        SnnGraph {
            adjacency: ids.into_iter().map(|id| (id, Vec::new())).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = PointId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn contains_vertex(&self, id: PointId) -> bool {
        self.adjacency.contains_key(&id)
    }

    pub fn neighbors(&self, id: PointId) -> &[Edge] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn degree(&self, id: PointId) -> usize {
        self.neighbors(id).len()
    }

    pub fn weight(&self, p: PointId, q: PointId) -> Option<u32> {
        let edges = self.neighbors(p);
        edges
            .binary_search_by_key(&q, |e| e.neighbor)
            .ok()
            .map(|i| edges[i].weight)
    }

    /// Each undirected edge once as `(lower, higher, weight)`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (PointId, PointId, u32)> + '_ {
        self.adjacency.iter().flat_map(|(&p, edges)| {
            edges
                .iter()
                .filter(move |e| e.neighbor > p)
                .map(move |e| (p, e.neighbor, e.weight))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(Vec::len).sum::<usize>() / 2
    }

    pub(crate) fn add_vertex(&mut self, id: PointId) {
        self.adjacency.entry(id).or_default();
    }

    /// Removes a vertex and the mirror entries of all its edges.
    pub(crate) fn remove_vertex(&mut self, id: PointId) {
        if let Some(edges) = self.adjacency.remove(&id) {
            for e in edges {
                self.remove_half(e.neighbor, id);
            }
        }
    }

    /// Replaces the adjacency list of `id` wholesale. Mirror entries are the
    /// caller's responsibility.
    pub(crate) fn set_adjacency(&mut self, id: PointId, mut edges: Vec<Edge>) {
        edges.sort_unstable();
        self.adjacency.insert(id, edges);
    }

    /// Sets or clears the one-directional entry `p -> q`.
    pub(crate) fn set_half(&mut self, p: PointId, q: PointId, weight: Option<u32>) {
        let edges = self.adjacency.entry(p).or_default();
        match (edges.binary_search_by_key(&q, |e| e.neighbor), weight) {
            (Ok(i), Some(weight)) => edges[i].weight = weight,
            (Ok(i), None) => {
                edges.remove(i);
            }
            (Err(i), Some(weight)) => edges.insert(i, Edge { neighbor: q, weight }),
            (Err(_), None) => {}
        }
    }

    pub(crate) fn remove_half(&mut self, p: PointId, q: PointId) {
        if let Some(edges) = self.adjacency.get_mut(&p) {
            if let Ok(i) = edges.binary_search_by_key(&q, |e| e.neighbor) {
                edges.remove(i);
            }
        }
    }

    /// Full scan of the structural invariants: symmetry, simplicity, sorted
    /// lists and threshold-respecting weights.
    pub fn check_invariants(&self, sim_threshold: usize) -> std::result::Result<(), String> {
        for (&p, edges) in &self.adjacency {
            for pair in edges.windows(2) {
                if pair[0].neighbor >= pair[1].neighbor {
                    return Err(format!("adjacency of {p} is unsorted or repeats a neighbor"));
                }
            }
            for e in edges {
                if e.neighbor == p {
                    return Err(format!("self-edge at {p}"));
                }
                if (e.weight as usize) < sim_threshold {
                    return Err(format!(
                        "edge {p}-{} has weight {} below threshold {sim_threshold}",
                        e.neighbor, e.weight
                    ));
                }
                match self.adjacency.get(&e.neighbor) {
                    None => return Err(format!("edge {p}-{} points at a missing vertex", e.neighbor)),
                    Some(_) if self.weight(e.neighbor, p) != Some(e.weight) => {
                        return Err(format!("edge {p}-{} is not mirrored", e.neighbor));
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// Shared third-party neighbors between two k-lists: the endpoints themselves
/// never count.
pub fn snn_similarity(kp: &[PointId], kq: &[PointId], p: PointId, q: PointId) -> usize {
    kp.iter().filter(|&&x| x != p && x != q && kq.contains(&x)).count()
}

/// k-nearest id lists for every vertex, laid out contiguously in id order.
pub(crate) struct KView {
    ids: Vec<PointId>,
    flat: Vec<PointId>,
    k: usize,
}

impl KView {
    pub(crate) fn new(ids: Vec<PointId>, flat: Vec<PointId>, k: usize) -> Self {
        debug_assert_eq!(flat.len(), ids.len() * k);
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        KView { ids, flat, k }
    }

    pub(crate) fn get(&self, id: PointId) -> Option<&[PointId]> {
        let i = self.ids.binary_search(&id).ok()?;
        Some(&self.flat[i * self.k..(i + 1) * self.k])
    }

    fn mutual_weight(&self, p: PointId, kp: &[PointId], q: PointId) -> Option<u32> {
        let kq = self.get(q).expect("k-list refers to a point without a list");
        kq.contains(&p).then(|| snn_similarity(kp, kq, p, q) as u32)
    }

    /// All surviving edges of `p`, sorted by neighbor.
    pub(crate) fn vertex_edges(&self, p: PointId, sim_threshold: usize) -> Vec<Edge> {
        let kp = self.get(p).expect("vertex without a k-list");
        let mut edges: Vec<Edge> = kp
            .iter()
            .filter_map(|&q| {
                self.mutual_weight(p, kp, q)
                    .filter(|&w| w as usize >= sim_threshold)
                    .map(|weight| Edge { neighbor: q, weight })
            })
            .collect();
        edges.sort_unstable();
        edges
    }

    /// The edge `p-q` as it should exist, or `None` when it should not.
    pub(crate) fn edge(&self, p: PointId, q: PointId, sim_threshold: usize) -> Option<u32> {
        let kp = self.get(p).expect("vertex without a k-list");
        if !kp.contains(&q) {
            return None;
        }
        self.mutual_weight(p, kp, q).filter(|&w| w as usize >= sim_threshold)
    }

    pub(crate) fn build_graph(&self, sim_threshold: usize) -> SnnGraph {
        let lists: Vec<Vec<Edge>> = self
            .ids
            .par_iter()
            .map(|&p| self.vertex_edges(p, sim_threshold))
            .collect();
        SnnGraph {
            adjacency: self.ids.iter().copied().zip(lists).collect(),
        }
    }
}

/// Builds the thresholded SNN graph from each point's k-nearest id list.
///
/// Panics if a list is shorter than `params.k` or names a point that has no
/// list of its own.
pub fn build_snn_graph(klists: &BTreeMap<PointId, Vec<PointId>>, params: &Params) -> SnnGraph {
    let k = params.k;
    let mut flat = Vec::with_capacity(klists.len() * k);
    for (id, list) in klists {
        assert!(list.len() >= k, "k-list of {id} is shorter than k");
        flat.extend_from_slice(&list[..k]);
    }
    KView::new(klists.keys().copied().collect(), flat, k).build_graph(params.sim_threshold)
}

/// Points whose surviving degree is at least the core threshold.
pub fn label_cores(graph: &SnnGraph, params: &Params) -> BTreeSet<PointId> {
    graph
        .adjacency
        .iter()
        .filter(|(_, edges)| edges.len() >= params.core_threshold)
        .map(|(&id, _)| id)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// Cluster named by its smallest core id.
    Cluster(PointId),
    Outlier,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Cluster(id) => id.fmt(f),
            Label::Outlier => f.write_str("OUTLIER"),
        }
    }
}

impl std::str::FromStr for Label {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "OUTLIER" {
            Ok(Label::Outlier)
        } else {
            s.parse().map(Label::Cluster)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: BTreeMap<PointId, Label>,
    cores: BTreeSet<PointId>,
}

impl ClusterAssignment {
    pub(crate) fn from_parts(labels: BTreeMap<PointId, Label>, cores: BTreeSet<PointId>) -> Self {
        ClusterAssignment { labels, cores }
    }

    pub fn labels(&self) -> &BTreeMap<PointId, Label> {
        &self.labels
    }

    pub fn label(&self, id: PointId) -> Option<Label> {
        self.labels.get(&id).copied()
    }

    pub fn cores(&self) -> &BTreeSet<PointId> {
        &self.cores
    }

    pub fn is_core(&self, id: PointId) -> bool {
        self.cores.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        self.labels
            .values()
            .filter_map(|l| match l {
                Label::Cluster(c) => Some(*c),
                Label::Outlier => None,
            })
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.values().filter(|l| **l == Label::Outlier).count()
    }

    /// `<id> <label|OUTLIER>` per line, sorted by id.
    pub fn to_label_file(&self) -> String {
        use std::fmt::Write;
        let mut out = String::with_capacity(self.labels.len() * 12);
        for (id, label) in &self.labels {
            writeln!(out, "{id} {label}").unwrap();
        }
        out
    }
}

/// Extracts clusters from a thresholded graph.
///
/// Cores connected through core-core edges share a cluster. A non-core point
/// joins the cluster of its heaviest core link, the smaller core id winning
/// ties. Points with no core link are outliers. Cluster labels are the
/// smallest core id in each cluster.
pub fn cluster_graph(
    graph: &SnnGraph,
    cores: &BTreeSet<PointId>,
    all_ids: impl IntoIterator<Item = PointId>,
) -> ClusterAssignment {
    let core_ids: Vec<PointId> = cores.iter().copied().collect();
    let core_index = |id: PointId| core_ids.binary_search(&id).ok();

    let mut sets = DisjointSet::new(core_ids.len());
    for (i, &p) in core_ids.iter().enumerate() {
        for e in graph.neighbors(p) {
            if e.neighbor > p {
                if let Some(j) = core_index(e.neighbor) {
                    sets.union(i, j);
                }
            }
        }
    }
    // Cores are visited in ascending id order, so the first core seen for
    // each root is its cluster's minimum.
    let mut root_label: Vec<Option<PointId>> = vec![None; core_ids.len()];
    let mut core_label = Vec::with_capacity(core_ids.len());
    for (i, &id) in core_ids.iter().enumerate() {
        let root = sets.find(i);
        core_label.push(*root_label[root].get_or_insert(id));
    }

    let labels = all_ids
        .into_iter()
        .map(|id| {
            if let Some(i) = core_index(id) {
                return (id, Label::Cluster(core_label[i]));
            }
            let strongest = graph
                .neighbors(id)
                .iter()
                .filter_map(|e| core_index(e.neighbor).map(|i| (e.weight, e.neighbor, i)))
                .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let label = match strongest {
                Some((_, _, i)) => Label::Cluster(core_label[i]),
                None => Label::Outlier,
            };
            (id, label)
        })
        .collect();

    ClusterAssignment {
        labels,
        cores: cores.clone(),
    }
}

/// True when both assignments have the same outliers and their cluster labels
/// correspond one-to-one.
///
/// Panics if the assignments cover different point sets.
pub fn labels_isomorphic(a: &ClusterAssignment, b: &ClusterAssignment) -> bool {
    assert!(
        a.labels.len() == b.labels.len() && a.labels.keys().eq(b.labels.keys()),
        "assignments cover different point sets"
    );
    let mut forward: BTreeMap<PointId, PointId> = BTreeMap::new();
    let mut backward: BTreeMap<PointId, PointId> = BTreeMap::new();
    for (la, lb) in a.labels.values().zip(b.labels.values()) {
        match (la, lb) {
            (Label::Outlier, Label::Outlier) => {}
            (Label::Cluster(x), Label::Cluster(y)) => {
                if *forward.entry(*x).or_insert(*y) != *y || *backward.entry(*y).or_insert(*x) != *x {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}
