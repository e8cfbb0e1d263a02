//! From-scratch SNN density clustering.
//!
//! This is both the baseline the incremental engine is timed against and the
//! oracle it is checked against.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::{Dataset, PointId};
use crate::error::Result;
use crate::neighbors::{build_at, ExtendedNeighborList};
use crate::snn_graph::{cluster_graph, label_cores, ClusterAssignment, KView, Params, SnnGraph};

/// Everything needed to resume incremental clustering: the points, their
/// extended neighbor lists, the SNN graph and the current clustering.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineState {
    pub(crate) dataset: Dataset,
    pub(crate) params: Params,
    /// Aligned with `dataset` positions.
    pub(crate) wlists: Vec<ExtendedNeighborList>,
    pub(crate) graph: SnnGraph,
    pub(crate) assignment: ClusterAssignment,
}

impl EngineState {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn graph(&self) -> &SnnGraph {
        &self.graph
    }

    pub fn assignment(&self) -> &ClusterAssignment {
        &self.assignment
    }

    pub fn wlists(&self) -> &[ExtendedNeighborList] {
        &self.wlists
    }

    pub fn wlist(&self, id: PointId) -> Option<&ExtendedNeighborList> {
        self.dataset.index_of(id).map(|i| &self.wlists[i])
    }

    /// Each point's k-nearest ids.
    pub fn klists(&self) -> BTreeMap<PointId, Vec<PointId>> {
        self.wlists.iter().map(|l| (l.owner(), l.topk(self.params.k))).collect()
    }

    pub(crate) fn kview(&self) -> KView {
        let k = self.params.k;
        let mut flat = Vec::with_capacity(self.wlists.len() * k);
        for list in &self.wlists {
            flat.extend(list.topk_slice(k).iter().map(|n| n.id));
        }
        KView::new(self.dataset.ids().to_vec(), flat, k)
    }

    /// Relabels cores and clusters from the current graph.
    pub(crate) fn recluster(&mut self) {
        let cores = label_cores(&self.graph, &self.params);
        self.assignment = cluster_graph(&self.graph, &cores, self.dataset.ids().iter().copied());
    }

    /// Rebuilds the graph from the stored lists and compares it with the
    /// maintained one.
    pub fn graph_matches_lists(&self) -> bool {
        self.kview().build_graph(self.params.sim_threshold) == self.graph
    }

    /// The same state as if it had been built with `w = k`.
    pub fn with_minimal_lists(&self) -> EngineState {
        let k = self.params.k;
        EngineState {
            dataset: self.dataset.clone(),
            params: Params { w: k, ..self.params },
            wlists: self.wlists.iter().map(|l| l.truncated(k)).collect(),
            graph: self.graph.clone(),
            assignment: self.assignment.clone(),
        }
    }
}

pub(crate) fn build_all_wlists(dataset: &Dataset, w: usize) -> Vec<ExtendedNeighborList> {
    (0..dataset.len())
        .into_par_iter()
        .map(|i| build_at(dataset, i, w))
        .collect()
}

/// Clusters `dataset` from scratch, building full `w`-length lists so the
/// result can seed incremental updates.
pub fn snnd_cluster(dataset: Dataset, params: Params) -> Result<EngineState> {
    params.validate()?;
    params.check_size(dataset.len())?;
    let wlists = build_all_wlists(&dataset, params.w);
    let mut state = EngineState {
        graph: SnnGraph::default(),
        assignment: ClusterAssignment::default(),
        dataset,
        params,
        wlists,
    };
    state.graph = state.kview().build_graph(params.sim_threshold);
    state.recluster();
    Ok(state)
}
