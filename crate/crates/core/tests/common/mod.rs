#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use snndyn::bisd::AffectedSets;
use snndyn::{Dataset, EngineState, Label, Params, PointId, UpdateBatch};

/// Every other point ranked by (distance, id), computed by a full sort.
pub fn brute_ranking(dataset: &Dataset, owner: PointId) -> Vec<(PointId, f64)> {
    let origin = dataset.coords(owner).expect("owner present");
    let mut all: Vec<(PointId, f64)> = dataset
        .iter()
        .filter(|p| p.id != owner)
        .map(|p| {
            let d = origin
                .iter()
                .zip(p.coords)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (p.id, d)
        })
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all
}

/// Checks every stored list against the brute-force ranking.
pub fn check_exact_prefix(state: &EngineState) -> Result<(), String> {
    let k = state.params().k;
    let w = state.params().w;
    if state.wlists().len() != state.dataset().len() {
        return Err(format!(
            "{} lists for {} points",
            state.wlists().len(),
            state.dataset().len()
        ));
    }
    for list in state.wlists() {
        let owner = list.owner();
        if list.len() < k || list.len() > w {
            return Err(format!("w({owner}) has {} entries with k={k} w={w}", list.len()));
        }
        let truth = brute_ranking(state.dataset(), owner);
        for (i, entry) in list.entries().iter().enumerate() {
            let (id, d) = truth[i];
            if entry.id != id || entry.distance.to_bits() != d.to_bits() {
                return Err(format!(
                    "w({owner})[{i}] is {}:{} but the exact ranking has {id}:{d}",
                    entry.id, entry.distance
                ));
            }
        }
    }
    Ok(())
}

/// Mutual-k-nearest edges with shared-neighbor weights, from a full sort per
/// point and hash-set intersections.
pub fn naive_edges(dataset: &Dataset, k: usize, sim: usize) -> BTreeMap<(PointId, PointId), u32> {
    let klists: BTreeMap<PointId, HashSet<PointId>> = dataset
        .ids()
        .iter()
        .map(|&p| {
            (
                p,
                brute_ranking(dataset, p)
                    .into_iter()
                    .take(k)
                    .map(|(id, _)| id)
                    .collect(),
            )
        })
        .collect();
    let mut edges = BTreeMap::new();
    for (&p, kp) in &klists {
        for &q in kp {
            if p >= q || !klists[&q].contains(&p) {
                continue;
            }
            let shared = kp.intersection(&klists[&q]).filter(|&&x| x != p && x != q).count();
            if shared >= sim {
                edges.insert((p, q), shared as u32);
            }
        }
    }
    edges
}

/// Cores, and labels from a breadth-first walk over core-core edges.
pub fn naive_clustering(
    ids: &[PointId],
    edges: &BTreeMap<(PointId, PointId), u32>,
    core_threshold: usize,
) -> (BTreeSet<PointId>, BTreeMap<PointId, Label>) {
    let mut adj: BTreeMap<PointId, Vec<(PointId, u32)>> = ids.iter().map(|&p| (p, Vec::new())).collect();
    for (&(p, q), &w) in edges {
        adj.get_mut(&p).unwrap().push((q, w));
        adj.get_mut(&q).unwrap().push((p, w));
    }
    let cores: BTreeSet<PointId> = adj
        .iter()
        .filter(|(_, e)| e.len() >= core_threshold)
        .map(|(&p, _)| p)
        .collect();
    let mut labels: BTreeMap<PointId, Label> = ids.iter().map(|&p| (p, Label::Outlier)).collect();
    for &start in &cores {
        if labels[&start] != Label::Outlier {
            continue;
        }
        // Cores are visited in ascending order, so `start` is the smallest id
        // of its component.
        let mut stack = vec![start];
        labels.insert(start, Label::Cluster(start));
        while let Some(p) = stack.pop() {
            for &(q, _) in &adj[&p] {
                if cores.contains(&q) && labels[&q] == Label::Outlier {
                    labels.insert(q, Label::Cluster(start));
                    stack.push(q);
                }
            }
        }
    }
    for &p in ids {
        if cores.contains(&p) {
            continue;
        }
        let best = adj[&p]
            .iter()
            .filter(|(q, _)| cores.contains(q))
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some(&(q, _)) = best {
            labels.insert(p, labels[&q]);
        }
    }
    (cores, labels)
}

/// Compares a state's graph and clustering with the naive oracles.
pub fn check_against_naive(state: &EngineState) -> Result<(), String> {
    let params = state.params();
    let edges = naive_edges(state.dataset(), params.k, params.sim_threshold);
    let got: BTreeMap<(PointId, PointId), u32> = state.graph().edges().map(|(p, q, w)| ((p, q), w)).collect();
    if got != edges {
        let missing = edges.iter().find(|(e, w)| got.get(e) != Some(w));
        let extra = got.iter().find(|(e, w)| edges.get(e) != Some(w));
        return Err(format!("graph differs: expected {missing:?}, unexpected {extra:?}"));
    }
    let (cores, labels) = naive_clustering(state.dataset().ids(), &edges, params.core_threshold);
    if &cores != state.assignment().cores() {
        return Err("core sets differ".into());
    }
    if &labels != state.assignment().labels() {
        let first = labels.iter().find(|(p, l)| state.assignment().label(**p) != Some(**l));
        return Err(format!("labels differ, first at {first:?}"));
    }
    Ok(())
}

/// Edges present in exactly one graph or with different weights.
pub fn changed_edges(before: &EngineState, after: &EngineState) -> Vec<(PointId, PointId)> {
    let a: BTreeMap<(PointId, PointId), u32> = before.graph().edges().map(|(p, q, w)| ((p, q), w)).collect();
    let b: BTreeMap<(PointId, PointId), u32> = after.graph().edges().map(|(p, q, w)| ((p, q), w)).collect();
    let mut out: Vec<(PointId, PointId)> = a.iter().filter(|(e, w)| b.get(e) != Some(w)).map(|(e, _)| *e).collect();
    out.extend(b.iter().filter(|(e, _)| !a.contains_key(e)).map(|(e, _)| *e));
    out
}

/// Checks that the reported sets cover every point whose k-list or incident
/// edges differ between `before` and the from-scratch `after`.
pub fn check_sufficiency(before: &EngineState, after: &EngineState, affected: &AffectedSets) -> Result<(), String> {
    let k = before.params().k;
    let new: BTreeSet<PointId> = affected.new_ids.iter().copied().collect();
    let old_k = before.klists();
    let new_k = after.klists();
    let changed: BTreeSet<PointId> = new_k
        .iter()
        .filter(|(p, list)| old_k.get(p).is_some_and(|old| old != *list))
        .map(|(p, _)| *p)
        .collect();
    // New points may also land in t1 when deletions reach their fresh lists.
    let old_t1: BTreeSet<PointId> = affected.t1.iter().filter(|p| !new.contains(p)).copied().collect();
    if changed != old_t1 {
        let missed: Vec<_> = changed.difference(&old_t1).take(5).collect();
        let spurious: Vec<_> = old_t1.difference(&changed).take(5).collect();
        return Err(format!("t1 mismatch: missed {missed:?}, spurious {spurious:?} (k={k})"));
    }
    let covered = |p: &PointId| {
        affected.t1.contains(p) || affected.t2.contains(p) || new.contains(p) || affected.deleted_ids.contains(p)
    };
    let full = |p: &PointId| affected.t1.contains(p) || new.contains(p) || affected.deleted_ids.contains(p);
    for (p, q) in changed_edges(before, after) {
        if !full(&p) && !full(&q) {
            return Err(format!("edge ({p},{q}) changed with neither endpoint recomputed"));
        }
        if !covered(&p) || !covered(&q) {
            return Err(format!("edge ({p},{q}) changed at a vertex outside every affected set"));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trial {
    pub dataset: Dataset,
    pub params: Params,
    pub batches: Vec<UpdateBatch>,
}

/// Blobs of points, optionally snapped to a coarse grid so that distance ties
/// are common.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, grid: bool) -> Dataset {
    let clusters = rng.random_range(1..=8);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..50.0)).collect())
        .collect();
    let noise = Normal::new(0.0, rng.random_range(1.0..6.0)).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..clusters)];
            c.iter()
                .map(|x| {
                    let v = x + noise.sample(rng);
                    if grid {
                        v.round()
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    Dataset::from_rows(dim, &rows).unwrap()
}

/// Adds between `lo` and `hi` percent of `dataset.len()` points and deletes
/// as many again, drawn independently. Some additions duplicate existing
/// coordinates exactly.
pub fn random_batch(rng: &mut ChaCha8Rng, dataset: &Dataset, lo: f64, hi: f64, grid: bool) -> UpdateBatch {
    let n = dataset.len();
    let count = |rng: &mut ChaCha8Rng| ((n as f64 * rng.random_range(lo..=hi) / 100.0).round() as usize).max(1);
    let adds = count(rng);
    let dels = count(rng);
    let jitter = Normal::new(0.0, 1.5).unwrap();
    let additions = (0..adds)
        .map(|_| {
            let base = dataset.coords_at(rng.random_range(0..n));
            if rng.random_bool(0.15) {
                return base.to_vec();
            }
            base.iter()
                .map(|x| {
                    let v = x + jitter.sample(rng);
                    if grid {
                        v.round()
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let deletions = sample(rng, n, dels).into_iter().map(|i| dataset.id_at(i)).collect();
    UpdateBatch { additions, deletions }
}

/// A random dataset, parameter set and chain of batches in the given ranges.
pub fn random_trial(
    rng: &mut ChaCha8Rng,
    points: std::ops::RangeInclusive<usize>,
    dims: std::ops::RangeInclusive<usize>,
    ks: std::ops::RangeInclusive<usize>,
    batches: usize,
) -> Trial {
    let n = rng.random_range(points);
    let dim = rng.random_range(dims);
    let k = rng.random_range(ks);
    let w = rng.random_range(k..=3 * k);
    let params = Params::new(k, w, rng.random_range(0..=k), rng.random_range(0..=k)).unwrap();
    let grid = rng.random_bool(0.3);
    let dataset = random_dataset(rng, n, dim, grid);
    let mut current = dataset.clone();
    let mut chain = Vec::new();
    for _ in 0..batches {
        let batch = random_batch(rng, &current, 1.0, 10.0, grid);
        current = current.applied(&batch).unwrap();
        chain.push(batch);
    }
    Trial {
        dataset,
        params,
        batches: chain,
    }
}
