//! Benchmark harness: synthetic data, batch synthesis, timed comparison of
//! from-scratch, batch-incremental and one-at-a-time clustering, and oracle
//! verification of every result.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bisd::bisd_update;
use crate::dataset::{Dataset, PointId, UpdateBatch};
use crate::error::{Error, Result};
use crate::persistence::snapshot_size;
use crate::sequential::sequential_update;
use crate::snn_graph::Params;
use crate::snnd::{snnd_cluster, EngineState};

pub const CSV_HEADER: &str = "dataset,n,fraction,trial,t_snnd,t_bisd,t_seq,speedup_snnd,speedup_seq,mem_ratio,verified";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Workload {
    Add,
    Del,
    Mixed,
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "add" => Ok(Workload::Add),
            "del" => Ok(Workload::Del),
            "mixed" => Ok(Workload::Mixed),
            other => Err(format!("unknown workload {other:?} (expected add, del or mixed)")),
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Workload::Add => "add",
            Workload::Del => "del",
            Workload::Mixed => "mixed",
        })
    }
}

/// Isotropic Gaussian blobs with centers drawn uniformly from `[0, 100)^dim`.
pub fn gaussian_blobs(n: usize, dim: usize, clusters: usize, spread: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = clusters.max(1);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..100.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).expect("spread must be finite and non-negative");
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            centers[i % clusters]
                .iter()
                .map(|c| c + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    Dataset::from_rows(dim, &rows).expect("rows have the requested dimension")
}

/// Draws a batch touching `fraction` percent of `dataset`.
///
/// Additions are jittered copies of random existing points, with Gaussian
/// noise of 1% of each dimension's range; deletions are sampled uniformly.
pub fn synthesize_batch(dataset: &Dataset, fraction: f64, workload: Workload, rng: &mut impl Rng) -> UpdateBatch {
    let n = dataset.len();
    let count = ((n as f64 * fraction / 100.0).round() as usize).clamp(1, n);
    let mut batch = UpdateBatch::default();

    if workload != Workload::Del {
        let dim = dataset.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in dataset.iter() {
            for (d, &c) in p.coords.iter().enumerate() {
                lo[d] = lo[d].min(c);
                hi[d] = hi[d].max(c);
            }
        }
        let jitter: Vec<Option<Normal<f64>>> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| {
                let sigma = 0.01 * (h - l);
                (sigma > 0.0).then(|| Normal::new(0.0, sigma).unwrap())
            })
            .collect();
        for _ in 0..count {
            let base = dataset.coords_at(rng.random_range(0..n));
            let row = base
                .iter()
                .zip(&jitter)
                .map(|(&c, j)| c + j.map_or(0.0, |j| j.sample(rng)))
                .collect();
            batch.additions.push(row);
        }
    }
    if workload != Workload::Add {
        batch.deletions = sample(rng, n, count)
            .into_iter()
            .map(|i| dataset.id_at(i))
            .collect::<BTreeSet<PointId>>();
    }
    batch
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub dataset: String,
    pub n: usize,
    pub fraction: f64,
    pub trial: usize,
    pub t_snnd: f64,
    pub t_bisd: f64,
    pub t_seq: Option<f64>,
    pub mem_ratio: f64,
    pub verified: bool,
}

impl BenchRecord {
    pub fn speedup_vs_snnd(&self) -> f64 {
        self.t_snnd / self.t_bisd
    }

    pub fn speedup_vs_seq(&self) -> Option<f64> {
        self.t_seq.map(|t| t / self.t_bisd)
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:.6},{:.6},{},{:.3},{},{:.4},{}",
            self.dataset,
            self.n,
            self.fraction,
            self.trial,
            self.t_snnd,
            self.t_bisd,
            opt(self.t_seq),
            self.speedup_vs_snnd(),
            self.speedup_vs_seq().map(|v| format!("{v:.3}")).unwrap_or_default(),
            self.mem_ratio,
            self.verified
        )
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub name: String,
    pub params: Params,
    /// Batch sizes as percentages of the base dataset.
    pub fractions: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub workload: Workload,
    /// Also time the one-change-at-a-time baseline.
    pub sequential: bool,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be at least 1".into()));
        }
        if self.fractions.is_empty() {
            return Err(Error::InvalidParams("at least one fraction is required".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 100.0)) {
            return Err(Error::InvalidParams(format!(
                "fraction {f} is not a percentage in (0, 100)"
            )));
        }
        Ok(())
    }
}

/// Seed for one (fraction, trial) cell, stable under changes to other cells.
fn cell_seed(seed: u64, fraction_index: usize, trial: usize) -> u64 {
    seed ^ ((fraction_index as u64) << 32 | trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Compares an incremental result against the from-scratch oracle and
/// describes the first mismatch.
pub fn compare_states(incremental: &EngineState, oracle: &EngineState) -> std::result::Result<(), String> {
    if incremental.dataset() != oracle.dataset() {
        return Err("datasets differ".into());
    }
    if incremental.graph() != oracle.graph() {
        let a: BTreeSet<_> = incremental.graph().edges().collect();
        let b: BTreeSet<_> = oracle.graph().edges().collect();
        let diff: Vec<String> = a
            .symmetric_difference(&b)
            .take(10)
            .map(|(p, q, w)| format!("{p}-{q}:{w}"))
            .collect();
        return Err(format!("graphs differ on edges {}", diff.join(", ")));
    }
    if incremental.assignment().cores() != oracle.assignment().cores() {
        return Err("core sets differ".into());
    }
    if incremental.assignment() != oracle.assignment() {
        return Err("labels differ".into());
    }
    Ok(())
}

fn seconds(start: Instant) -> f64 {
    start.elapsed().as_secs_f64().max(1e-9)
}

/// Runs every (fraction, trial) cell from the same starting state, calling
/// `on_record` as each verified record is produced. Stops at the first
/// verification failure.
pub fn run_bench(
    base: &EngineState,
    config: &BenchConfig,
    mut on_record: impl FnMut(&BenchRecord),
) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let mut records = Vec::new();
    for (fi, &fraction) in config.fractions.iter().enumerate() {
        for trial in 0..config.trials {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(config.seed, fi, trial));
            let batch = synthesize_batch(base.dataset(), fraction, config.workload, &mut rng);
            let final_dataset = base.dataset().applied(&batch)?;

            let start = Instant::now();
            let oracle = snnd_cluster(final_dataset, config.params)?;
            let t_snnd = seconds(start);

            let mut incremental = base.clone();
            let start = Instant::now();
            bisd_update(&mut incremental, &batch)?;
            let t_bisd = seconds(start);

            compare_states(&incremental, &oracle).map_err(|why| {
                Error::VerificationFailed(format!("fraction {fraction}% trial {trial}: batch update {why}"))
            })?;

            let t_seq = if config.sequential {
                let mut seq = base.clone();
                let start = Instant::now();
                sequential_update(&mut seq, &batch)?;
                let t = seconds(start);
                compare_states(&seq, &oracle).map_err(|why| {
                    Error::VerificationFailed(format!("fraction {fraction}% trial {trial}: sequential update {why}"))
                })?;
                Some(t)
            } else {
                None
            };

            let mem_ratio =
                snapshot_size(&incremental) as f64 / snapshot_size(&incremental.with_minimal_lists()) as f64;
            let record = BenchRecord {
                dataset: config.name.clone(),
                n: base.dataset().len(),
                fraction,
                trial,
                t_snnd,
                t_bisd,
                t_seq,
                mem_ratio,
                verified: true,
            };
            on_record(&record);
            records.push(record);
        }
    }
    Ok(records)
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Median speedup over from-scratch clustering for each fraction, in the
/// order the fractions first appear.
pub fn median_speedups(records: &[BenchRecord]) -> Vec<(f64, f64, Option<f64>)> {
    let mut fractions: Vec<f64> = Vec::new();
    for r in records {
        if !fractions.contains(&r.fraction) {
            fractions.push(r.fraction);
        }
    }
    fractions
        .into_iter()
        .map(|f| {
            let cell: Vec<&BenchRecord> = records.iter().filter(|r| r.fraction == f).collect();
            let mut snnd: Vec<f64> = cell.iter().map(|r| r.speedup_vs_snnd()).collect();
            let mut seq: Vec<f64> = cell.iter().filter_map(|r| r.speedup_vs_seq()).collect();
            let seq = (!seq.is_empty()).then(|| median(&mut seq));
            (f, median(&mut snnd), seq)
        })
        .collect()
}
