//! `snndyn`: cluster a dataset, apply update batches to a saved state, verify
//! a state against a from-scratch run, and benchmark incremental updates.
//!
//! Exit codes: 0 on success, 1 when a result fails verification, 2 on usage,
//! input or I/O errors.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snndyn::bench::{self, BenchConfig, Workload, CSV_HEADER};
use snndyn::dataset::{infer_dim, parse_deletions, parse_rows};
use snndyn::persistence::check_params;
use snndyn::{
    bisd_update, labels_isomorphic, load_points, load_state, save_state, sequential_update, snnd_cluster, Dataset,
    EngineState, Error, Params, UpdateBatch,
};

#[derive(Parser)]
#[command(
    name = "snndyn",
    version,
    about = "Shared-nearest-neighbor density clustering for changing datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset from scratch and save the resulting state.
    Cluster(ClusterArgs),
    /// Apply a batch of additions and deletions to a saved state.
    Update(UpdateArgs),
    /// Check a saved state against a from-scratch clustering of its points.
    Verify(VerifyArgs),
    /// Time from-scratch, batch and one-at-a-time updates over batch sizes.
    Bench(BenchArgs),
    /// Write a synthetic Gaussian-blob dataset.
    Generate(GenerateArgs),
}

#[derive(Args, Clone, Copy)]
struct ParamArgs {
    /// Size of the k-nearest list.
    #[arg(long)]
    k: usize,
    /// Capacity of the extended neighbor list (w >= k).
    #[arg(long)]
    w: usize,
    /// Minimum shared-neighbor count for an edge.
    #[arg(long = "sim-th")]
    sim_th: usize,
    /// Minimum degree for a core point.
    #[arg(long = "core-th")]
    core_th: usize,
}

impl ParamArgs {
    fn params(&self) -> Result<Params, Failure> {
        Ok(Params::new(self.k, self.w, self.sim_th, self.core_th)?)
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long = "state-out")]
    state_out: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Batch,
    Sequential,
}

#[derive(Args)]
struct UpdateArgs {
    #[arg(long)]
    state: PathBuf,
    /// Points to insert, same format as dataset files.
    #[arg(long)]
    add: Option<PathBuf>,
    /// Ids to delete, one per line.
    #[arg(long)]
    del: Option<PathBuf>,
    #[arg(long = "state-out")]
    state_out: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value = "batch")]
    mode: Mode,
    /// Optional parameter checks against the snapshot.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long = "sim-th")]
    sim_th: Option<usize>,
    #[arg(long = "core-th")]
    core_th: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    state: PathBuf,
    /// The full dataset the snapshot is expected to hold, in id order.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// Batch sizes as percentages of the base dataset.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value = "mixed")]
    workload: Workload,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 2.0)]
    spread: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::VerificationFailed(msg) => Failure::Verification(msg),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    let text = read_text(path)?;
    let dim = infer_dim(&text).ok_or_else(|| Failure::Usage(Error::EmptyDataset.to_string()))?;
    Ok(load_points(&text, dim)?)
}

fn read_state(path: &Path) -> Result<EngineState, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(load_state(std::io::BufReader::new(file))?)
}

fn write_state(path: &Path, state: &EngineState) -> Result<u64, Failure> {
    let file = File::create(path).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", path.display())))?;
    Ok(save_state(state, BufWriter::new(file))?)
}

fn summarize(state: &EngineState) -> String {
    let asg = state.assignment();
    format!(
        "points={} clusters={} outliers={} cores={} edges={}",
        state.dataset().len(),
        asg.cluster_count(),
        asg.outlier_count(),
        asg.cores().len(),
        state.graph().edge_count()
    )
}

fn cmd_cluster(args: ClusterArgs) -> Result<(), Failure> {
    let params = args.params.params()?;
    let dataset = load_dataset(&args.input)?;
    let start = Instant::now();
    let state = snnd_cluster(dataset, params)?;
    let elapsed = start.elapsed().as_secs_f64();
    write_state(&args.state_out, &state)?;
    write_text(&args.labels, &state.assignment().to_label_file())?;
    println!("{} elapsed={elapsed:.6}s", summarize(&state));
    Ok(())
}

fn cmd_update(args: UpdateArgs) -> Result<(), Failure> {
    if args.add.is_none() && args.del.is_none() {
        return Err(Failure::Usage("update needs at least one of --add or --del".into()));
    }
    let mut state = read_state(&args.state)?;
    let current = *state.params();
    let requested = Params {
        k: args.k.unwrap_or(current.k),
        w: args.w.unwrap_or(current.w),
        sim_threshold: args.sim_th.unwrap_or(current.sim_threshold),
        core_threshold: args.core_th.unwrap_or(current.core_threshold),
    };
    check_params(&state, &requested)?;

    let mut batch = UpdateBatch::default();
    if let Some(path) = &args.add {
        batch.additions = parse_rows(&read_text(path)?, state.dataset().dim())?;
    }
    if let Some(path) = &args.del {
        batch.deletions = parse_deletions(&read_text(path)?)?;
    }

    let start = Instant::now();
    let (passes, t1, t2) = match args.mode {
        Mode::Batch => {
            let affected = bisd_update(&mut state, &batch)?;
            (1, affected.t1.len(), affected.t2.len())
        }
        Mode::Sequential => {
            let report = sequential_update(&mut state, &batch)?;
            (report.passes, report.t1_total, report.t2_total)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    write_state(&args.state_out, &state)?;
    write_text(&args.labels, &state.assignment().to_label_file())?;
    println!(
        "added={} deleted={} passes={passes} t1={t1} t2={t2} {} elapsed={elapsed:.6}s",
        batch.additions.len(),
        batch.deletions.len(),
        summarize(&state)
    );
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let state = read_state(&args.state)?;
    let full = load_dataset(&args.input)?;
    let stored = state.dataset();
    if full.len() != stored.len()
        || full.dim() != stored.dim()
        || full.iter().zip(stored.iter()).any(|(a, b)| a.coords != b.coords)
    {
        return Err(Failure::Usage(format!(
            "{} does not hold the snapshot's points",
            args.input.display()
        )));
    }

    let oracle = snnd_cluster(stored.clone(), *state.params())?;
    let labels_ok = labels_isomorphic(state.assignment(), oracle.assignment());
    let stored_edges: std::collections::BTreeSet<_> = state.graph().edges().collect();
    let oracle_edges: std::collections::BTreeSet<_> = oracle.graph().edges().collect();
    let edges_ok = stored_edges == oracle_edges;

    println!("labels_isomorphic={labels_ok} edges_equal={edges_ok}");
    if labels_ok && edges_ok {
        return Ok(());
    }
    let mut summary = Vec::new();
    if !labels_ok {
        let points: Vec<String> = state
            .assignment()
            .labels()
            .iter()
            .zip(oracle.assignment().labels())
            .filter(|((_, a), (_, b))| a != b)
            .take(10)
            .map(|((id, a), (_, b))| format!("{id}: stored {a}, expected {b}"))
            .collect();
        summary.push(format!("differing points: {}", points.join("; ")));
    }
    if !edges_ok {
        let edges: Vec<String> = stored_edges
            .symmetric_difference(&oracle_edges)
            .take(10)
            .map(|(p, q, w)| {
                let side = if stored_edges.contains(&(*p, *q, *w)) {
                    "stored"
                } else {
                    "expected"
                };
                format!("{p}-{q} weight {w} ({side} only)")
            })
            .collect();
        summary.push(format!("differing edges: {}", edges.join("; ")));
    }
    Err(Failure::Verification(summary.join("\n")))
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let params = args.params.params()?;
    let name = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let config = BenchConfig {
        name,
        params,
        fractions: args.fractions,
        trials: args.trials,
        seed: args.seed,
        workload: args.workload,
        sequential: true,
    };
    config.validate()?;
    let dataset = load_dataset(&args.input)?;
    let base = snnd_cluster(dataset, params)?;

    let file =
        File::create(&args.csv).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", args.csv.display())))?;
    let mut csv = BufWriter::new(file);
    let io_err = |e: std::io::Error| Failure::Usage(format!("writing {}: {e}", args.csv.display()));
    writeln!(
        csv,
        "# workers={} workload={} {}",
        rayon::current_num_threads(),
        config.workload,
        params
    )
    .map_err(io_err)?;
    writeln!(csv, "{CSV_HEADER}").map_err(io_err)?;

    let mut write_failure = None;
    let records = bench::run_bench(&base, &config, |record| {
        if write_failure.is_none() {
            if let Err(e) = writeln!(csv, "{}", record.csv_row()).and_then(|_| csv.flush()) {
                write_failure = Some(e);
            }
        }
        eprintln!(
            "fraction={}% trial={} speedup_snnd={:.2} speedup_seq={:.2}",
            record.fraction,
            record.trial,
            record.speedup_vs_snnd(),
            record.speedup_vs_seq().unwrap_or(f64::NAN)
        );
    })?;
    if let Some(e) = write_failure {
        return Err(io_err(e));
    }

    println!("fraction,median_speedup_snnd,median_speedup_seq");
    for (fraction, snnd, seq) in bench::median_speedups(&records) {
        println!("{fraction},{snnd:.3},{:.3}", seq.unwrap_or(f64::NAN));
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    if args.n == 0 || args.dim == 0 {
        return Err(Failure::Usage("--n and --dim must be positive".into()));
    }
    if !(args.spread.is_finite() && args.spread >= 0.0) {
        return Err(Failure::Usage("--spread must be a non-negative number".into()));
    }
    let dataset = bench::gaussian_blobs(args.n, args.dim, args.clusters, args.spread, args.seed);
    write_text(&args.output, &dataset.to_rows_text())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = snndyn::workers_from_env() {
        // Only fails if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let result = match cli.command {
        Command::Cluster(args) => cmd_cluster(args),
        Command::Update(args) => cmd_update(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
