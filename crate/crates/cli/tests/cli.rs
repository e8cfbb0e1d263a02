use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const LINE: &str = "0\n1\n2\n10\n11\n12\n";
const PARAMS: [&str; 8] = ["--k", "2", "--w", "4", "--sim-th", "1", "--core-th", "2"];

fn snndyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snndyn"))
        .args(args)
        .env("SNNDYN_WORKERS", "2")
        .output()
        .expect("failed to run snndyn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        s(&p)
    }

    fn s(&self, name: &str) -> String {
        s(&self.path(name))
    }

    fn cluster(&self, data: &str, params: &[&str]) -> Output {
        let input = self.file("data.txt", data);
        let mut args = vec!["cluster", "--input", &input];
        args.extend_from_slice(params);
        let (state, labels) = (self.s("s0.snap"), self.s("l0.txt"));
        args.extend_from_slice(&["--state-out", &state, "--labels", &labels]);
        snndyn(&args)
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn clusters_two_runs_of_points() {
    let w = Work::new();
    let out = w.cluster(LINE, &PARAMS);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("clusters=2 outliers=0"), "{stdout}");
    let labels = fs::read_to_string(w.path("l0.txt")).unwrap();
    assert_eq!(labels, "0 0\n1 0\n2 0\n3 3\n4 3\n5 3\n");
    assert!(fs::read_to_string(w.path("s0.snap"))
        .unwrap()
        .starts_with("BISDSNAP 1\n"));
}

#[test]
fn missing_input_fails() {
    let w = Work::new();
    let (state, labels) = (w.s("s.snap"), w.s("l.txt"));
    let mut args = vec![
        "cluster",
        "--input",
        "/nonexistent/points.txt",
        "--state-out",
        &state,
        "--labels",
        &labels,
    ];
    args.extend_from_slice(&PARAMS);
    let out = snndyn(&args);
    assert_eq!(code(&out), 2);
    assert!(!w.path("s.snap").exists());
}

#[test]
fn k_too_large_for_dataset() {
    let w = Work::new();
    let out = w.cluster(LINE, &["--k", "6", "--w", "6", "--sim-th", "1", "--core-th", "2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dataset too small for k"), "{}", stderr(&out));
}

#[test]
fn invalid_params_are_usage_errors() {
    let w = Work::new();
    let out = w.cluster(LINE, &["--k", "3", "--w", "2", "--sim-th", "1", "--core-th", "2"]);
    assert_eq!(code(&out), 2);
    let out = snndyn(&["cluster", "--input", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn batch_and_sequential_updates_agree() {
    let w = Work::new();
    assert_eq!(code(&w.cluster(LINE, &PARAMS)), 0);
    let add = w.file("add.txt", "3\n13\n5.5\n");
    let del = w.file("del.txt", "0\n4\n");
    let mut labels = Vec::new();
    for mode in ["batch", "sequential"] {
        let (state, l) = (w.s(&format!("{mode}.snap")), w.s(&format!("{mode}.txt")));
        let s0 = w.s("s0.snap");
        let out = snndyn(&[
            "update",
            "--state",
            &s0,
            "--add",
            &add,
            "--del",
            &del,
            "--state-out",
            &state,
            "--labels",
            &l,
            "--mode",
            mode,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        labels.push(fs::read_to_string(w.path(&format!("{mode}.txt"))).unwrap());
    }
    assert_eq!(labels[0], labels[1]);
    let current = w.file("current.txt", "1\n2\n10\n12\n3\n13\n5.5\n");
    for mode in ["batch", "sequential"] {
        let out = snndyn(&["verify", "--state", &w.s(&format!("{mode}.snap")), "--input", &current]);
        assert_eq!(code(&out), 0, "{mode}: {}", stderr(&out));
    }
}

#[test]
fn update_needs_a_change() {
    let w = Work::new();
    assert_eq!(code(&w.cluster(LINE, &PARAMS)), 0);
    let (s0, s1, l1) = (w.s("s0.snap"), w.s("s1.snap"), w.s("l1.txt"));
    let out = snndyn(&["update", "--state", &s0, "--state-out", &s1, "--labels", &l1]);
    assert_eq!(code(&out), 2);
    assert!(!w.path("s1.snap").exists());
}

#[test]
fn update_rejects_parameter_mismatch() {
    let w = Work::new();
    assert_eq!(code(&w.cluster(LINE, &PARAMS)), 0);
    let del = w.file("del.txt", "0\n");
    let (s0, s1, l1) = (w.s("s0.snap"), w.s("s1.snap"), w.s("l1.txt"));
    let out = snndyn(&[
        "update",
        "--state",
        &s0,
        "--del",
        &del,
        "--state-out",
        &s1,
        "--labels",
        &l1,
        "--k",
        "3",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("parameter mismatch"), "{}", stderr(&out));
    let out = snndyn(&[
        "update",
        "--state",
        &s0,
        "--del",
        &del,
        "--state-out",
        &s1,
        "--labels",
        &l1,
        "--k",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn update_rejects_unknown_ids_without_writing() {
    let w = Work::new();
    assert_eq!(code(&w.cluster(LINE, &PARAMS)), 0);
    let del = w.file("del.txt", "0\n77\n");
    let (s0, s1, l1) = (w.s("s0.snap"), w.s("s1.snap"), w.s("l1.txt"));
    let out = snndyn(&[
        "update",
        "--state",
        &s0,
        "--del",
        &del,
        "--state-out",
        &s1,
        "--labels",
        &l1,
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("77"), "{}", stderr(&out));
    assert!(!w.path("s1.snap").exists());
}

fn blob_rows(n: usize, seed: u64) -> Vec<String> {
    let mut x = seed;
    (0..n)
        .map(|i| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((x >> 40) % 1000) as f64 / 100.0 + (i % 3) as f64 * 30.0;
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((x >> 40) % 1000) as f64 / 100.0;
            format!("{a},{b}")
        })
        .collect()
}

#[test]
fn verify_after_chain_of_updates() {
    let w = Work::new();
    let mut rows = blob_rows(120, 3);
    let params = ["--k", "6", "--w", "10", "--sim-th", "2", "--core-th", "3"];
    assert_eq!(code(&w.cluster(&(rows.join("\n") + "\n"), &params)), 0);

    // Ids are positions in the original file followed by additions in order.
    let mut ids: Vec<u64> = (0..rows.len() as u64).collect();
    let mut next = rows.len() as u64;
    let mut state = w.s("s0.snap");
    for step in 0..3u64 {
        let added = blob_rows(8, 100 + step);
        let deleted: Vec<u64> = ids.iter().copied().skip(step as usize * 5).step_by(9).take(6).collect();
        let add = w.file(&format!("add{step}.txt"), &(added.join("\n") + "\n"));
        let del = w.file(
            &format!("del{step}.txt"),
            &deleted.iter().map(|d| format!("{d}\n")).collect::<String>(),
        );
        let (out_state, out_labels) = (w.s(&format!("s{}.snap", step + 1)), w.s(&format!("l{}.txt", step + 1)));
        let out = snndyn(&[
            "update",
            "--state",
            &state,
            "--add",
            &add,
            "--del",
            &del,
            "--state-out",
            &out_state,
            "--labels",
            &out_labels,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        state = out_state;

        let keep: Vec<bool> = ids.iter().map(|id| !deleted.contains(id)).collect();
        let mut kept = keep.iter();
        rows.retain(|_| *kept.next().unwrap());
        ids.retain(|id| !deleted.contains(id));
        for row in added {
            rows.push(row);
            ids.push(next);
            next += 1;
        }
    }
    let current = w.file("current.txt", &(rows.join("\n") + "\n"));
    let out = snndyn(&["verify", "--state", &state, "--input", &current]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("labels_isomorphic=true edges_equal=true"));

    let out = snndyn(&["verify", "--state", &state, "--input", &w.s("data.txt")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_catches_edited_labels() {
    let w = Work::new();
    assert_eq!(code(&w.cluster(LINE, &PARAMS)), 0);
    let text = fs::read_to_string(w.path("s0.snap")).unwrap();
    assert!(text.contains("\n1 0 1\n"));
    let edited = w.file("edited.snap", &text.replace("\n1 0 1\n", "\n1 3 1\n"));
    let input = w.s("data.txt");
    let out = snndyn(&["verify", "--state", &edited, "--input", &input]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("labels_isomorphic=false"));
    assert!(stderr(&out).contains("1: stored 3, expected 0"), "{}", stderr(&out));

    let out = snndyn(&["verify", "--state", &w.s("s0.snap"), "--input", &input]);
    assert_eq!(code(&out), 0);
}

#[test]
fn corrupt_snapshot_is_rejected() {
    let w = Work::new();
    assert_eq!(code(&w.cluster(LINE, &PARAMS)), 0);
    let text = fs::read_to_string(w.path("s0.snap")).unwrap();
    let bad = w.file("bad.snap", &text.replacen("BISDSNAP 1", "BISDSNAP 9", 1));
    let out = snndyn(&["verify", "--state", &bad, "--input", &w.s("data.txt")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unsupported snapshot"), "{}", stderr(&out));
    let cut = w.file("cut.snap", &text[..text.len() / 2]);
    let out = snndyn(&["verify", "--state", &cut, "--input", &w.s("data.txt")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("corrupt snapshot"), "{}", stderr(&out));
}

#[test]
fn bench_writes_csv_and_rejects_zero_trials() {
    let w = Work::new();
    let data = w.s("blobs.txt");
    let out = snndyn(&[
        "generate",
        "--n",
        "300",
        "--dim",
        "3",
        "--clusters",
        "4",
        "--seed",
        "5",
        "--output",
        &data,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = w.s("bench.csv");
    let params = ["--k", "6", "--w", "12", "--sim-th", "2", "--core-th", "3"];

    let mut args = vec!["bench", "--input", &data, "--csv", &csv, "--trials", "0"];
    args.extend_from_slice(&params);
    assert_eq!(code(&snndyn(&args)), 2);

    let mut args = vec![
        "bench",
        "--input",
        &data,
        "--csv",
        &csv,
        "--trials",
        "2",
        "--fractions",
        "2,5",
    ];
    args.extend_from_slice(&params);
    let out = snndyn(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(w.path("bench.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# workers=2 workload=mixed"), "{}", lines[0]);
    assert_eq!(
        lines[1],
        "dataset,n,fraction,trial,t_snnd,t_bisd,t_seq,speedup_snnd,speedup_seq,mem_ratio,verified"
    );
    assert_eq!(lines.len(), 6);
    assert!(lines[2..]
        .iter()
        .all(|l| l.starts_with("blobs,300,") && l.ends_with(",true")));
}

#[test]
fn generate_is_deterministic() {
    let w = Work::new();
    let (a, b) = (w.s("a.txt"), w.s("b.txt"));
    for out in [&a, &b] {
        assert_eq!(
            code(&snndyn(&[
                "generate", "--n", "50", "--dim", "2", "--seed", "9", "--output", out
            ])),
            0
        );
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
