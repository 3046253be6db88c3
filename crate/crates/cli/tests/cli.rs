use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dualtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualtree")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn emst_of_three_collinear_points() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "line.csv", "x\n0\n1\n3\n");
    let out = dualtree(&["run", "--task", "emst", "--reference", s(&data)]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "0,1,1.0000000000000000e0\n1,2,2.0000000000000000e0\n# total_weight=3.0000000000000000e0\n"
    );
}

#[test]
fn knn_self_query_excluding_self() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "c.csv", "0,0\n1,0\n5,0\n");
    for tree in ["kd", "cover"] {
        let out =
            dualtree(&["run", "--task", "knn", "--k", "1", "--tree", tree, "--exclude-self", "--reference", s(&data)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(stdout(&out), "0,1,1.0000000000000000e0\n1,0,1.0000000000000000e0\n2,1,4.0000000000000000e0\n");
    }
}

#[test]
fn verify_passes_for_every_task() {
    let common = ["--generate", "250", "3", "--seed", "7", "--clusters", "5", "--verify"];
    let tasks: [&[&str]; 5] = [
        &["--task", "knn", "--k", "4"],
        &["--task", "kfn", "--k", "2"],
        &["--task", "range", "--range-min", "0.02", "--range-max", "0.2"],
        &["--task", "emst"],
        &["--task", "kde", "--kernel", "epanechnikov", "--bandwidth", "0.2", "--epsilon", "0.01"],
    ];
    for task in tasks {
        for tree in ["kd", "cover"] {
            for traversal in ["dual-dfs", "dual-bfs", "single"] {
                let mut args = vec!["run"];
                args.extend_from_slice(task);
                args.extend_from_slice(&common);
                args.extend_from_slice(&["--tree", tree, "--traversal", traversal]);
                let out = dualtree(&args);
                assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            }
        }
    }
}

#[test]
fn bad_flags_exit_2() {
    for args in [
        &["run", "--task", "knn", "--generate", "10", "2"][..],
        &["run", "--task", "kde", "--generate", "10", "2", "--bandwidth", "1"],
        &["run", "--task", "range", "--generate", "10", "2", "--range-min", "2", "--range-max", "1"],
        &["run", "--task", "emst", "--generate", "10", "2", "--k", "3"],
        &["run", "--task", "knn", "--k", "11", "--generate", "10", "2"],
        &["run", "--task", "knn", "--k", "1", "--generate", "10", "2", "--workers", "2"],
        &["run", "--task", "knn", "--k", "1", "--generate", "10", "2", "--tree", "ball"],
        &["run", "--task", "knn", "--k", "1"],
    ] {
        let out = dualtree(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn parse_errors_exit_1_with_the_line() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "0,0\n1,0\n2\n");
    let out = dualtree(&["run", "--task", "knn", "--k", "1", "--reference", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let missing = dir.path().join("absent.csv");
    let out = dualtree(&["run", "--task", "knn", "--k", "1", "--reference", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = dualtree(&[
            "run",
            "--task",
            "knn",
            "--k",
            "3",
            "--generate",
            "400",
            "2",
            "--seed",
            "3",
            "--output",
            s(path),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn single_worker_parallel_matches_serial() {
    let dir = TempDir::new().unwrap();
    let serial = dir.path().join("serial.csv");
    let parallel = dir.path().join("parallel.csv");
    let base = ["run", "--task", "range", "--range-max", "0.1", "--generate", "300", "2", "--seed", "5"];
    let mut args = base.to_vec();
    args.extend_from_slice(&["--output", s(&serial)]);
    assert!(dualtree(&args).status.success());
    let mut args = base.to_vec();
    args.extend_from_slice(&["--traversal", "dual-dfs-parallel", "--workers", "1", "--output", s(&parallel)]);
    assert!(dualtree(&args).status.success());
    assert_eq!(fs::read(&serial).unwrap(), fs::read(&parallel).unwrap());
}

#[test]
fn depth_and_breadth_first_write_the_same_neighbors() {
    let dir = TempDir::new().unwrap();
    let query = dir.path().join("q.csv");
    assert!(dualtree(&["generate", "200", "3", "--seed", "11", "--output", s(&query)]).status.success());
    let mut files = Vec::new();
    for traversal in ["dual-dfs", "dual-bfs"] {
        let path = dir.path().join(format!("{traversal}.csv"));
        let out = dualtree(&[
            "run",
            "--task",
            "knn",
            "--k",
            "2",
            "--query",
            s(&query),
            "--generate",
            "300",
            "3",
            "--seed",
            "2",
            "--traversal",
            traversal,
            "--output",
            s(&path),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn bench_reports_every_bound() {
    let out = dualtree(&[
        "bench",
        "--task",
        "knn",
        "--k",
        "1",
        "--generate",
        "3000",
        "2",
        "--clusters",
        "10",
        "--seed",
        "4",
        "--repeat",
        "1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let base_cases = |bound: &str| -> u64 { rows.iter().find(|r| r[2] == bound).unwrap()[3].parse().unwrap() };
    assert!(base_cases("combined") <= base_cases("b1"));
    assert!(base_cases("combined") <= base_cases("b2"));
}

#[test]
fn validate_tree_and_generate() {
    let out = dualtree(&["generate", "4", "2", "--seed", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 4);
    assert_eq!(stdout(&out), stdout(&dualtree(&["generate", "4", "2", "--seed", "1"])));
    for tree in ["kd", "cover"] {
        let out = dualtree(&["validate-tree", "--generate", "300", "4", "--tree", tree, "--clusters", "3"]);
        assert!(out.status.success());
        assert!(stdout(&out).starts_with("ok:"));
    }
}

#[test]
fn stats_go_to_stderr() {
    let out = dualtree(&["run", "--task", "knn", "--k", "1", "--generate", "50", "2", "--stats"]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("base_cases="), "{err}");
    assert!(err.contains(" scores=") && err.contains(" prunes="));
    assert_eq!(stdout(&out).lines().count(), 50);
}
