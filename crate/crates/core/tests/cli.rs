use std::path::Path;
use std::process::{Command, Output};

use forkbench::bench::parse_csv;
use forkbench::placement::{write_trace, Access};

fn forkbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forkbench"))
        .args(args)
        .env_remove("FORKBENCH_SCHEDULE")
        .env_remove("FORKBENCH_BARRIER_TIMEOUT_MS")
        .env_remove("FORKBENCH_MP_TIMEOUT_MS")
        .output()
        .expect("spawn forkbench")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

#[test]
fn run_sum_emits_verified_rows() {
    let out = forkbench(&[
        "run",
        "--kernel",
        "sum",
        "--n",
        "100000",
        "--workers",
        "4,1,2",
        "--trials",
        "3",
        "--policy",
        "dynamic",
        "--chunk",
        "128",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text
        .starts_with("kernel,model,policy,chunk,workers,n,trial,wall_time_ns,checksum,verified\n"));
    let table = parse_csv(text.as_bytes()).unwrap();
    assert_eq!(table.rows.len(), 9);
    assert!(table.all_verified());
    let order: Vec<(usize, usize)> = table.rows.iter().map(|r| (r.workers, r.trial)).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
    assert!(table
        .rows
        .iter()
        .all(|r| r.policy == "dynamic" && r.chunk == Some(128)));
    assert!(text.contains("# sum model=work-share policy=dynamic chunk=128"));
    assert!(text.contains("amdahl_fraction="));
}

#[test]
fn odd_simpson_fails_with_kernel_error() {
    let out = forkbench(&[
        "run",
        "--kernel",
        "pi-simpson",
        "--n",
        "999999",
        "--policy",
        "static",
        "--trials",
        "1",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pi-simpson") && err.contains("even"), "{err}");
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = forkbench(&["run", "--kernel", "life", "--n", "16"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--steps"));
    let out = forkbench(&["run", "--kernel", "sum", "--policy", "sometimes"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--policy"));
    let out = forkbench(&["run", "--kernel", "sum", "--workers", "two"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--workers"));
}

#[test]
fn sweep_checksums_are_reproducible() {
    let args = [
        "sweep",
        "--kernel",
        "prefix-sum",
        "--n",
        "5000",
        "--policies",
        "static,dynamic,guided,runtime",
        "--chunks",
        "1,16",
        "--workers",
        "1,3",
        "--trials",
        "2",
        "--seed",
        "9",
    ];
    let a = parse_csv(stdout(&forkbench(&args)).as_bytes()).unwrap();
    let b = parse_csv(stdout(&forkbench(&args)).as_bytes()).unwrap();
    assert_eq!(a.rows.len(), 8 * 2 * 2);
    assert!(a.all_verified());
    let sums =
        |t: &forkbench::bench::ResultTable| t.rows.iter().map(|r| r.checksum).collect::<Vec<_>>();
    assert_eq!(sums(&a), sums(&b));
    // one input, so one checksum regardless of schedule
    assert!(sums(&a).windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn runtime_schedule_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_forkbench"))
        .args([
            "run",
            "--kernel",
            "primes",
            "--n",
            "20000",
            "--policy",
            "runtime",
            "--workers",
            "2",
            "--trials",
            "1",
        ])
        .env("FORKBENCH_SCHEDULE", "guided,4")
        .output()
        .unwrap();
    assert!(out.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_forkbench"))
        .args([
            "run", "--kernel", "primes", "--n", "100", "--policy", "runtime", "--trials", "1",
        ])
        .env("FORKBENCH_SCHEDULE", "eventually")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("eventually"));
}

#[test]
fn life_from_grid_file_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("glider.txt");
    std::fs::write(&grid, "8 8 toroidal\n.#......\n..#.....\n###.....\n........\n........\n........\n........\n........\n").unwrap();
    let csv = dir.path().join("life.csv");
    let mut checksums = Vec::new();
    for decomposition in ["row", "2x2", "col"] {
        let out = forkbench(&[
            "run",
            "--kernel",
            "life",
            "--model",
            "message-pass",
            "--steps",
            "32",
            "--grid",
            path(&grid),
            "--decomposition",
            decomposition,
            "--workers",
            "4",
            "--trials",
            "1",
            "--out",
            path(&csv),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out.stdout.is_empty());
        let table = parse_csv(std::fs::File::open(&csv).unwrap()).unwrap();
        assert!(table.all_verified());
        checksums.push(table.rows[0].checksum);
    }
    assert!(checksums.windows(2).all(|w| w[0] == w[1]));

    let report = forkbench(&["report", path(&csv)]);
    assert!(report.status.success());
    let text = stdout(&report);
    assert!(text.starts_with("# life model=message-pass"), "{text}");
    assert!(text.contains("no summary"), "{text}");
}

#[test]
fn placement_with_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let accesses: Vec<Access> = (0..64)
        .map(|element| Access {
            element,
            node: element / 16,
        })
        .collect();
    write_trace(std::fs::File::create(&trace).unwrap(), &accesses).unwrap();
    for (dist, expected_local) in [("block", 64), ("cyclic", 16), ("first-touch", 64)] {
        let out = forkbench(&[
            "run",
            "--kernel",
            "placement",
            "--n",
            "64",
            "--distribution",
            dist,
            "--trace",
            path(&trace),
            "--workers",
            "4",
            "--trials",
            "1",
        ]);
        assert!(
            out.status.success(),
            "{dist}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let table = parse_csv(out.stdout.as_slice()).unwrap();
        assert!(table.all_verified(), "{dist}");
        let expected = forkbench::bench::checksum(&forkbench::bench::KernelOutput::Locality(
            forkbench::placement::LocalityReport {
                local_accesses: expected_local,
                remote_accesses: 64 - expected_local,
            },
        ));
        assert_eq!(table.rows[0].checksum, expected, "{dist}");
    }
    let out = forkbench(&[
        "run",
        "--kernel",
        "placement",
        "--n",
        "10",
        "--trace",
        path(&trace),
        "--workers",
        "4",
        "--trials",
        "1",
    ]);
    assert!(
        !out.status.success(),
        "trace elements beyond n are rejected"
    );
}

#[test]
fn report_of_missing_file_fails() {
    let out = forkbench(&["report", "/nonexistent/results.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/results.csv"));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}
