mod common;

use std::path::Path;
use std::process::{Child, Command, Output};
use std::thread;
use std::time::{Duration, Instant};

fn ftca(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftca"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ftca(dir, args);
    assert!(
        out.status.success(),
        "ftca {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn file_workflow() {
    let dir = common::scratch_dir("cli");
    ok(
        &dir,
        &["--seed", "3", "gen-data", "--preset", "covariate-shift"],
    );
    ok(
        &dir,
        &[
            "train-gen",
            "--input",
            "source.csv",
            "--kind",
            "statistical",
        ],
    );
    std::fs::write(
        dir.join("task.txt"),
        "name = files\n\
         source_data = csv:source.csv\n\
         target_data = csv:target.csv\n\
         missing_labels = CPU, MEM_MB\n\
         generator_kind = statistical\n\
         generator_origin = file:source.ftcamodel\n\
         tca.lambda = 0.001\n\
         tca.components = 5\n\
         regressors = poly degree=2 alpha=1; knn k=10\n\
         seed = 3\n",
    )
    .unwrap();
    let csv = ok(
        &dir,
        &[
            "run-task",
            "--task",
            "task.txt",
            "--format",
            "csv",
            "--json-out",
            "a.json",
            "--histograms",
            "h.csv",
        ],
    );
    assert!(csv.starts_with("task,label,regressor,orig_mae"));
    assert_eq!(csv.lines().count(), 5);
    ok(
        &dir,
        &[
            "run-task", "--task", "task.txt", "--format", "json", "--out", "b.json",
        ],
    );
    let merged = ok(&dir, &["report", "a.json", "b.json", "--format", "csv"]);
    assert_eq!(merged.lines().count(), 9);
    let md = ok(&dir, &["report", "a.json"]);
    assert!(md.contains("Original") && md.contains("FTCA"));

    let diag = ok(&dir, &["diagnose", "--input", "source.csv"]);
    assert!(diag.contains("LINK_Mbps: score"));

    ok(
        &dir,
        &["adapt", "--source", "source.csv", "--target", "target.csv"],
    );
    let mapped = std::fs::read_to_string(dir.join("target_mapped.csv")).unwrap();
    assert!(mapped.starts_with("TC1,TC2,TC3,TC4,TC5\n"));
}

#[test]
fn serve_and_fetch_processes() {
    let dir = common::scratch_dir("cli-net");
    ok(
        &dir,
        &[
            "gen-data",
            "--preset",
            "zero-shift",
            "--n-source",
            "200",
            "--n-target",
            "50",
        ],
    );
    ok(
        &dir,
        &[
            "train-gen",
            "--input",
            "source.csv",
            "--kind",
            "gan",
            "--epochs",
            "2",
        ],
    );
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let _server = Killed(
        Command::new(env!("CARGO_BIN_EXE_ftca"))
            .current_dir(&dir)
            .args([
                "serve",
                "--bind",
                &addr,
                "--model",
                "source.ftcamodel",
                "--log",
                "sessions.jsonl",
            ])
            .spawn()
            .unwrap(),
    );
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let out = ftca(
            &dir,
            &["--seed", "4", "fetch", "--server", &addr, "--samples", "25"],
        );
        if out.status.success() {
            break;
        }
        assert!(
            Instant::now() < deadline,
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        thread::sleep(Duration::from_millis(50));
    }
    assert_eq!(
        std::fs::read(dir.join("fetched.ftcamodel")).unwrap(),
        std::fs::read(dir.join("source.ftcamodel")).unwrap()
    );
    let generated = std::fs::read_to_string(dir.join("generated.csv")).unwrap();
    assert_eq!(generated.lines().count(), 26);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = common::scratch_dir("cli-err");
    let out = ftca(&dir, &["run-task", "--task", "nope.txt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));

    std::fs::write(
        dir.join("bad.txt"),
        "missing_labels = CPU\nregressors = forest\n",
    )
    .unwrap();
    let out = ftca(&dir, &["run-task", "--task", "bad.txt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = ftca(&dir, &["fetch", "--server", "127.0.0.1:1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot connect"));
}
