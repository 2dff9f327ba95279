use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use multicode::cli::SolveReport;

fn instance(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("instances").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multicode"))
        .args(args)
        .env_remove("MULTICODE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_reports_the_golden_instance() {
    let five_users = instance("five_user_cdma.toml");
    let o = run(&["solve", path_str(&five_users)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("K1=2 K2=3"), "{text}");

    let o = run(&["solve", path_str(&five_users), "--json", "--strategy", "mincount"]);
    let report: SolveReport = serde_json::from_slice(&o.stdout).unwrap();
    let w: Vec<f64> = report.users.iter().map(|u| u.allocation).collect();
    for (x, e) in w.iter().zip([0.125, 0.125, 0.125, 0.0875, 0.0375]) {
        assert!((x - e).abs() < 1e-12);
    }
    let active: Vec<u32> = report.users.iter().map(|u| u.streams.as_ref().unwrap().active).collect();
    assert_eq!(active, [2, 2, 2, 2, 1]);
    assert!(report.kkt.valid);
}

#[test]
fn json_report_round_trips() {
    for name in ["five_user_cdma.toml", "five_user_fdma.toml", "tdma_unsorted.toml", "async.toml"] {
        let path = instance(name);
        let complex = name.contains("cdma") || name.contains("async");
        let mut args = vec!["solve", path_str(&path), "--json", "--trace"];
        if complex {
            args.push("--complex");
        }
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let report: SolveReport = serde_json::from_slice(&o.stdout).unwrap();
        let again = serde_json::to_string_pretty(&report).unwrap();
        assert_eq!(serde_json::from_str::<SolveReport>(&again).unwrap(), report);
        let file = multicode::cli::InstanceFile::read(&path).unwrap();
        let opts = multicode::cli::SolveOptions { trace: true, complex, ..Default::default() };
        let direct = multicode::cli::solve_instance(&file, &opts).unwrap();
        assert_eq!(direct, report, "{name}");
    }
}

#[test]
fn solve_writes_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let five_users = instance("five_user_cdma.toml");
    let o = run(&["solve", path_str(&five_users), "--trace", "--csv", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    for table in ["allocation.csv", "streams.csv", "trace.csv"] {
        let body = fs::read_to_string(dir.path().join(table)).unwrap();
        assert!(body.lines().count() > 1, "{table}");
    }
}

#[test]
fn malformed_and_invalid_files_exit_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "mode = \"cdma\"\npowers = [1.0,\n").unwrap();
    assert_eq!(run(&["solve", path_str(&bad)]).status.code(), Some(2));

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "mode = \"fdma\"\npowers = [1.0]\ncolour = 3\n").unwrap();
    assert_eq!(run(&["solve", path_str(&unknown)]).status.code(), Some(2));

    let negative = dir.path().join("negative.toml");
    fs::write(
        &negative,
        "mode = \"fdma\"\npowers = [1.0, -2.0]\nbandwidth_limits = [0.5, 0.5]\ntotal_bandwidth = 1.0\nnoise_psd = 1.0\n",
    )
    .unwrap();
    let o = run(&["solve", path_str(&negative)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("powers"));

    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["solve", path_str(&missing)]).status.code(), Some(2));
}

#[test]
fn sequences_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let five_users = instance("five_user_cdma.toml");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(run(&["sequences", path_str(&five_users), "--seed", "1", "-o", path_str(&a)]).status.code(), Some(0));
    assert_eq!(run(&["sequences", path_str(&five_users), "--seed", "1", "-o", path_str(&b)]).status.code(), Some(0));
    let body = fs::read(&a).unwrap();
    assert_eq!(body, fs::read(&b).unwrap());
    let text = String::from_utf8(body).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.split(',').count() == 10));

    let fdma = instance("five_user_fdma.toml");
    assert_eq!(run(&["sequences", path_str(&fdma), "-o", path_str(&a)]).status.code(), Some(2));
}

#[test]
fn curves_are_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["curves", "fading", "--trials", "100", "--seed", "7", "--code-limits", "1,2,4", "-o", path_str(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    let body = fs::read_to_string(&a).unwrap();
    assert_eq!(body, fs::read_to_string(&b).unwrap());
    assert_eq!(body.lines().count(), 101);

    let o = run(&["curves", "loading", "--users", "40,80,160", "--processing-gain", "128"]);
    let text = stdout(&o);
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    for (k, rate) in [40.0f64, 80.0, 160.0].iter().zip(&last[1..]) {
        let mac = 0.5 * (1.0 + k * 10.0).log2();
        assert!((rate - mac).abs() < 1e-12, "K={k}: {rate} vs {mac}");
    }

    assert_eq!(run(&["curves", "loading", "--processing-gain", "0"]).status.code(), Some(2));
}
