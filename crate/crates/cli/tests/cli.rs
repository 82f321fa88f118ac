use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_liquidate"));
    c.env_remove("LIQUIDATE_CONFIG_DIR");
    c
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn header(key: &str) -> String {
    golden("headers.txt")
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')).map(str::to_string))
        .unwrap_or_else(|| panic!("no golden header for {key}"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn parse_table(text: &str) -> (String, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let head = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (head, rows)
}

fn check_sweep(spec: &str, file: &str) {
    let (want_head, want) = parse_table(&golden(file));
    let (head, got) = parse_table(&stdout_ok(&["sweep", "--sweep", spec]));
    assert_eq!(head, want_head);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g[0], w[0]);
        for (a, b) in g[1..].iter().zip(&w[1..]) {
            assert!((a - b).abs() < 5e-4, "{spec}: q={} got {a}, table {b}", g[0]);
        }
    }
}

#[test]
fn sweep_reproduces_mu_table() {
    check_sweep("mu=-0.01,0,0.01", "sweep_mu.csv");
}

#[test]
fn sweep_reproduces_sigma_table() {
    check_sweep("sigma=0,0.3,0.6", "sweep_sigma.csv");
}

#[test]
fn sweep_in_b_decreases() {
    let (head, rows) = parse_table(&stdout_ok(&["sweep", "--sweep", "b=0,3,20", "--steps", "2000"]));
    assert_eq!(head, "q,b=0,b=3,b=20");
    for r in rows {
        assert!(r[1] > r[2] && r[2] > r[3], "{r:?}");
    }
}

#[test]
fn solve_grid_gives_reference_quote() {
    let text = stdout_ok(&["solve", "--steps", "10000"]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), header("solve"));
    let rows: Vec<Vec<f64>> = lines
        .take(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!((rows[0][0], rows[0][1], rows[0][2]), (0.0, 0.0, 1.0));
    let (k, gamma) = (0.3f64, 0.05f64);
    let quote = (rows[1][2] / rows[0][2]).ln() / k + (1.0 + gamma / k).ln() / gamma;
    assert!((quote - 10.6095).abs() < 5e-4, "{quote}");
}

#[test]
fn quote_and_closed_form_headers() {
    let quotes = stdout_ok(&["quotes", "--steps", "10"]);
    assert_eq!(quotes.lines().next().unwrap(), header("quotes"));
    assert_eq!(quotes.lines().count(), 1 + 11 * 6);

    let asym = stdout_ok(&["closed-form", "--kind", "asymptotic"]);
    assert_eq!(asym.lines().next().unwrap(), header("closed-form-asymptotic"));
    assert_eq!(asym.lines().count(), 7);

    let flat = ["--set", "sigma=0", "--steps", "4"];
    for kind in ["nodrift-novol", "risk-neutral", "binf"] {
        let mut args = vec!["closed-form", "--kind", kind];
        args.extend(flat);
        let out = stdout_ok(&args);
        assert_eq!(out.lines().next().unwrap(), header("closed-form-grid"), "{kind}");
    }
    let mut args = vec!["closed-form", "--kind", "binf-curve"];
    args.extend(flat);
    let curve = stdout_ok(&args);
    assert_eq!(curve.lines().next().unwrap(), header("closed-form-curve"));
    assert_eq!(curve.lines().last().unwrap(), "3.0000000000000000e2,0.0000000000000000e0");
}

#[test]
fn json_output_parses() {
    let v: serde_json::Value =
        serde_json::from_str(&stdout_ok(&["quotes", "--steps", "10", "--format", "json"])).unwrap();
    assert_eq!(v["quotes"].as_array().unwrap().len(), 11);
    let v: serde_json::Value = serde_json::from_str(&stdout_ok(&[
        "sweep",
        "--sweep",
        "A=0.05,0.15",
        "--format",
        "json",
    ]))
    .unwrap();
    assert_eq!(v["param"], "BigA");
    assert_eq!(v["quotes"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        stdout_ok(&["simulate", "--paths", "1", "--seed", "7", "--out", out.to_str().unwrap()]);
    }
    for name in ["curve.csv", "path.csv", "events.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    for name in ["curve.csv", "path.csv", "events.csv"] {
        assert_eq!(first_line(&a.join(name)), header(&format!("simulate/{name}")));
    }
    let other = dir.path().join("c");
    stdout_ok(&["simulate", "--paths", "1", "--seed", "8", "--out", other.to_str().unwrap()]);
    assert_ne!(fs::read(a.join("path.csv")).unwrap(), fs::read(other.join("path.csv")).unwrap());
}

#[test]
fn backtest_on_bundled_tape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo().join("configs/backtest_5min.toml");
    let out = dir.path().join("bt");
    stdout_ok(&["--config", cfg.to_str().unwrap(), "backtest", "--out", out.to_str().unwrap()]);
    for name in ["orders.csv", "fills.csv", "series.csv"] {
        assert_eq!(first_line(&out.join(name)), header(&format!("backtest/{name}")));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["audit_violations"].as_array().unwrap().len(), 0);

    // inventory conservation read back from the files
    let fills = fs::read_to_string(out.join("fills.csv")).unwrap();
    let q_after: Vec<usize> = fills
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let expected: Vec<usize> = (0..q_after.len()).map(|i| 3 - 1 - i).collect();
    assert_eq!(q_after, expected);
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    let last: Vec<&str> = series.lines().last().unwrap().split(',').collect();
    assert_eq!(last[2].parse::<usize>().unwrap(), 3 - q_after.len());

    let again = dir.path().join("bt2");
    stdout_ok(&["--config", cfg.to_str().unwrap(), "backtest", "--out", again.to_str().unwrap()]);
    for name in ["orders.csv", "fills.csv", "series.csv", "summary.json"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap());
    }
}

#[test]
fn calibrate_reports_buckets() {
    let tape = repo().join("data/synthetic_tape.csv");
    let text = stdout_ok(&[
        "calibrate",
        "--tape",
        tape.to_str().unwrap(),
        "--set",
        "backtest.tick_size=0.01",
    ]);
    assert_eq!(text.lines().next().unwrap(), header("calibrate"));
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    // generated with A = 0.1, k = 0.3
    assert!((row[1] - 0.1).abs() < 0.02 && (row[2] - 0.3).abs() < 0.06, "{row:?}");
}

#[test]
fn config_dir_env_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("default.toml"),
        "mu = 0.0\nsigma = 0.3\nA = 0.1\nk = 0.3\ngamma = 0.05\nb = 3.0\nT = 300.0\nq_max = 2\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("tiny.toml"),
        "mu = 0.0\nsigma = 0.3\nA = 0.1\nk = 0.3\ngamma = 0.05\nb = 3.0\nT = 300.0\nq_max = 1\n",
    )
    .unwrap();
    let run_in = |args: &[&str]| {
        let out = bin().env("LIQUIDATE_CONFIG_DIR", dir.path()).args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(run_in(&["closed-form", "--kind", "asymptotic"]).lines().count(), 3);
    assert_eq!(
        run_in(&["--config", "tiny", "closed-form", "--kind", "asymptotic"]).lines().count(),
        2
    );
}

fn exit_code(args: &[&str]) -> i32 {
    let out = run(args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim_end().lines().count(), 1, "one-line diagnostic expected: {stderr}");
    out.status.code().unwrap()
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(exit_code(&["--set", "bogus=1", "quotes"]), 2);
    assert_eq!(exit_code(&["sweep", "--sweep", "T=1,2"]), 2);
    assert_eq!(exit_code(&["--config", "no/such/file.toml", "quotes"]), 2);
    assert_eq!(exit_code(&["--solver", "euler", "quotes"]), 2);
    assert_eq!(exit_code(&["backtest"]), 2);
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    // domain and regime
    assert_eq!(exit_code(&["--set", "sigma=-1", "quotes"]), 3);
    assert_eq!(exit_code(&["closed-form", "--kind", "binf"]), 3);
    assert_eq!(exit_code(&["--set", "mu=1", "closed-form", "--kind", "asymptotic"]), 3);
    // data
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "ts,price,size,bid,ask\n1,10,100,9.99,10.01\n2,oops,100,9.99,10.01\n").unwrap();
    assert_eq!(exit_code(&["calibrate", "--tape", bad.to_str().unwrap()]), 4);
    let missing = dir.path().join("missing.csv");
    assert_eq!(exit_code(&["backtest", "--tape", missing.to_str().unwrap()]), 4);
}
