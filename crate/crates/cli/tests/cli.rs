use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_eavesdrop"));
    c.env("EAVESDROP_WORKERS", "2");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn eavesdrop")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str], dir: &Path) -> i32 {
    run(args, dir).status.code().expect("exit code")
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut rows = vec![header];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].clone()).collect()
}

fn sha(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn generate_counts_and_determinism() {
    let d = TempDir::new().unwrap();
    let args = ["generate", "--engine", "quantum", "--L", "8", "--tf", "8", "--p", "0.2", "--n", "100", "--seed", "7"];
    ok(&[&args[..], &["--out", "a.jsonl"]].concat(), d.path());
    ok(&[&args[..], &["--out", "b.jsonl"]].concat(), d.path());
    let recs = lines(&d.path().join("a.jsonl"));
    assert_eq!(recs.len(), 200);
    assert_eq!(recs.iter().filter(|r| r["label"] == 4).count(), 100);
    assert_eq!(recs.iter().filter(|r| r["label"] == 3).count(), 100);
    assert!(recs.iter().all(|r| r.get("gates").is_none()));
    assert_eq!(sha(&d.path().join("a.jsonl")), sha(&d.path().join("b.jsonl")));
}

#[test]
fn generate_rejects_bad_flags() {
    let d = TempDir::new().unwrap();
    let out = run(&["generate", "--L", "8", "--p", "1.5", "--n", "1"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p=1.5"));
    assert_eq!(code(&["generate", "--L", "1", "--p", "0.1"], d.path()), 2);
    assert_eq!(code(&["generate", "--L", "8", "--p", "0.1", "--init", "plus", "--labels", "3"], d.path()), 2);
    assert_eq!(code(&["generate", "--L", "8"], d.path()), 2);
    std::fs::write(d.path().join("plain"), "").unwrap();
    assert_eq!(code(&["generate", "--L", "8", "--p", "0.1", "--out", "plain/y.jsonl"], d.path()), 1);
}

#[test]
fn generated_gates_round_trip_for_biased_decoding() {
    let d = TempDir::new().unwrap();
    ok(
        &["generate", "--engine", "sep", "--L", "6", "--p", "0.3", "--n", "20", "--with-gates", "--out", "g.jsonl"],
        d.path(),
    );
    let recs = lines(&d.path().join("g.jsonl"));
    assert!(recs.iter().all(|r| r["gates"].as_array().unwrap().len() == 6 * 5));
    ok(&["decode", "--records", "g.jsonl", "--mode", "biased", "--out", "b.jsonl"], d.path());
    ok(&["decode", "--records", "g.jsonl", "--mode", "antibiased", "--out", "a.jsonl"], d.path());
    assert_eq!(lines(&d.path().join("b.jsonl"))[0]["mode"], "biased");
}

#[test]
fn decode_backends_agree_and_modes_check_gates() {
    let d = TempDir::new().unwrap();
    ok(
        &["generate", "--engine", "sep", "--L", "8", "--p", "0.2", "--n", "60", "--seed", "3", "--out", "r.jsonl"],
        d.path(),
    );
    ok(&["decode", "--records", "r.jsonl", "--backend", "dense", "--out", "dense.jsonl"], d.path());
    ok(&["decode", "--records", "r.jsonl", "--backend", "mps", "--out", "mps.jsonl"], d.path());
    let (a, b) = (lines(&d.path().join("dense.jsonl")), lines(&d.path().join("mps.jsonl")));
    assert_eq!(a.len(), 120);
    for (x, y) in a.iter().zip(&b) {
        for (px, py) in x["posterior"].as_array().unwrap().iter().zip(y["posterior"].as_array().unwrap()) {
            assert!((px.as_f64().unwrap() - py.as_f64().unwrap()).abs() < 1e-6);
        }
    }
    assert_eq!(code(&["decode", "--records", "r.jsonl", "--mode", "biased"], d.path()), 3);
    assert_eq!(code(&["decode", "--records", "r.jsonl", "--mode", "sideways"], d.path()), 2);
    assert_eq!(code(&["decode", "--records", "missing.jsonl"], d.path()), 1);
    assert_eq!(code(&["decode", "--records", "r.jsonl", "--backend", "mps", "--threshold", "2"], d.path()), 2);
}

#[test]
fn dense_backend_refuses_large_chains() {
    let d = TempDir::new().unwrap();
    ok(
        &["generate", "--engine", "sep", "--L", "26", "--tf", "1", "--p", "0.1", "--n", "1", "--out", "big.jsonl"],
        d.path(),
    );
    assert_eq!(code(&["decode", "--records", "big.jsonl"], d.path()), 3);
    ok(&["decode", "--records", "big.jsonl", "--backend", "mps", "--out", "m.jsonl"], d.path());
}

#[test]
fn decode_rejects_labels_outside_the_task() {
    let d = TempDir::new().unwrap();
    ok(
        &["generate", "--engine", "sep", "--L", "6", "--p", "0.2", "--n", "2", "--labels", "1", "--out", "r.jsonl"],
        d.path(),
    );
    assert_eq!(code(&["decode", "--records", "r.jsonl"], d.path()), 3);
    ok(&["decode", "--records", "r.jsonl", "--labels", "all", "--out", "x.jsonl"], d.path());
    std::fs::write(d.path().join("junk.jsonl"), "{not json}\n").unwrap();
    assert_eq!(code(&["decode", "--records", "junk.jsonl"], d.path()), 3);
}

fn synthetic_line(n_sites: usize, p: f64, correct: bool, uncertain: bool) -> String {
    let (posterior, entropy) = if uncertain {
        ([0.5, 0.5], 1.0)
    } else if correct {
        ([1.0, 0.0], 0.0)
    } else {
        ([0.0, 1.0], 0.0)
    };
    let predicted = if correct || uncertain { n_sites / 2 } else { n_sites / 2 - 1 };
    serde_json::json!({
        "version": 1, "seed": 0, "L": n_sites, "tf": n_sites, "p": p, "init": "dicke", "label": n_sites / 2,
        "task": "dicke-pair", "mode": "unbiased", "backend": "dense",
        "labels": [n_sites / 2, n_sites / 2 - 1], "log_likelihoods": [-1.0, -1.0],
        "posterior": posterior, "predicted": predicted, "p_corr": posterior[0], "entropy_bits": entropy
    })
    .to_string()
}

#[test]
fn analyze_reports_synthetic_accuracy() {
    let d = TempDir::new().unwrap();
    let body: Vec<String> = (0..400).map(|i| synthetic_line(8, 0.2, i % 4 != 0, false)).collect();
    std::fs::write(d.path().join("res.jsonl"), body.join("\n") + "\n").unwrap();
    ok(&["analyze", "--results", "res.jsonl", "--boot", "200", "--out-dir", "out"], d.path());
    let rows = csv_rows(&d.path().join("out/summary.csv"));
    assert_eq!(column(&rows, "accuracy"), vec!["0.75".to_string()]);
    assert_eq!(column(&rows, "n_samples"), vec!["400".to_string()]);
    for f in ["distributions.csv", "crossings.csv", "accuracy.svg", "binder_entropy.svg"] {
        assert!(d.path().join("out").join(f).exists(), "{f}");
    }
    let first = sha(&d.path().join("out/summary.csv"));
    ok(&["analyze", "--results", "res.jsonl", "--boot", "200", "--out-dir", "again"], d.path());
    assert_eq!(first, sha(&d.path().join("again/summary.csv")));
}

#[test]
fn analyze_locates_synthetic_binder_crossing() {
    // entropy samples of 0 and 1 bits, a fraction w of ones: Binder ratio
    // 1/(w(1-w)) - 3, mirrored between the two sizes about p = 0.2
    let d = TempDir::new().unwrap();
    let n = 2000usize;
    let mut body = Vec::new();
    for &p in &[0.1, 0.15, 0.25, 0.3] {
        for (l, sign) in [(8usize, 1.0), (12, -1.0)] {
            let u: f64 = 0.15 + sign * 0.5 * (p - 0.2);
            let w = 0.5 - (0.25 - u).sqrt();
            let ones = (w * n as f64).round() as usize;
            for i in 0..n {
                body.push(synthetic_line(l, p, true, i < ones));
            }
        }
    }
    std::fs::write(d.path().join("res.jsonl"), body.join("\n") + "\n").unwrap();
    let out = ok(&["analyze", "--results", "res.jsonl", "--boot", "100", "--out-dir", "out"], d.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("binder_entropy crossing"));
    let rows = csv_rows(&d.path().join("out/crossings.csv"));
    let obs = column(&rows, "observable");
    let i = obs.iter().position(|o| o == "binder_entropy").unwrap();
    let p_star: f64 = column(&rows, "p_star")[i].parse().unwrap();
    let lo: f64 = column(&rows, "p_lo")[i].parse().unwrap();
    let hi: f64 = column(&rows, "p_hi")[i].parse().unwrap();
    assert!((p_star - 0.2).abs() < 1e-9, "{p_star}");
    assert!(lo <= 0.2 && 0.2 <= hi);
}

#[test]
fn analyze_rejects_empty_results() {
    let d = TempDir::new().unwrap();
    std::fs::write(d.path().join("empty.jsonl"), "").unwrap();
    assert_eq!(code(&["analyze", "--results", "empty.jsonl", "--out-dir", "o"], d.path()), 3);
    assert_eq!(code(&["analyze", "--results", "empty.jsonl", "--group-by", "colour", "--out-dir", "o"], d.path()), 2);
}

#[test]
fn percolate_extremes() {
    let d = TempDir::new().unwrap();
    for p in ["0", "1"] {
        let rec = format!("r{p}.jsonl");
        ok(&["generate", "--engine", "sep", "--L", "8", "--p", p, "--n", "20", "--out", &rec], d.path());
        let out = format!("perc{p}.csv");
        ok(&["percolate", "--records", &rec, "--out", &out, "--boot", "100"], d.path());
        let summary = csv_rows(&d.path().join(format!("perc{p}_summary.csv")));
        let per = csv_rows(&d.path().join(&out));
        assert_eq!(per.len(), 41);
        if p == "1" {
            assert_eq!(column(&summary, "fraction_with_cut"), vec!["1".to_string()]);
            assert!(column(&per, "cut_charge_matches_label").iter().all(|m| m == "true"));
        } else {
            assert_eq!(column(&summary, "fraction_with_cut"), vec!["0".to_string()]);
        }
    }
}

#[test]
fn verify_subcommands() {
    let d = TempDir::new().unwrap();
    ok(&["verify", "haar-average", "--n", "100000"], d.path());
    let out = ok(&["verify", "enumeration", "--L", "4"], d.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("Q = 4"));
    let out = ok(&["verify", "born-equivalence", "--L", "4", "--tf", "2", "--n", "10"], d.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconclusive"));
    ok(&["verify", "born-equivalence", "--L", "4", "--tf", "2", "--n", "100000"], d.path());
    // a hundred samples cannot certify the 0.01 tolerance
    assert_eq!(code(&["verify", "haar-average", "--n", "100"], d.path()), 4);
}

fn plan(dir: &Path, name: &str, sizes: &str, ps: &str) -> PathBuf {
    let text = format!(
        "out_dir = \"{name}\"\nseed = 11\nL = [{sizes}]\np = [{ps}]\nmodes = [\"unbiased\", \"biased\"]\nn = 10\nengine = \"sep\"\nboot = 50\n"
    );
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn sweep_minimal_and_resumable() {
    let d = TempDir::new().unwrap();
    let p = plan(d.path(), "one", "6", "0.2");
    let out = ok(&["sweep", p.to_str().unwrap()], d.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 computed, 0 reused"));
    let cell = d.path().join("one/cells/L6_p0.2_dicke");
    for f in ["records.jsonl", "results_unbiased.jsonl", "results_biased.jsonl", "percolation.csv"] {
        assert!(cell.join(f).exists(), "{f}");
    }
    assert!(d.path().join("one/analysis/summary.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("one/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 1);
    let summary = sha(&d.path().join("one/analysis/summary.csv"));
    let out = ok(&["sweep", p.to_str().unwrap()], d.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 computed, 1 reused"));
    assert_eq!(summary, sha(&d.path().join("one/analysis/summary.csv")));
    // a tampered output is recomputed and restored
    std::fs::write(cell.join("records.jsonl"), "").unwrap();
    let out = ok(&["sweep", p.to_str().unwrap()], d.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 computed, 0 reused"));
    assert_eq!(summary, sha(&d.path().join("one/analysis/summary.csv")));
    // same plan elsewhere gives the same bytes
    ok(&["sweep", p.to_str().unwrap(), "--out-dir", "copy"], d.path());
    assert_eq!(summary, sha(&d.path().join("copy/analysis/summary.csv")));
}

#[test]
fn sweep_grid_cells_and_bad_plans() {
    let d = TempDir::new().unwrap();
    let p = plan(d.path(), "grid", "4, 6, 8", "0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35");
    ok(&["sweep", p.to_str().unwrap()], d.path());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("grid/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 21);
    let bad = d.path().join("bad.toml");
    for text in ["seed = 1\nL = []\np = [0.1]\nn = 1\n", "seed = 1\nL = [4]\np = [1.2]\nn = 1\n", "nonsense"] {
        std::fs::write(&bad, text).unwrap();
        assert_eq!(code(&["sweep", bad.to_str().unwrap(), "--out-dir", "x"], d.path()), 2, "{text}");
    }
}
