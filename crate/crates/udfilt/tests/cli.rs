use std::path::Path;
use std::process::Command;

use udfilt::io::{load_reals, load_symbols, load_tree};

fn udfilt(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_udfilt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "udfilt {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_train_filter_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("x.txt");
    let noisy = dir.path().join("z.txt");
    let tree = dir.path().join("tree.json");
    let est = dir.path().join("est.txt");
    udfilt(&["simulate", "--p", "0.1", "--n", "5000", "--seed", "3", "--clean", p(&clean), "--noisy", p(&noisy)]);
    let x = load_symbols(&clean).unwrap();
    assert_eq!(x.len(), 5000);
    assert_eq!(load_symbols(&noisy).unwrap().alphabet().labels(), &[-2, 0, 2]);

    udfilt(&["train", "--input", p(&noisy), "--output", p(&tree), "--n-th", "4"]);
    assert!(load_tree(&tree).unwrap().node_count() > 1);

    for k in ["-1", "0", "2"] {
        udfilt(&["filter", "--input", p(&noisy), "--tree", p(&tree), "--k", k, "--output", p(&est)]);
        let e = load_reals(&est).unwrap();
        assert_eq!(e.len(), 5000);
        let mse = e.iter().zip(x.labels()).map(|(a, b)| (a - b as f64).powi(2)).sum::<f64>() / 5000.0;
        // Always answering 0 scores exactly 1.
        assert!(mse < 0.9, "k {k}: mse {mse}");
    }
}

#[test]
fn optimal_baseline_writes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noisy) = (dir.path().join("x.txt"), dir.path().join("z.txt"));
    udfilt(&["simulate", "--n", "100", "--clean", p(&clean), "--noisy", p(&noisy)]);
    let out = udfilt(&["baseline", "--method", "optimal", "--input", p(&noisy), "--p", "0.1"]);
    assert_eq!(out.lines().count(), 100);
    assert!(out.lines().all(|l| ["-1", "0", "1"].contains(&l)));
}

#[test]
fn bounds_subcommand_reports_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("sc.json");
    let csv = dir.path().join("out.csv");
    std::fs::write(&sc, r#"[{"name": "a", "markov_p": 0.2, "model_markov_p": 0.3, "n": 4, "loss": {"kind": "squared_labels"}}]"#).unwrap();
    let out = udfilt(&["bounds", "--theorem", "1", "--scenario", p(&sc), "--csv", p(&csv)]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let first = if v.is_array() { v[0].clone() } else { v };
    assert_eq!(first["holds"], true);
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() >= 2);
}

#[test]
fn bench_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.csv");
    udfilt(&[
        "bench", "--n-train", "5000", "--n-test", "500", "--seeds", "0", "--n-th", "8", "--k", "0,1", "--summary", p(&summary),
    ]);
    let s = std::fs::read_to_string(&summary).unwrap();
    for m in ["theory", "universal", "wiener"] {
        assert!(s.contains(m), "{s}");
    }
}

#[test]
fn bad_arguments_fail() {
    let out = Command::new(env!("CARGO_BIN_EXE_udfilt"))
        .args(["filter", "--input", "/nonexistent", "--tree", "/nonexistent"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
