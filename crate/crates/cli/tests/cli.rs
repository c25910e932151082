use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use ris_anglemap::dataset::{ingest_csv, split, FileHeader};
use ris_anglemap::experiment::AngleKind;

const TINY: &[&str] = &[
    "--transformer.layers",
    "1",
    "--transformer.heads",
    "4",
    "--transformer.d-e",
    "32",
    "--transformer.d-k",
    "8",
    "--transformer.ffn-width",
    "64",
    "--transformer.batch-size",
    "4",
];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-anglemap")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn generate_is_balanced_counted_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(dir.path(), &["generate", "--out", "a.csv", "--summary", "a.json", "--dataset-size", "301"]);
    let (los, nlos) = (s["los_count"].as_i64().unwrap(), s["nlos_count"].as_i64().unwrap());
    assert!((los - nlos).abs() <= 1);
    assert_eq!(s["record_count"].as_u64().unwrap() as usize, data_rows(&dir.path().join("a.csv")));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(saved, s);

    ok(dir.path(), &["generate", "--out", "b.csv", "--dataset-size", "301"]);
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let first = String::from_utf8(a).unwrap().lines().next().unwrap().to_string();
    let h = FileHeader::parse(&first).unwrap();
    assert_eq!(h.config_hash, s["config_hash"].as_str().unwrap());
}

#[test]
fn one_epoch_gives_one_loss_row_and_reload_matches() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--out", "d.csv", "--dataset-size", "60"]);
    let summary = ok(dir.path(), &with(TINY, &["train", "--data", "d.csv", "--out", "m.json", "--transformer.epochs", "1"]));
    let losses = std::fs::read_to_string(dir.path().join("m.losses.csv")).unwrap();
    let lines: Vec<_> = losses.lines().collect();
    assert!(lines[0].starts_with("# schema=ris-anglemap/losses/1"));
    assert_eq!(lines[1], "epoch,train_loss,val_loss");
    assert_eq!(lines.len(), 3);

    let metrics = ok(dir.path(), &with(TINY, &["evaluate", "--model", "m.json", "--data", "d.csv", "--split", "validation"]));
    assert_eq!(metrics["loss"].as_f64(), summary["final_val_loss"].as_f64());
    let logged: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(Some(logged), summary["final_val_loss"].as_f64());
    for m in metrics["report"]["methods"].as_array().unwrap() {
        let acc = m["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(m["sum_rate"]["mixed"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn overfit_then_evaluate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let base = with(TINY, &["--dataset-size", "40", "--jitter", "0", "--transformer.epochs", "100"]);
    ok(dir.path(), &with(&base, &["generate", "--out", "d.csv"]));
    let summary = ok(dir.path(), &with(&base, &["train", "--data", "d.csv", "--out", "m.json"]));
    let losses = std::fs::read_to_string(dir.path().join("m.losses.csv")).unwrap();
    let train_col: Vec<f64> = losses.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(train_col.len(), 100);
    assert!(train_col.last().unwrap() < &train_col[0]);
    assert!(summary["final_train_loss"].as_f64().unwrap() < train_col[0]);

    let metrics = ok(dir.path(), &with(&base, &["evaluate", "--model", "m.json", "--data", "d.csv", "--split", "train"]));
    let am = &metrics["report"]["methods"][0];
    assert_eq!(am["method"], "anglemap");
    assert_eq!(am["accuracy"].as_f64(), Some(1.0));
    assert_eq!(am["probes_per_ue"].as_u64(), Some(0));

    let listing = ok(dir.path(), &with(&base, &["export-anglemap", "--model", "m.json", "--out-dir", "grids"]));
    assert_eq!(listing["files"].as_array().unwrap().len(), 2 * 8 * 2);

    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let (_, records) = ingest_csv(text.as_bytes()).unwrap();
    let train = split(&records, 2).unwrap().train;
    let read = |name: &str| -> Vec<Vec<String>> {
        let t = std::fs::read_to_string(dir.path().join("grids").join(name)).unwrap();
        t.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
    };
    let (az_half, el_half) = (std::f64::consts::TAU / 256.0 / 2.0, std::f64::consts::PI / 64.0 / 2.0);
    let mut checked = 0;
    for zone in ["los_zone", "nlos_zone"] {
        for kind in AngleKind::ALL {
            let pred = read(&format!("{zone}_{}_predicted.csv", kind.name()));
            let truth = read(&format!("{zone}_{}_truth.csv", kind.name()));
            assert_eq!(pred.len(), truth.len());
            assert!(pred.iter().zip(&truth).all(|(a, b)| a.len() == b.len()));
            let xs: Vec<f64> = pred[0][1..].iter().map(|v| v.parse().unwrap()).collect();
            for (r, row) in pred.iter().enumerate().skip(1) {
                let y: f64 = row[0].parse().unwrap();
                for (c, cell) in row[1..].iter().enumerate() {
                    let at_training = train.iter().any(|t| (t.ue_xy[0] - xs[c]).abs() < 1e-9 && (t.ue_xy[1] - y).abs() < 1e-9);
                    let t = &truth[r][c + 1];
                    if !at_training || t.is_empty() {
                        continue;
                    }
                    let (p, t): (f64, f64) = (cell.parse().unwrap(), t.parse().unwrap());
                    let bound = if kind.is_azimuth() { az_half } else { el_half };
                    assert!((p - t).abs() <= bound + 1e-12, "{zone} {} at ({}, {y}): {p} vs {t}", kind.name(), xs[c]);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, train.len() * 4);
}

#[test]
fn compare_rows_and_search_constancy() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(
        TINY,
        &["compare", "--out", "c.csv", "--sizes", "[60,120]", "--eval-size", "40", "--transformer.epochs", "2"],
    );
    ok(dir.path(), &args);
    let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 6);
    for method in ["exhaustive", "hierarchical"] {
        let of: Vec<_> = rows.iter().filter(|r| r[0] == method).collect();
        assert_eq!(of.len(), 2);
        assert_eq!(of[0][2..5], of[1][2..5]);
    }
    let sum = |m: &str, size: &str| -> f64 {
        rows.iter().find(|r| r[0] == m && r[1] == size).unwrap()[3].parse().unwrap()
    };
    for size in ["60", "120"] {
        assert!(sum("exhaustive", size) >= sum("anglemap", size) * (1.0 - 1e-9));
        assert!(sum("exhaustive", size) >= sum("hierarchical", size) * (1.0 - 1e-9));
    }
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let e = err(dir.path(), &["evaluate", "--model", "missing.json", "--data", "missing.csv"]);
    assert_eq!(e["error"], "io");

    ok(dir.path(), &["generate", "--out", "d.csv", "--dataset-size", "30"]);
    ok(dir.path(), &with(TINY, &["train", "--data", "d.csv", "--out", "m.json", "--transformer.epochs", "1"]));
    let e = err(dir.path(), &["evaluate", "--model", "m.json", "--data", "d.csv", "--vocab.azimuth-bins", "128"]);
    assert_eq!(e["error"], "compatibility");
    let e = err(dir.path(), &["export-anglemap", "--model", "m.json", "--out-dir", "g", "--region", "0,10,0,10"]);
    assert_eq!(e["error"], "domain");
    let e = err(dir.path(), &["generate", "--out", "x.csv", "--no-such-key", "1"]);
    assert_eq!(e["error"], "usage");
    let e = err(dir.path(), &["generate", "--out", "x.csv", "--dataset-size", "lots"]);
    assert_eq!(e["error"], "invalid_input");
    let e = err(dir.path(), &["generate", "--out", "no/such/dir/x.csv"]);
    assert_eq!(e["error"], "io");
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--out", "d.csv", "--dataset-size", "80"]);
    let train = |out: &str, workers: &str| {
        let mut args = with(TINY, &["train", "--data", "d.csv", "--transformer.epochs", "2", "--out"]);
        args.push(out);
        let o = Command::new(env!("CARGO_BIN_EXE_ris-anglemap"))
            .current_dir(dir.path())
            .env("ANGLEMAP_WORKERS", workers)
            .args(&args)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    train("one.json", "1");
    train("three.json", "3");
    let a = std::fs::read(dir.path().join("one.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("three.json")).unwrap());

    let o = Command::new(env!("CARGO_BIN_EXE_ris-anglemap"))
        .current_dir(dir.path())
        .env("ANGLEMAP_WORKERS", "zero")
        .args(["generate", "--out", "x.csv"])
        .output()
        .unwrap();
    assert!(!o.status.success());
}
