use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lassomix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lassomix"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = lassomix(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    lassomix(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn write_prices(dir: &Path, name: &str, prices: &[f64]) {
    let mut text = String::from("date,price\n");
    for (t, p) in prices.iter().enumerate() {
        text.push_str(&format!("d{t},{p}\n"));
    }
    fs::write(dir.join(format!("{name}.csv")), text).unwrap();
}

fn random_walk(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift = rng.random_range(-0.001..0.001);
    let scale = rng.random_range(0.005..0.03);
    let mut p = 100.0;
    (0..len)
        .map(|_| {
            p *= (drift + scale * (rng.random::<f64>() - 0.5)).exp();
            p
        })
        .collect()
}

/// Every file in `a` exists in `b` with identical bytes, manifests aside.
fn assert_same_outputs(a: &Path, b: &Path) {
    let mut names: Vec<PathBuf> = fs::read_dir(a).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() > 1);
    for path in names {
        let name = path.file_name().unwrap();
        if name == "manifest.txt" {
            continue;
        }
        let left = fs::read(&path).unwrap();
        let right = fs::read(b.join(name)).unwrap_or_default();
        assert!(left == right, "{name:?} differs between runs");
    }
}

#[test]
fn simulate_default_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--out", s(&out)]);
    let data = rows(&out.join("data.csv"));
    assert_eq!(data.len(), 51);
    assert_eq!(data[0].len(), 21);
    assert_eq!(data[0][0], "y");
    assert_eq!(rows(&out.join("truth_labels.csv")).len(), 51);
    assert_eq!(rows(&out.join("truth_gamma.csv")).len(), 4);
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn single_component_labels_are_all_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--out", s(&out), "--K", "1", "--seed", "4"]);
    let labels = rows(&out.join("truth_labels.csv"));
    assert!(labels[1..].iter().all(|r| r[0] == "1"));
}

#[test]
fn fit_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    ok(&["simulate", "--out", s(&sim)]);
    ok(&[
        "fit", "--data", s(&sim.join("data.csv")), "--out", s(&fit), "--iterations", "10", "--burn-in", "0",
        "--thin", "1", "--particles", "10",
    ]);
    assert_eq!(rows(&fit.join("samples_z.csv")).len(), 11);
    assert_eq!(rows(&fit.join("samples_gamma.csv")).len(), 1 + 10 * 3);
    assert_eq!(rows(&fit.join("samples_tau2.csv")).len(), 1 + 10 * 3);
    let trace = rows(&fit.join("trace.csv"));
    assert_eq!(trace.len(), 11);
    let header = &trace[0];
    for col in ["tau_acceptance", "s_acceptance", "gamma_acceptance"] {
        let j = header.iter().position(|h| h == col).unwrap();
        for r in &trace[1..] {
            if !r[j].is_empty() {
                let v: f64 = r[j].parse().unwrap();
                assert!((0.0..=1.0).contains(&v), "{col} = {v}");
            }
        }
    }
}

/// Writes a chain of `copies` identical samples with the given labels.
fn write_chain(dir: &Path, labels: &[usize], gamma: &[Vec<u8>], copies: usize) {
    fs::create_dir_all(dir).unwrap();
    let n = labels.len();
    let p = gamma[0].len();
    let mut z = String::from("iteration");
    for i in 1..=n {
        z.push_str(&format!(",z{i}"));
    }
    z.push('\n');
    let mut g = String::from("iteration,component");
    for d in 1..=p {
        g.push_str(&format!(",x{d}"));
    }
    g.push('\n');
    for it in 0..copies {
        z.push_str(&it.to_string());
        for l in labels {
            z.push_str(&format!(",{l}"));
        }
        z.push('\n');
        for (c, row) in gamma.iter().enumerate() {
            g.push_str(&format!("{it},{}", c + 1));
            for v in row {
                g.push_str(&format!(",{v}"));
            }
            g.push('\n');
        }
    }
    fs::write(dir.join("samples_z.csv"), z).unwrap();
    fs::write(dir.join("samples_gamma.csv"), g).unwrap();
}

#[test]
fn diagnose_identical_truthful_chain() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("fit");
    let labels = [2, 2, 1, 1, 2, 1];
    let gamma = vec![vec![1, 0, 1], vec![1, 1, 0]];
    write_chain(&chain, &labels, &gamma, 5);
    fs::write(dir.path().join("labels.csv"), "label\n2\n2\n1\n1\n2\n1\n").unwrap();
    fs::write(dir.path().join("gamma.csv"), "component,x1,x2,x3\n1,1,0,1\n2,1,1,0\n").unwrap();
    let out = dir.path().join("diag");
    ok(&[
        "diagnose", "--fit-dir", s(&chain), "--out", s(&out), "--truth-labels",
        s(&dir.path().join("labels.csv")), "--truth-gamma", s(&dir.path().join("gamma.csv")),
    ]);
    let ari = rows(&out.join("ari.csv"));
    assert_eq!(ari.len(), 6);
    assert!(ari[1..].iter().all(|r| r[1] == "1"));
    let acc = rows(&out.join("gamma_accuracy.csv"));
    assert!(acc[1..].iter().all(|r| r[1] == "1" && r[2] == "1"));
    assert!(out.join("hard_assignment_2.csv").exists());
}

#[test]
fn diagnose_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("fit");
    write_chain(&chain, &[1, 2, 2, 1], &[vec![1, 1], vec![1, 0]], 2);
    // Append a different labelling so the co-clustering is not all 0/1.
    let mut z = fs::read_to_string(chain.join("samples_z.csv")).unwrap();
    z.push_str("2,1,1,2,2\n");
    fs::write(chain.join("samples_z.csv"), z).unwrap();
    let mut g = fs::read_to_string(chain.join("samples_gamma.csv")).unwrap();
    g.push_str("2,1,1,0\n2,2,1,1\n");
    fs::write(chain.join("samples_gamma.csv"), g).unwrap();

    let out = dir.path().join("diag");
    ok(&["diagnose", "--fit-dir", s(&chain), "--out", s(&out)]);
    assert!(!out.join("gamma_accuracy.csv").exists());
    for f in ["ari.csv", "selection_frequency.csv", "cocluster.csv", "mergetree.txt", "hard_assignment_2.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let co = rows(&out.join("cocluster.csv"));
    let n = co.len() - 1;
    for i in 0..n {
        assert_eq!(co[i + 1][i + 1], "1");
        for j in 0..n {
            assert_eq!(co[i + 1][j + 1], co[j + 1][i + 1]);
        }
    }
    assert_eq!(co[1][2], fmt(1.0 / 3.0));
    assert_eq!(fs::read_to_string(out.join("mergetree.txt")).unwrap().lines().count(), n - 1);
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

#[test]
fn features_flag_constant_series() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices");
    fs::create_dir_all(&prices).unwrap();
    for m in 0..5 {
        write_prices(&prices, &format!("m{m}"), &random_walk(m, 300));
    }
    write_prices(&prices, "flat", &[50.0; 300]);
    let out = dir.path().join("feat");
    let run = lassomix(&["features", "--prices", s(&prices), "--out", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stderr).contains("flat"));
    let feats = rows(&out.join("features.csv"));
    assert_eq!(feats.len(), 7);
    let flat = feats.iter().find(|r| r[0] == "flat").unwrap();
    assert_eq!(flat[1], "1");
    assert!(feats[1..].iter().filter(|r| r[0] != "flat").all(|r| r[1] == "0"));
    let resp = rows(&out.join("response.csv"));
    assert_eq!(resp.iter().find(|r| r[0] == "flat").unwrap()[2], "0");
    let data = rows(&out.join("data.csv"));
    assert_eq!(data.len(), 6);
    assert_eq!(data[0].len(), 10);

    // The assembled dataset is valid input for `fit`.
    let fit = dir.path().join("fit");
    ok(&[
        "fit", "--data", s(&out.join("data.csv")), "--out", s(&fit), "--K", "2", "--iterations", "4",
        "--burn-in", "1", "--particles", "8",
    ]);
}

#[test]
fn malformed_price_files_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices");
    fs::create_dir_all(&prices).unwrap();
    write_prices(&prices, "good", &random_walk(1, 100));
    fs::write(prices.join("bad1.csv"), "date,price\nd0,abc\n").unwrap();
    fs::write(prices.join("bad2.csv"), "date,close\nd0,1\n").unwrap();
    let out = lassomix(&["features", "--prices", s(&prices), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad1.csv") && err.contains("bad2.csv"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&["fit", "--no-such-flag"]), 1);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["fit", "--out", s(&d.join("a"))]), 1);

    fs::write(d.join("cfg.txt"), "mystery = 3\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&d.join("cfg.txt")), "--out", s(&d.join("b"))]), 1);
    assert_eq!(code(&["simulate", "--out", s(&d.join("c")), "--particles", "5"]), 1);

    fs::write(d.join("bad.csv"), "y,x1\n1.0,1\n2.0,oops\n").unwrap();
    let out = lassomix(&["fit", "--data", s(&d.join("bad.csv")), "--out", s(&d.join("e"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
    assert_eq!(code(&["fit", "--data", s(&d.join("missing.csv")), "--out", s(&d.join("f"))]), 2);
    assert_eq!(code(&["diagnose", "--fit-dir", s(&d.join("nothing")), "--out", s(&d.join("g"))]), 2);

    // Markets whose prices differ only by scale have identical features.
    let prices = d.join("prices");
    fs::create_dir_all(&prices).unwrap();
    let walk = random_walk(3, 200);
    write_prices(&prices, "a", &walk);
    write_prices(&prices, "b", &walk.iter().map(|p| 2.0 * p).collect::<Vec<_>>());
    assert_eq!(code(&["features", "--prices", s(&prices), "--out", s(&d.join("h"))]), 3);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.txt"), "# small run\nn = 12\nseed = 5\nK = 2\n").unwrap();
    ok(&["simulate", "--config", s(&d.join("cfg.txt")), "--seed", "6", "--out", s(&d.join("a"))]);
    let manifest = fs::read_to_string(d.join("a/manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 6"));
    assert!(manifest.contains("n = 12"));
    assert_eq!(rows(&d.join("a/data.csv")).len(), 13);
}

#[test]
fn manifests_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = d.join("sim");
    ok(&["simulate", "--out", s(&sim), "--seed", "11"]);
    ok(&["simulate", "--config", s(&sim.join("manifest.txt")), "--out", s(&d.join("sim2"))]);
    assert_same_outputs(&sim, &d.join("sim2"));

    let fit = d.join("fit");
    ok(&[
        "fit", "--data", s(&sim.join("data.csv")), "--out", s(&fit), "--iterations", "12", "--burn-in", "2",
        "--thin", "2", "--particles", "16", "--seed", "99",
    ]);
    ok(&["fit", "--config", s(&fit.join("manifest.txt")), "--out", s(&d.join("fit2"))]);
    assert_same_outputs(&fit, &d.join("fit2"));

    let diag = d.join("diag");
    ok(&[
        "diagnose", "--fit-dir", s(&fit), "--out", s(&diag), "--truth-labels", s(&sim.join("truth_labels.csv")),
    ]);
    ok(&["diagnose", "--config", s(&diag.join("manifest.txt")), "--out", s(&d.join("diag2"))]);
    assert_same_outputs(&diag, &d.join("diag2"));
}
