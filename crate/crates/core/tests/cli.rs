//! End-to-end runs of the `biot` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn biot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biot")).args(args).output().unwrap()
}

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("biot-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

/// Recorded from a verified run: BDM1/RT0/P0, n = 2, unit parameters, eta = 10.
const GOLDEN_BETA0: f64 = 5.407_076_109_300_996e-1;

#[test]
fn infsup_single_point_matches_golden() {
    let dir = out_dir("infsup");
    let d = dir.to_str().unwrap();
    let o = biot(&["infsup", "--n", "2", "--triple", "bdm1-rt0-p0", "--lambda", "1", "--rp-inv", "1", "--alpha-p", "0", "--output-dir", d]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.join("infsup.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "triple,norms,n,lambda,rp_inv,alpha_p,beta0");
    let rows = csv_rows(&dir.join("infsup.csv"));
    assert_eq!(rows.len(), 1);
    let beta0: f64 = rows[0][6].parse().unwrap();
    assert!((beta0 - GOLDEN_BETA0).abs() <= 1e-12, "{beta0}");
    assert!(dir.join("config.toml").exists());

    // Byte-identical on rerun, and reproducible from the echoed config.
    let again = out_dir("infsup-again");
    let cfg = dir.join("config.toml");
    let o = biot(&["infsup", "--config", cfg.to_str().unwrap(), "--output-dir", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(text, fs::read_to_string(again.join("infsup.csv")).unwrap());
    fs::remove_dir_all(dir).unwrap();
    fs::remove_dir_all(again).unwrap();
}

#[test]
fn solve_with_zero_sources_is_zero() {
    let dir = out_dir("solve");
    let o = biot(&["solve", "--n", "4", "--source", "zero", "--export-matrices", "--output-dir", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for row in csv_rows(&dir.join("conservation.csv")) {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("solve_report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert!(dir.join("residuals.csv").exists());

    let mtx = fs::read_to_string(dir.join("matrix.mtx")).unwrap();
    let mut lines = mtx.lines();
    assert_eq!(lines.next().unwrap(), "%%MatrixMarket matrix coordinate real general");
    let dims: Vec<usize> = lines.next().unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
    // 80 interior BDM1 dofs, 40 RT0 dofs, 32 cells on the 4 x 4 mesh.
    assert_eq!(&dims[..2], &[152, 152]);
    assert_eq!(lines.count(), dims[2]);
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn convergence_orders_near_one() {
    let dir = out_dir("convergence");
    let o = biot(&["convergence", "--n-list", "2,4,8,16", "--output-dir", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.join("convergence.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[0][5].is_empty());
    for col in 5..8 {
        let order: f64 = rows[3][col].parse().unwrap();
        assert!((order - 1.0).abs() < 0.1, "column {col}: {order}");
    }
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sweep_and_timestep_write_artifacts() {
    let dir = out_dir("sweep");
    let o = biot(&["sweep", "--n", "2", "--lambda", "1,1e4", "--rp-inv", "1e-4,1e4", "--alpha-p", "0", "--condition", "--output-dir", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.join("minres.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() >= 1.0));

    let dir2 = out_dir("timestep");
    let o = biot(&[
        "timestep", "--n", "2", "--mu", "0.5", "--lame", "2", "--alpha", "1", "--conductivity", "1", "--tau", "0.5", "--c-pp", "0.1",
        "--steps", "3", "--solver", "direct", "--output-dir", dir2.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir2.join("timestep.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() < 1e-10));
    assert!(dir2.join("step_0003.json").exists());
    fs::remove_dir_all(dir).unwrap();
    fs::remove_dir_all(dir2).unwrap();
}

#[test]
fn errors_are_machine_readable() {
    let o = biot(&["solve", "--lambda", "1", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let rec: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(rec["error"], "ConfigError");

    let o = biot(&["solve", "--norms", "natural"]);
    assert_eq!(o.status.code(), Some(1));

    let o = biot(&["solve", "--lambda", "0.5"]);
    let rec: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(rec["error"], "RangeViolation");

    let o = biot(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}
