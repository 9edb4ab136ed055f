//! End-to-end CLI checks on a small configuration.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bench_binary() -> PathBuf {
    let mut path = PathBuf::from(env!("CARGO_BIN_EXE_bench"));
    assert!(path.exists(), "bench binary missing at {}", path.display());
    path = path.canonicalize().unwrap();
    path
}

const SMALL_CONFIG: &str = "\
[experiment]
problem = poisson_control
levels = 1

[parameters]
alpha = 1e-2 obj*m^3/W^2, 1 obj*m^3/W^2
beta = 1 obj/K^2/m^3
kappa = 1 W/m/K
";

#[test]
fn run_writes_outputs_and_compares() {
    let dir = std::env::temp_dir().join("saddlekit_cli_test");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("experiment.ini");
    fs::write(&config_path, SMALL_CONFIG).unwrap();

    let out_dir = dir.join("out");
    let output = Command::new(bench_binary())
        .args(["run"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .arg("--format")
        .arg("markdown")
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("| level |"));
    assert!(out_dir.join("table.csv").exists());
    assert!(out_dir.join("table.md").exists());
    assert!(out_dir.join("consistency.txt").exists());
    assert!(out_dir.join("runs.csv").exists());
    assert!(fs::read_dir(out_dir.join("history")).unwrap().count() == 2);

    // self-comparison passes with exit code 0
    let reference = out_dir.join("table.csv");
    let status = Command::new(bench_binary())
        .args(["run"])
        .arg(&config_path)
        .arg("--compare")
        .arg(&reference)
        .args(["--tol", "0"])
        .status()
        .unwrap();
    assert!(status.success());

    // comparing against a doctored reference fails with exit code 1
    let doctored = out_dir.join("doctored.csv");
    let text: String = fs::read_to_string(&reference)
        .unwrap()
        .lines()
        .map(|line| {
            if line.starts_with('#') || line.starts_with("level") {
                format!("{line}\n")
            } else {
                // replace the last cell with an implausible count
                let mut fields: Vec<&str> = line.split(',').collect();
                let n = fields.len();
                fields[n - 1] = "999";
                format!("{}\n", fields.join(","))
            }
        })
        .collect();
    fs::write(&doctored, text).unwrap();
    let status = Command::new(bench_binary())
        .args(["run"])
        .arg(&config_path)
        .arg("--compare")
        .arg(&doctored)
        .args(["--tol", "0.25"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // configuration errors exit with code 2
    let bad = dir.join("bad.ini");
    fs::write(&bad, SMALL_CONFIG.replace("W/m/K", "K/W")).unwrap();
    let status = Command::new(bench_binary()).args(["run"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let _ = fs::remove_dir_all(&dir);
}
