//! Black-box tests of the `inforeg` binary: subcommands, flags, exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MINIMAL: &str = r#"
[dataset]
source = "generate"
seed = 5
classes = 3
train_samples = 48
test_samples = 24

[[dataset.modality]]
dim = 5
informative_dims = 3
class_separation = 1.8
noise_sigma = 0.6

[[dataset.modality]]
dim = 4
informative_dims = 3
class_separation = 0.8
noise_sigma = 1.0

[model]
hidden = [6, 5]
embed_dim = 4
fusion = "concat"

[train]
method = "inforeg"
epochs = 4
batch_size = 8
eta = 0.05
seed = 0
grad_log = "shadow"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inforeg"))
}

fn sandbox(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("inforeg_cli_{tag}"));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_config(dir: &Path, text: &str) -> (PathBuf, Output) {
    let config = dir.join("exp.toml");
    std::fs::write(&config, text).unwrap();
    let out_dir = dir.join("out");
    let output = bin()
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("binary runs");
    (out_dir, output)
}

#[test]
fn run_reports_sweep_size_and_exits_zero() {
    let dir = sandbox("run_ok");
    let (out_dir, output) = run_config(&dir, MINIMAL);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("sweep: 1 run(s)"), "stdout: {stdout}");
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = sandbox("bad_config");
    let config = dir.join("exp.toml");
    std::fs::write(&config, "[dataset]\nsource = \"nope\"\n").unwrap();
    let output = bin().args(["run"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("config"));

    // Missing file is also a config error.
    let output2 = bin().args(["run", "/nonexistent/exp.toml"]).output().unwrap();
    assert_eq!(output2.status.code(), Some(2));
}

#[test]
fn ingestion_errors_exit_3() {
    let dir = sandbox("bad_csv");
    std::fs::write(dir.join("m0.csv"), "f0,label\n1.0,0\noops,1\n").unwrap();
    std::fs::write(dir.join("m0t.csv"), "f0,label\n1.0,0\n2.0,1\n").unwrap();
    let config = format!(
        r#"
[dataset]
source = "csv"
train_paths = ["{d}/m0.csv"]
test_paths = ["{d}/m0t.csv"]

[model]
hidden = [4, 3]
embed_dim = 2
fusion = "concat"

[train]
method = "joint"
epochs = 1
batch_size = 2
eta = 0.05
seed = 0
"#,
        d = dir.display()
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, config).unwrap();
    let output = bin().args(["run"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("m0.csv") && stderr.contains("3"), "stderr: {stderr}");
}

#[test]
fn numeric_failures_exit_4() {
    let dir = sandbox("numeric");
    let blowup = MINIMAL.replace("eta = 0.05", "eta = 1e12").replace("epochs = 4", "epochs = 12");
    let config = dir.join("exp.toml");
    std::fs::write(&config, blowup).unwrap();
    let output = bin()
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&output.stderr).contains("numeric"));
}

#[test]
fn compare_needs_two_dirs() {
    let dir = sandbox("cmp");
    let (out_dir, output) = run_config(&dir, MINIMAL);
    assert!(output.status.success());
    let run = out_dir.join("runs").join("inforeg_b0.9_k0.04_s0");
    let output = bin()
        .arg("compare")
        .arg(&run)
        .arg("--out")
        .arg(dir.join("cmp.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn plotdata_and_diagnose_flow() {
    let dir = sandbox("plot");
    let (out_dir, output) = run_config(&dir, MINIMAL);
    assert!(output.status.success());
    let run = out_dir.join("runs").join("inforeg_b0.9_k0.04_s0");

    let plot = bin().arg("plotdata").arg(&run).args(["--kind", "traces"]).output().unwrap();
    assert!(plot.status.success());
    let stdout = String::from_utf8_lossy(&plot.stdout);
    assert!(stdout.starts_with("series,x,y"));
    assert_eq!(stdout.lines().count(), 1 + 2 * 4);

    let bogus = bin().arg("plotdata").arg(&run).args(["--kind", "sparkline"]).output().unwrap();
    assert_eq!(bogus.status.code(), Some(1));

    let diag = bin().arg("diagnose").arg(&run).args(["--check", "orthogonality"]).output().unwrap();
    assert!(diag.status.success(), "stderr: {}", String::from_utf8_lossy(&diag.stderr));
    assert!(String::from_utf8_lossy(&diag.stdout).contains("mean_abs_cos"));
    assert!(run.join("diag_orthogonality.json").exists());
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = sandbox("envout");
    let config = dir.join("exp.toml");
    std::fs::write(&config, MINIMAL).unwrap();
    let env_out = dir.join("from_env");
    let output = bin()
        .args(["run"])
        .arg(&config)
        .env("INFOREG_OUT", &env_out)
        .env("INFOREG_WORKERS", "2")
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(env_out.join("manifest.json").exists());
}

#[test]
fn seed_flag_overrides_and_renames_run() {
    let dir = sandbox("seedflag");
    let config = dir.join("exp.toml");
    std::fs::write(&config, MINIMAL).unwrap();
    let out_dir = dir.join("out");
    let output = bin()
        .args(["run"])
        .arg(&config)
        .args(["--seed", "42", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(out_dir.join("runs/inforeg_b0.9_k0.04_s42").exists());
}
