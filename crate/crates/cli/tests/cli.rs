//! End-to-end tests of the `dgvisc` binary: exit codes, file outputs,
//! and determinism of the train command.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dgvisc"))
}

fn tmp(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("dgvisc_cli_tests").join(tag);
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn write_micro_config(dir: &Path) -> PathBuf {
    let path = dir.join("train.toml");
    std::fs::write(
        &path,
        r#"
equation = "advection"
n_x = 8
p = 3
n_ref = 256
dt = 1e-4
n_macro = 16
sub_traj = 4
stride = 2
ics_per_episode = 2
batches_per_epoch = 2
batch_size = 2
episodes = 2
omega_osc = 1e-5
omega_acc = 0.5
omega_visc = 10.0
seed = 5
validation_ics = 1
validation_subs = 2
"#,
    )
    .unwrap();
    path
}

#[test]
fn usage_error_exits_2() {
    let out = bin().arg("eval").arg("--case").arg("composite").output().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_config_exits_2() {
    let dir = tmp("missing_config");
    let out = bin()
        .args(["train", "--config", "/nonexistent/nope.toml", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tmp("invalid_config");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "equation = \"kdv\"\n").unwrap();
    let out = bin().args(["train", "--config"]).arg(&path).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_case_rejected() {
    let dir = tmp("unknown_case");
    let out = bin()
        .args(["eval", "--model", "db", "--case", "vortex", "--cells", "16", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown case"));
}

#[test]
fn sod_without_viscosity_exits_3() {
    let dir = tmp("sod_none");
    let out = bin()
        .args([
            "eval",
            "--model",
            "none",
            "--case",
            "sod",
            "--cells",
            "50",
            "--dt",
            "1e-5",
            "--dt-ref",
            "1e-4",
            "--n-ref",
            "400",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("instability at step"), "missing step index: {msg}");
}

#[test]
fn eval_writes_solution_metrics_and_manifest() {
    let dir = tmp("eval_outputs");
    let out = bin()
        .args([
            "eval",
            "--model",
            "mdh",
            "--case",
            "burgers_sine",
            "--cells",
            "16",
            "--dt",
            "5e-4",
            "--dt-ref",
            "2e-4",
            "--n-ref",
            "256",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("model,cells,c_osc,c_acc,c_visc,l2,linf\n"));
    assert!(metrics.lines().nth(1).unwrap().starts_with("mdh,16,"));

    let solution = std::fs::read_to_string(dir.join("burgers_sine_mdh_16.csv")).unwrap();
    assert_eq!(solution.lines().next().unwrap(), "x,var_1,mu");
    assert_eq!(solution.lines().count(), 1 + 16 * 4);
    // node-ordered x column
    let xs: Vec<f64> = solution
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(xs.windows(2).all(|w| w[0] <= w[1]));

    let manifest = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = "));
    assert!(manifest.contains("content_hash = "));
}

#[test]
fn train_writes_outputs_and_is_deterministic() {
    let dir = tmp("train_det");
    let config = write_micro_config(&dir);
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let out_dir = dir.join(tag);
        std::fs::create_dir_all(&out_dir).unwrap();
        let out = bin()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let history = std::fs::read(out_dir.join("loss_history.csv")).unwrap();
        let ckpt = std::fs::read(out_dir.join("checkpoint.bin")).unwrap();
        assert!(out_dir.join("checkpoint_ep1.bin").exists());
        assert!(out_dir.join("checkpoint_ep2.bin").exists());
        assert!(out_dir.join("manifest.toml").exists());
        (history, ckpt)
    };
    let (h1, c1) = run("a");
    let (h2, c2) = run("b");
    assert_eq!(h1, h2, "loss histories differ between identical runs");
    assert_eq!(c1, c2, "checkpoints differ between identical runs");

    // loss CSV has a header plus one row per epoch (incl. the initial
    // validation row)
    let text = String::from_utf8(h1).unwrap();
    assert!(text.starts_with("episode,train_loss,val_total"));
    assert_eq!(text.lines().count(), 1 + 3);
}

#[test]
fn trained_checkpoint_feeds_eval_and_compare() {
    let dir = tmp("ckpt_flow");
    let config = write_micro_config(&dir);
    let out_dir = dir.join("run");
    std::fs::create_dir_all(&out_dir).unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let ckpt = out_dir.join("checkpoint.bin");

    // p = 3 checkpoint against the default p = 4 eval must fail cleanly
    let bad = bin()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args(["--case", "composite", "--cells", "16", "--out"])
        .arg(dir.join("bad"))
        .output()
        .unwrap();
    assert_ne!(code(&bad), 0);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("p="));

    // matching p runs end to end
    let eval_dir = dir.join("eval");
    let out = bin()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .args([
            "--case",
            "composite",
            "--cells",
            "16",
            "--p",
            "3",
            "--dt",
            "5e-4",
            "--dt-ref",
            "2e-4",
            "--n-ref",
            "256",
            "--out",
        ])
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // compare: 4 models x 2 meshes = 8 table rows + plot files
    let cmp_dir = dir.join("cmp");
    let out = bin()
        .args(["compare", "--checkpoint"])
        .arg(&ckpt)
        .args([
            "--case",
            "composite",
            "--cells",
            "8,16",
            "--p",
            "3",
            "--dt",
            "5e-4",
            "--dt-ref",
            "2e-4",
            "--n-ref",
            "128",
            "--out",
        ])
        .arg(&cmp_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(cmp_dir.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 8);
    for model in ["none", "db", "mdh", "nn"] {
        for cells in ["8", "16"] {
            assert!(
                cmp_dir.join(format!("composite_{model}_{cells}.csv")).exists(),
                "missing plot data for {model}/{cells}"
            );
            assert!(table.contains(&format!("{model},{cells},")));
        }
    }
}

#[test]
fn gradcheck_command_passes() {
    let out = bin().arg("gradcheck").output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("gradient check passed"));
    for m in [1, 2, 4, 8] {
        assert!(text.contains(&format!("m = {m:>3}")), "missing m = {m} row: {text}");
    }
}
