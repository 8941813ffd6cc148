use std::path::Path;
use std::process::{Command, Output};

use pasm_core::io;
use serde_json::Value;

fn pasm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pasm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pasm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn evaluate_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let img = p(dir.path(), "a.pasm");
    ok(&["phantom", "--size", "32x32", "--out", &img]);
    let v = json(&["evaluate", &img, &img]);
    assert_eq!(v["psnr"], "inf");
    assert_eq!(v["ssim"], 1.0);
    assert_eq!(v["hybrid"]["total"], 0.0);
}

#[test]
fn measurement_pipeline_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask, us, sw, pgm) = (
        p(dir.path(), "img.pasm"),
        p(dir.path(), "mask.pasm"),
        p(dir.path(), "us.pasm"),
        p(dir.path(), "swap.pasm"),
        p(dir.path(), "mask.pgm"),
    );
    ok(&["phantom", "--kind", "gaussian_blobs", "--size", "32x24", "--seed", "3", "--out", &img]);
    let v = json(&["gen-mask", "--pattern", "cartesian", "--accel", "4", "--size", "32x24", "--seed", "1", "--out", &mask, "--pgm", &pgm]);
    assert_eq!(v["sampled"], 32 * 6);
    ok(&["undersample", "--img", &img, "--mask", &mask, "--out", &us]);
    ok(&["swap-spectrum", "--amp", &img, "--phase", &us, "--out", &sw]);

    let m = io::read_mask(Path::new(&mask)).unwrap();
    assert_eq!(io::encode_mask(&m).unwrap(), std::fs::read(&mask).unwrap());
    m.validate().unwrap();
    for f in [&img, &us, &sw] {
        let t = io::read_tensor(Path::new(f)).unwrap();
        assert_eq!(t.shape(), &[32, 24]);
        assert_eq!(io::encode_tensor(&t).unwrap(), std::fs::read(f).unwrap());
    }
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5\n24 32\n255\n"));
}

#[test]
fn commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.pasm"), p(dir.path(), "b.pasm"));
    for out in [&a, &b] {
        ok(&["gen-mask", "--pattern", "radial", "--accel", "2", "--size", "48x48", "--seed", "7", "--out", out]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn scan_order_file_is_a_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let (out, pgm) = (p(dir.path(), "o.pasm"), p(dir.path(), "o.pgm"));
    ok(&["scan-order", "--kind", "local", "--size", "8x8", "--path", "1", "--window", "4", "--out", &out, "--pgm", &pgm]);
    let o = io::read_order(Path::new(&out)).unwrap();
    assert!(o.is_bijection());
    assert_eq!((o.h, o.w, o.path_id, o.variant), (8, 8, 4, 1));
    assert!(pasm(&["scan-order", "--kind", "local", "--size", "6x6", "--window", "4", "--out", &out]).status.code() == Some(2));
}

#[test]
fn forward_demo_writes_images_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "run.cfg");
    std::fs::write(&cfg, "# small\nchannels = 2\nheight = 16\nwidth = 16\nmask.pattern = radial\nmask.accel = 2\n").unwrap();
    let out_dir = p(dir.path(), "out");
    let weights = p(dir.path(), "w.pasm");
    let v = json(&["forward-demo", "--config", &cfg, "--out-dir", &out_dir, "--save-weights", &weights]);
    for key in ["psnr_zf", "psnr_out", "ssim_zf", "ssim_out"] {
        assert!(v[key].is_number(), "{key}: {v}");
    }
    for name in ["input.pgm", "output.pgm", "error.pgm", "metrics.json"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
    let again = json(&["forward-demo", "--config", &cfg, "--out-dir", &out_dir, "--weights", &weights]);
    assert_eq!(again, v);
}

#[test]
fn toy_train_reduces_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "run.cfg");
    std::fs::write(&cfg, "height = 32\nwidth = 32\nmask.accel = 2\ntrain.steps = 50\n").unwrap();
    let out_dir = p(dir.path(), "toy");
    let v = json(&["toy-train", "--config", &cfg, "--out-dir", &out_dir]);
    assert!(v["loss_end"].as_f64().unwrap() < v["loss_start"].as_f64().unwrap());
    let csv = std::fs::read_to_string(dir.path().join("toy/trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn demos_report_small_deviations() {
    let v = json(&["ssm-demo", "--cases", "10"]);
    assert!(v["parallel_vs_sequential"].as_f64().unwrap() < 1e-10);
    assert!(v["selective_vs_dense_reference"].as_f64().unwrap() < 1e-10);
    let v = json(&["ddcfm-demo", "--channels", "20", "--size", "4"]);
    assert_eq!(v["gated_a"].as_array().unwrap().len(), 2);
    assert!(v["fused_vs_reference"].as_f64().unwrap() < 1e-12);
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(pasm(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(pasm(&["gen-mask", "--pattern", "spiral", "--accel", "2", "--size", "8x8", "--out", "x"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "bad.cfg");
    std::fs::write(&cfg, "channels = 4\nlocal_window = 5\n").unwrap();
    let out = pasm(&["forward-demo", "--config", &cfg, "--out-dir", &p(dir.path(), "o")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg"), "{err}");

    std::fs::write(&cfg, "channels = 4\ncolour = red\n").unwrap();
    let out = pasm(&["toy-train", "--config", &cfg, "--out-dir", &p(dir.path(), "o")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2: unknown key `colour`"));

    assert_eq!(pasm(&["evaluate", "missing.pasm", "missing.pasm"]).status.code(), Some(2));
}

#[test]
fn verify_single_criterion_and_thread_cap() {
    let out = Command::new(env!("CARGO_BIN_EXE_pasm"))
        .args(["verify", "--criterion", "5"])
        .env("PASM_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("[PASS] criterion 5"));
    assert_eq!(pasm(&["verify", "--criterion", "12"]).status.code(), Some(2));
    let bad = Command::new(env!("CARGO_BIN_EXE_pasm"))
        .args(["verify", "--criterion", "5"])
        .env("PASM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn verify_full_suite_passes() {
    let out = pasm(&["verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 9, "{stdout}");
    assert_eq!(out.status.code(), Some(0));
}
