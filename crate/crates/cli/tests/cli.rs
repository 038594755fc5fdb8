use std::path::Path;
use std::process::{Command, Output};

use dynsplat::raster;
use dynsplat::scene::{read_manifest, save_color_png, save_depth_png};
use dynsplat::train::load_checkpoint;

const CONFIG: &str = "\
warmup_iters = 15
total_iters = 40
deform.hexplane.levels = 1
deform.hexplane.spatial_res = 4
deform.hexplane.time_res = 4
deform.hexplane.channels = 4
deform.decoder_hidden = 8
init.keep_fraction = 0.1
";

fn dynsplat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynsplat")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = dynsplat(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Synthesizes a tiny scene and trains on it.
fn trained(dir: &Path) {
    std::fs::write(dir.join("cfg.toml"), CONFIG).unwrap();
    ok(dir, &["--seed", "2", "synth", "--out", "scene", "--gaussians", "60", "--width", "24", "--height", "20", "--frames", "8"]);
    ok(dir, &["--config", "cfg.toml", "--deterministic", "train", "--scene", "scene", "--out", "run"]);
}

#[test]
fn synth_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    for f in ["log.csv", "eval.csv", "config.toml", "metrics.json", "final.splf", "warmup.splf"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    let log = std::fs::read_to_string(d.join("run/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 41);
    let out = ok(d, &["eval", "--scene", "scene", "--checkpoint", "run/final.splf", "--out", "metrics.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean"));
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("metrics.json")).unwrap()).unwrap();
    let psnr = metrics["mean_psnr"].as_f64().unwrap();
    assert!(psnr > 0.0 && psnr < 100.0);
}

#[test]
fn warmup_checkpoint_renders_canonical_scene() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    ok(d, &["render", "--checkpoint", "run/warmup.splf", "--scene", "scene", "--time", "0.0", "--out", "cli.png"]);

    let trainer = load_checkpoint::<f32>(&d.join("run/warmup.splf"), None).unwrap();
    let (_, manifest) = read_manifest(&d.join("scene")).unwrap();
    let camera = manifest.camera::<f32>(0).unwrap();
    let (canonical, _) = raster::forward(&trainer.cloud, &camera, &trainer.config.raster_config());
    save_color_png(&d.join("ref.png"), &canonical.color).unwrap();
    save_depth_png(&d.join("ref_depth.png"), &canonical.depth, manifest.depth_scale, 0).unwrap();
    let read = |name: &str| std::fs::read(d.join(name)).unwrap();
    assert_eq!(read("cli.png"), read("ref.png"));
    assert_eq!(read("cli_depth.png"), read("ref_depth.png"));

    // Same checkpoint and time, same bytes.
    ok(d, &["render", "--checkpoint", "run/final.splf", "--scene", "scene", "--frame", "3", "--out", "a.png"]);
    ok(d, &["render", "--checkpoint", "run/final.splf", "--scene", "scene", "--frame", "3", "--out", "b.png"]);
    assert_eq!(read("a.png"), read("b.png"));
    assert_eq!(read("a_depth.png"), read("b_depth.png"));
}

#[test]
fn dataset_against_itself_scores_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "gt", "--gaussians", "40", "--width", "16", "--height", "16", "--frames", "3", "--tool", "1,1,5,5"]);
    ok(d, &["eval", "--scene", "gt", "--against", "gt", "--split", "all", "--out", "m.json"]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(m["mean_psnr"].as_f64(), Some(100.0));
    assert_eq!(m["frames"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_invocations_fail_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let unknown = dynsplat(d, &["train", "--scene", "s", "--out", "o", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    let missing = dynsplat(d, &["init", "--scene", "nowhere", "--out", "p.ply"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nowhere"));

    std::fs::write(d.join("bad.toml"), "total_itres = 10\n").unwrap();
    let bad = dynsplat(d, &["--config", "bad.toml", "bench", "--repeats", "1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("total_itres"));

    let both = dynsplat(d, &["render", "--checkpoint", "c", "--scene", "s", "--time", "0", "--frame", "1", "--out", "x.png"]);
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn bench_reports_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--threads", "2", "bench", "--gaussians", "100", "--width", "32", "--height", "32", "--repeats", "2", "--backward"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("frames/s") && text.contains("steps/s") && text.contains("threads           2"));
}
