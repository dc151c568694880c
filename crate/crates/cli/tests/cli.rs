use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rrmag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrmag"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn short_video(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--seed", "4", "--out", "v.y8", "--set", "duration_s=30", "--set", "width=48", "--set", "height=48"];
    args.extend_from_slice(extra);
    let out = rrmag(dir, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn estimate_is_deterministic_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    short_video(dir.path(), &[]);
    for out in ["a.csv", "b.csv"] {
        let o = rrmag(dir.path(), &["estimate", "v.y8", "--rois", "0", "--alpha", "15", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(String::from_utf8_lossy(&a).starts_with("window,t_start_s,t_end_s,f0_hz,rr_bpm,stat,periodic,warmup\n"));

    let echo = fs::read_to_string(dir.path().join("a.csv.config")).unwrap();
    for line in ["alpha=15", "rois=0", "profile=adult", "method=phase", "levels=4", "roi_size=41", "window_s=20"] {
        assert!(echo.lines().any(|l| l == line), "missing {line} in\n{echo}");
    }
}

#[test]
fn config_file_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    short_video(dir.path(), &[]);
    fs::write(dir.path().join("run.cfg"), "# newborn run\nprofile=newborn\nalpha=30\nrois=0\n").unwrap();
    let o = rrmag(dir.path(), &["estimate", "v.y8", "--config", "run.cfg", "--alpha", "12", "--out", "r.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = fs::read_to_string(dir.path().join("r.csv.config")).unwrap();
    for line in ["profile=newborn", "alpha=12", "f_lo_hz=0.3", "f_hi_hz=1.1", "levels=3"] {
        assert!(echo.lines().any(|l| l == line), "missing {line} in\n{echo}");
    }
}

#[test]
fn oversized_roi_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    short_video(dir.path(), &[]);
    let o = rrmag(dir.path(), &["roi", "v.y8", "--roi-size", "61"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not fit"));
}

#[test]
fn roi_manifest_finds_the_patch() {
    let dir = tempfile::tempdir().unwrap();
    short_video(dir.path(), &["--set", "region=8,8,25,25"]);
    let o = rrmag(dir.path(), &["roi", "v.y8", "--rois", "1", "--roi-size", "15", "--heatmap", "map.pgm"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(dir.path().join("rois.csv")).unwrap();
    let f: Vec<usize> = manifest.trim().split(',').map(|v| v.parse().unwrap()).collect();
    // Patch center is (20, 20).
    assert_eq!(f[0], 0);
    assert!(f[1].abs_diff(20) <= 2 && f[2].abs_diff(20) <= 2, "{manifest}");
    assert!(fs::read(dir.path().join("map.pgm")).unwrap().starts_with(b"P5\n48 48\n255\n"));
}

#[test]
fn fully_gated_run_exits_with_no_valid_window() {
    let dir = tempfile::tempdir().unwrap();
    short_video(dir.path(), &[]);
    // Any pixel change counts and any motion gates: every ROI is rejected.
    let o = rrmag(dir.path(), &["estimate", "v.y8", "--rois", "2", "--roi-size", "15", "--set", "gate_bin=0.001", "--set", "gate_th=0"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("nan")), "{csv}");
}

#[test]
fn motionless_video_is_never_periodic() {
    let dir = tempfile::tempdir().unwrap();
    short_video(dir.path(), &["--set", "displacement_px=0", "--set", "noise_sigma=0"]);
    let o = rrmag(dir.path(), &["estimate", "v.y8", "--rois", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(6) == Some("0")), "{csv}");
}

fn write_results(path: &Path, f0: &[f64]) {
    let mut text = String::from("window,t_start_s,t_end_s,f0_hz,rr_bpm,stat,periodic,warmup\n");
    for (k, f) in f0.iter().enumerate() {
        let t = 10.0 * k as f64;
        text.push_str(&format!("{k},{t},{},{f},{},1.0,1,0\n", t + 20.0, 60.0 * f));
    }
    fs::write(path, text).unwrap();
}

fn write_reference(path: &Path, f0: &[f64]) {
    let mut text = String::from("window,f0_hz,distractor_flag\n");
    for (k, f) in f0.iter().enumerate() {
        text.push_str(&format!("{k},{f},0\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn perfect_estimates_hit_the_db_floor() {
    let dir = tempfile::tempdir().unwrap();
    let f = [0.25, 0.3, 0.28, 0.31];
    write_results(&dir.path().join("r.csv"), &f);
    write_reference(&dir.path().join("ref.csv"), &f);
    let o = rrmag(dir.path(), &["eval", "r.csv", "ref.csv"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success());
    assert!(text.contains("< -60 dB"), "{text}");
    assert!(text.contains("within ±15%: 100.0%"), "{text}");
}

fn rmse_db(text: &str) -> f64 {
    let line = text.lines().find(|l| l.contains("log10")).unwrap();
    line.split(':').nth(1).unwrap().trim().trim_end_matches(" dB").parse().unwrap()
}

#[test]
fn genie_folds_doubled_windows() {
    let dir = tempfile::tempdir().unwrap();
    let truth = [0.25, 0.3, 0.28, 0.31];
    write_results(&dir.path().join("r.csv"), &[0.5, 0.301, 0.56, 0.309]);
    write_reference(&dir.path().join("ref.csv"), &truth);
    let plain = rrmag(dir.path(), &["eval", "r.csv", "ref.csv"]);
    let genie = rrmag(dir.path(), &["eval", "r.csv", "ref.csv", "--genie", "--plot", "p.csv"]);
    let (a, b) = (rmse_db(&String::from_utf8_lossy(&plain.stdout)), rmse_db(&String::from_utf8_lossy(&genie.stdout)));
    assert!(b < a - 20.0, "{a} -> {b}");
    let plot = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(plot.starts_with("t,f_est,f_ref,lo,hi\n"));
    assert_eq!(plot.lines().count(), 5);
}
