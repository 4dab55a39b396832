use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn write_config(dir: &Path, cascade: &Path) -> PathBuf {
    let path = dir.join("snowframe.toml");
    let text = format!(
        r#"cascade = "{}"
slots = [
  {{ x = 20, y = 80, w = 50, h = 50 }},
  {{ x = 100, y = 70, w = 50, h = 50 }},
  {{ x = 180, y = 85, w = 45, h = 45 }},
  {{ x = 250, y = 75, w = 50, h = 50 }},
]

[pipeline]
capture_width = 640
capture_height = 360
output_width = 320
output_height = 200

[control]
enabled = false
"#,
        cascade.display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn default_cascade() -> PathBuf {
    repo().join("data/cascades/haarcascade_frontalface_default.xml")
}

fn snowframe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snowframe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = snowframe(&["--headless"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("--config"), "{}", text(&out));
}

#[test]
fn help_exits_cleanly() {
    let out = snowframe(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out).contains("--source"));
}

#[test]
fn headless_synthetic_run_stops_after_ticks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &default_cascade());
    let out = snowframe(&[
        "--config", cfg.to_str().unwrap(),
        "--headless", "--source", "synthetic", "--sink", "null",
        "--seed", "7", "--ticks", "100", "--clock", "simulated",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("composed 100 frames"), "{stdout}");
    assert!(stdout.contains("final state shutting_down"), "{stdout}");
}

#[test]
fn dir_source_once_writes_paced_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &default_cascade());
    let frames = tmp.path().join("frames");
    let source = format!("dir:{}", repo().join("data/corpus/sequence").display());
    let sink = format!("dir:{}", frames.display());
    let out = snowframe(&[
        "--config", cfg.to_str().unwrap(),
        "--source", &source, "--sink", &sink,
        "--once", "--clock", "simulated",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let inputs = std::fs::read_dir(repo().join("data/corpus/sequence")).unwrap().count();
    let written: Vec<_> = std::fs::read_dir(&frames)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    // 30 fps capture paced to 60 Hz output.
    assert_eq!(written.len(), inputs * 2);
    assert!(written.iter().all(|p| p.extension().is_some_and(|e| e == "png")));
}

#[test]
fn missing_cascade_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no_such_cascade.xml");
    let cfg = write_config(tmp.path(), &missing);
    let out = snowframe(&[
        "--config", cfg.to_str().unwrap(),
        "--headless", "--ticks", "1", "--clock", "simulated",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("no_such_cascade.xml"), "{}", text(&out));
}

#[test]
fn unreadable_cascade_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bogus = tmp.path().join("bogus.xml");
    std::fs::write(&bogus, "<opencv_storage><cascade/></opencv_storage>").unwrap();
    let cfg = write_config(tmp.path(), &default_cascade());
    let out = snowframe(&[
        "--config", cfg.to_str().unwrap(),
        "--cascade", bogus.to_str().unwrap(),
        "--headless", "--ticks", "1", "--clock", "simulated",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("bogus.xml"), "{}", text(&out));
}

#[test]
fn camera_source_is_a_device_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &default_cascade());
    let out = snowframe(&[
        "--config", cfg.to_str().unwrap(),
        "--headless", "--source", "camera", "--ticks", "1", "--clock", "simulated",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
    assert!(text(&out).contains("camera"), "{}", text(&out));
}

#[test]
fn bad_config_value_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[pipeline]\noutput_hz = 0\n").unwrap();
    let out = snowframe(&["--config", cfg.to_str().unwrap(), "--headless", "--ticks", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
}

#[test]
fn window_sink_conflicts_with_headless() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &default_cascade());
    let out = snowframe(&[
        "--config", cfg.to_str().unwrap(),
        "--headless", "--sink", "window", "--ticks", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seeded_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &default_cascade());
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let sink = format!("dir:{}", dir.display());
        let out = snowframe(&[
            "--config", cfg.to_str().unwrap(),
            "--sink", &sink, "--seed", "11", "--ticks", "12", "--clock", "simulated",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out));
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    let a = run("a");
    assert_eq!(a.len(), 12);
    assert_eq!(a, run("b"));
}
