use std::path::Path;
use std::process::{Command, Output};

use speckle_pgd::io::{read_pgm, write_pgm};
use speckle_pgd::measurement::SceneImage;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speckle-pgd")).args(args).output().unwrap()
}

fn scene(dir: &Path) -> String {
    let img = SceneImage::new(16, 16, (0..256).map(|i| 0.2 + 0.6 * ((i % 16) as f64 / 15.0)).collect()).unwrap();
    let p = dir.join("scene.pgm");
    write_pgm(&p, &img).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let img = scene(dir.path());
    let a = dir.path().join("a.spkl");
    let b = dir.path().join("b.spkl");
    for out in [&a, &b] {
        let o = bin(&["simulate", "--image", &img, "--looks", "3", "--seed", "4", "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn reconstruct_writes_outputs_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let img = scene(dir.path());
    let data = dir.path().join("m.spkl");
    let o = bin(&["simulate", "--image", &img, "--looks", "4", "-o", data.to_str().unwrap()]);
    assert!(o.status.success());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"checkpoint_every": 2, "pgd": {"iterations": 3, "decoder": {"channels": [8, 8, 8, 8]}}}"#).unwrap();

    let run1 = dir.path().join("run1");
    let o = bin(&[
        "reconstruct", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--ground-truth", &img, "-o", run1.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("final PSNR"));
    let x = read_pgm(run1.join("final.pgm")).unwrap();
    assert_eq!((x.height(), x.width()), (16, 16));
    assert!(run1.join("iter_0002.pgm").exists());
    let csv = std::fs::read_to_string(run1.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let run2 = dir.path().join("run2");
    let resolved = run1.join("resolved-config.json");
    let o = bin(&["reconstruct", data.to_str().unwrap(), "--config", resolved.to_str().unwrap(), "-o", run2.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv, std::fs::read_to_string(run2.join("trajectory.csv")).unwrap());
    assert_eq!(std::fs::read(run1.join("final.pgm")).unwrap(), std::fs::read(run2.join("final.pgm")).unwrap());
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&[]).status.code(), Some(1));
    assert_eq!(bin(&["simulate", "--bogus"]).status.code(), Some(1));

    let o = bin(&["reconstruct", "/nonexistent/file.spkl", "-o", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "io");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.spkl");
    std::fs::write(&bad, b"SPKL1\0\x01\x00garbage").unwrap();
    let o = bin(&["reconstruct", bad.to_str().unwrap(), "-o", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "corrupt");

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"pgd": {"iterations": 3}, "unknown_key": 1}"#).unwrap();
    let img = scene(dir.path());
    let data = dir.path().join("m.spkl");
    assert!(bin(&["simulate", "--image", &img, "--looks", "1", "-o", data.to_str().unwrap()]).status.success());
    let o = bin(&["reconstruct", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "json");
}

#[test]
fn lemmas_and_gradcheck_report() {
    let o = bin(&["lemmas", "--trials", "10", "--band-trials", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let o = bin(&["gradcheck"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}
