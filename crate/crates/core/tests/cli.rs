use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hep2-gss"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, per_class: &str, specimens: &str) -> std::path::PathBuf {
    synth_sized(dir, per_class, specimens, "40")
}

fn synth_sized(dir: &Path, per_class: &str, specimens: &str, size: &str) -> std::path::PathBuf {
    let o = run(&["synth", "--per-class", per_class, "--specimens", specimens, "--size", size, "--seed", "3"], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("manifest.csv")
}

#[test]
fn unknown_key_names_the_nearest_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "gss.bass = 1.4\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "synth"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gss.bass") && err.contains("gss.base"), "{err}");
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["loso", "--manifest", "/nonexistent/data.csv"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn synth_counts_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = synth(a.path(), "50", "5");
    let mb = synth(b.path(), "50", "5");
    let text = std::fs::read_to_string(&ma).unwrap();
    assert_eq!(text.lines().count(), 301);
    let specimens: std::collections::BTreeSet<&str> =
        text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(specimens.len(), 30);
    for i in [0, 137, 299] {
        let name = format!("{i:05}_c{}s{}.pgm", i / 50, (i % 50) % 5);
        let fa = std::fs::read(a.path().join("images").join(&name)).unwrap();
        let fb = std::fs::read(b.path().join("images").join(&name)).unwrap();
        assert_eq!(fa, fb);
    }
    assert_eq!(
        std::fs::read_to_string(ma).unwrap().replace(a.path().to_str().unwrap(), ""),
        std::fs::read_to_string(mb).unwrap().replace(b.path().to_str().unwrap(), "")
    );
}

#[test]
fn lbp_extract_logs_dimension_432() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "2", "1");
    let out = dir.path().join("feat");
    let o = run(&["--framework", "lbp", "extract", "--manifest", manifest.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lbp feature dimension 432"));
    assert!(out.join("features.bin").exists());
}

#[test]
fn rerun_from_run_json_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "6", "2");
    let m = manifest.to_str().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = run(&["--framework", "lbp", "--seed", "9", "--set", "svm.c=2", "loso", "--manifest", m], &first);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = first.join("run.json");
    let o = run(&["--config", cfg.to_str().unwrap(), "loso", "--manifest", m], &second);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run.json", "results.json", "confusion.csv"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
    let results: serde_json::Value = serde_json::from_slice(&std::fs::read(first.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["per_fold"].as_array().unwrap().len(), 12);
}

#[test]
fn sweep_axes_emit_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    // the largest filter (sigma 17.1, radius 52) needs a 64 px frame
    let manifest = synth_sized(dir.path(), "4", "2", "64");
    let m = manifest.to_str().unwrap();
    for (axis, rows) in [("filters=0..8", 9), ("base=1.5,1.2,1.4", 3)] {
        let out = dir.path().join(axis.replace(['=', ',', '.'], "_"));
        let o = run(&["--framework", "lbp", "sweep", "--manifest", m, "--axis", axis], &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), rows + 1, "{csv}");
    }
}

#[test]
fn shipped_configs_parse() {
    use hep2_gss::config::{Framework, RunConfig};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    assert_eq!(RunConfig::open(dir.join("default.toml")).unwrap(), RunConfig::default());
    assert_eq!(RunConfig::open(dir.join("desk.toml")).unwrap(), RunConfig::desk_scale(Framework::Bow));
}
