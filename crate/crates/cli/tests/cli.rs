use std::path::Path;
use std::process::{Command, Output};

fn hmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmimo")).args(args).output().expect("spawn hmimo")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn small(out: &Path) -> Vec<String> {
    [
        "--out",
        out.to_str().unwrap(),
        "--set",
        "geometry.n_x=8",
        "--set",
        "geometry.n_y=8",
        "--trials",
        "4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run_small(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd.to_string()];
    args.extend(small(out));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    hmimo(&refs)
}

#[test]
fn lattice_half_wavelength_4x4_has_13_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = hmimo(&[
        "lattice",
        "--set",
        "geometry.n_x=4",
        "--set",
        "geometry.n_y=4",
        "--set",
        "geometry.spacing_wavelengths=0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("lattice.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 13);
    // Every row is propagating and satisfies l² + m² ≤ 4 (semi-axes L/λ = 2).
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        let (l, m): (i32, i32) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        assert!(l * l + m * m <= 4);
        assert_eq!(f[6], "true");
    }
    assert!(dir.path().join("lattice.csv.json").exists());
}

#[test]
fn single_atom_spectrum_is_one_fh_bin() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(
        "spectrum",
        dir.path(),
        &["--set", "spectrum.channel=\"fourier_series\"", "--set", "spectrum.single_atom=[1, -1]"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("spectrum_fh_fourier.csv"));
    let hot: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
        .filter(|f| f[6].parse::<f64>().unwrap() > 1e-10)
        .collect();
    assert_eq!(hot.len(), 1);
    assert_eq!((hot[0][1].as_str(), hot[0][2].as_str()), ("1", "-1"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let snr = ["--set", "estimation.snr_db=[0.0, 20.0]"];
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        for cmd in ["estimate", "codebook", "spectrum"] {
            let mut extra = snr.to_vec();
            extra.extend(["--threads", threads]);
            let out = run_small(cmd, dir.path(), &extra);
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
    }
    for name in ["estimate.csv", "estimate_summary.csv", "codebook.csv", "codebook_trials.csv", "spectrum_summary.csv"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name}");
    }
}

#[test]
fn seed_changes_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_small("codebook", a.path(), &["--seed", "5"]).status.success());
    assert!(run_small("codebook", b.path(), &["--seed", "6"]).status.success());
    assert_ne!(read(&a.path().join("codebook_trials.csv")), read(&b.path().join("codebook_trials.csv")));
}

#[test]
fn sidecar_reloads_to_identical_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_small("estimate", a.path(), &["--seed", "9", "--set", "estimation.snr_db=[10.0]"]).status.success());
    let sidecar = a.path().join("estimate.csv.json");
    let meta: serde_json::Value = serde_json::from_str(&read(&sidecar)).unwrap();
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["subcommand"], "estimate");
    assert_eq!(meta["config"]["geometry"]["n_x"], 8);
    let out = hmimo(&["estimate", "--config", sidecar.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&a.path().join("estimate.csv")), read(&b.path().join("estimate.csv")));
}

#[test]
fn toml_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[geometry]\nn_x = 4\nn_y = 4\nspacing_wavelengths = 0.5\n\n[lattice]\nevanescent_margin = 1\n",
    )
    .unwrap();
    let out = hmimo(&["lattice", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = read(&dir.path().join("lattice.csv"));
    let propagating = csv.lines().filter(|l| l.ends_with(",true")).count();
    assert_eq!(propagating, 13);
    assert!(csv.lines().count() - 1 > 13);
}

#[test]
fn config_errors_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let o = out_dir.to_str().unwrap();
    for args in [
        vec!["lattice", "--set", "geometry.nx=4", "--out", o],
        vec!["lattice", "--set", "estimation.compression_ratio=2", "--out", o],
        vec!["lattice", "--config", "/nonexistent/cfg.toml", "--out", o],
        vec!["estimate", "--threads", "0", "--out", o],
    ] {
        let out = hmimo(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    }
    assert!(!out_dir.exists());
}

#[test]
fn runtime_errors_exit_3_and_remove_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // Passes config validation, but half a pilot for a single element is
    // rejected once the measurement model is built.
    let out = hmimo(&[
        "estimate",
        "--set",
        "geometry.n_x=1",
        "--set",
        "geometry.n_y=1",
        "--set",
        "estimation.compression_ratio=0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn validate_passes_on_default_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = hmimo(&["validate", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = read(&dir.path().join("validate.csv"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}
