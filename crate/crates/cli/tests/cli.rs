use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_wulffgraph"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_wulff_isotropic_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "command = \"verify-wulff\"\n[integrand]\nfamily = \"isotropic\"\n", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(dir.path().join("out/identities.csv").exists());
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn solve_with_affine_data_records_the_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "command = \"solve\"\n[integrand]\nfamily = \"ellipsoidal\"\nq = [[1.2, 0.1, 0.0], [0.1, 1.0, 0.0], [0.0, 0.0, 0.9]]\n\
               [solve]\nh = 0.0625\ncompetitors = 5\n[solve.data]\nkind = \"affine\"\nslope = [0.5, -0.25]\nconstant = 1.0\n";
    let o = run(dir.path(), cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert!(report["results"]["exact_error"].as_f64().unwrap() <= 1e-9);
    // The solution file round-trips through the reader.
    let g = wulffgraph::io::read_graph(&dir.path().join("out/solution.wgrf")).unwrap();
    assert_eq!(g.grid.nx, 33);
}

#[test]
fn contact_on_the_pinched_surface_stays_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "command = \"contact\"\n[contact]\nh = 0.03125\ndeltas = [0.05]\nband = [0.05, 1.0]\n", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn failed_invariants_exit_with_status_one_and_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "command = \"contact\"\n[contact]\nh = 0.03125\nband = [5.0, 6.0]\n", &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("deficit/δ^(1/2)"), "{err}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(report["failures"][0].as_str().unwrap().contains("deficit"));
}

#[test]
fn config_errors_exit_with_status_two_and_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "command = \"barrier-check\"\n\n[barrier]\ndelta = 0.1\nlamda = 0.5\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("run.toml:5:") && err.contains("lamda"), "{err}");

    let o = run(dir.path(), "command = \"barrier-check\"\n[barrier]\ndelta = 0.5\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.toml:3:"), "{}", stderr(&o));

    let o = run(dir.path(), "command = \"dance\"\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.toml:1:"), "{}", stderr(&o));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let cfg = "command = \"verify-wulff\"\nseed = 11\n[verify_wulff]\nb_samples = 200\na_samples = 50\nrandom_ellipsoids = 2\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path(), cfg, &[]).status.code(), Some(0));
    assert_eq!(run(b.path(), cfg, &["--threads", "2"]).status.code(), Some(0));
    let ra = std::fs::read(a.path().join("out/report.json")).unwrap();
    let rb = std::fs::read(b.path().join("out/report.json")).unwrap();
    assert_eq!(ra, rb);

    // A different seed draws different ellipsoids.
    let c = tempfile::tempdir().unwrap();
    assert_eq!(run(c.path(), cfg, &["--seed", "12"]).status.code(), Some(0));
    assert_ne!(ra, std::fs::read(c.path().join("out/report.json")).unwrap());
}
