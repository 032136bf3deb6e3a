use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use projspec::basis::{project, BasisRole, Primary};
use projspec::io;
use projspec::spectrum::CurveRole;
use projspec_cli::manifest::RunManifest;
use tempfile::tempdir;

fn projspec<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_projspec"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn synthetic_run_writes_complete_output() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 2\nnoise = 0.01\n[solver]\nmax_iterations = 40\n[synthetic]\n");
    let out = dir.path().join("run");
    ok(projspec(&["run", "--config", s(&cfg), "--output", s(&out)]));

    let report = io::read_report(&out.join("report.csv")).unwrap();
    assert_eq!(report.patches.len(), 18);
    let text = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 18 + 1);
    assert!(text.starts_with("patch,rmse,deltaE00,srgb_r,srgb_g,srgb_b\n"));

    let manifest = RunManifest::read(&out.join("manifest.json")).unwrap();
    let listed: Vec<String> = manifest.outputs.iter().map(|d| d.path.clone()).collect();
    let mut on_disk: Vec<String> = files_under(&out).iter().map(|p| p.to_string_lossy().replace('\\', "/")).collect();
    on_disk.retain(|p| p != "manifest.json");
    assert_eq!(listed, on_disk);
    for d in &manifest.outputs {
        let digest = projspec_cli::output::digest_file(&out.join(&d.path)).unwrap();
        assert_eq!(digest, d.sha256, "{}", d.path);
    }
    assert_eq!(manifest.result.as_ref().unwrap().iterations, 40);

    let trace = io::read_cost_trace(&out.join("estimate/cost_trace.csv")).unwrap();
    assert_eq!(trace.len(), 40);
    let plot = io::read_series(&out.join("plots/cost_trace.csv")).unwrap();
    for w in plot.windows(2) {
        assert!(w[1].y <= w[0].y + 1e-10);
    }
    let basis = io::read_series(&out.join("plots/basis_functions.csv")).unwrap();
    for p in Primary::ALL {
        let mut names: Vec<&str> =
            basis.iter().map(|pt| pt.series.as_str()).filter(|n| n.starts_with(p.name())).collect();
        names.dedup();
        assert_eq!(names.len(), 6, "{}", p.name());
    }
    assert!(io::read_basis(&out.join("bases/red.csv"), BasisRole::Primary(Primary::Red))
        .unwrap()
        .contribution_rates()
        .is_some());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2, "no staging directories left behind");
}

#[test]
fn non_convergence_still_succeeds() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), "[solver]\nmax_iterations = 2\n[synthetic]\nn_patches = 4\n");
    let out = dir.path().join("run");
    let res = ok(projspec(&["run", "--config", s(&cfg), "--output", s(&out)]));
    assert!(String::from_utf8_lossy(&res.stdout).contains("converged=false"));
    let manifest = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert!(!manifest.result.unwrap().converged);
}

#[test]
fn missing_input_exits_2_without_output() {
    let dir = tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
        [files]
        reflectance_database = "nope.csv"
        spd_database_red = "red.csv"
        spd_database_green = "green.csv"
        spd_database_blue = "blue.csv"
        camera = "camera.csv"
        truth_reflectances = "truth.csv"
        true_primaries = "primaries.csv"
        "#,
    );
    let out = dir.path().join("run");
    let res = projspec(&["run", "--config", s(&cfg), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope.csv"));
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

    let res = projspec(&["run", "--config", s(&dir.path().join("absent.toml")), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let res = projspec(&["evaluate", "--estimated", s(dir.path()), "--truth", "x.csv", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), "bands = \"5band\"\n");
    let res = projspec(&["run", "--config", s(&cfg), "--output", s(&dir.path().join("run"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn existing_output_is_not_overwritten() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), "[solver]\nmax_iterations = 2\n[synthetic]\nn_patches = 3\n");
    let out = dir.path().join("run");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "mine").unwrap();
    let res = projspec(&["run", "--config", s(&cfg), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(fs::read_to_string(out.join("keep.txt")).unwrap(), "mine");
    assert_eq!(files_under(&out).len(), 1);
}

#[test]
fn replaying_a_manifest_reproduces_the_run() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 9\nnoise = 0.02\nbands = \"9band\"\n[solver]\nmax_iterations = 30\n[synthetic]\nn_patches = 6\n");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    ok(projspec(&["run", "--config", s(&cfg), "--output", s(&first)]));
    ok(projspec(&["run", "--config", s(&first.join("manifest.json")), "--output", s(&second)]));
    let files = files_under(&first);
    assert_eq!(files, files_under(&second));
    for f in files.iter().filter(|f| f.as_os_str() != "manifest.json") {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{}", f.display());
    }
    let (a, b) = (
        RunManifest::read(&first.join("manifest.json")).unwrap(),
        RunManifest::read(&second.join("manifest.json")).unwrap(),
    );
    assert_eq!(a.parameters, b.parameters);
    assert_eq!(a.outputs, b.outputs);
}

#[test]
fn subcommands_chain_on_files() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    ok(projspec(&["gen-surrogate-spd", "--seed", "4", "--output-dir", s(&d.join("spd"))]));
    ok(projspec(&["gen-surrogate-reflectance", "--seed", "5", "--count", "30", "--output", s(&d.join("refl_db.csv"))]));
    ok(projspec(&["gen-surrogate-reflectance", "--seed", "6", "--count", "8", "--output", s(&d.join("truth.csv"))]));
    ok(projspec(&["gen-camera", "--output", s(&d.join("camera.csv"))]));

    ok(projspec(&[
        "fit-basis", "--input", s(&d.join("refl_db.csv")), "--rank", "6", "--role", "reflectance",
        "--output", s(&d.join("ref_basis.csv")),
    ]));
    let mut spd_bases = Vec::new();
    for p in Primary::ALL {
        let basis = d.join(format!("{}_basis.csv", p.name()));
        ok(projspec(&[
            "fit-basis", "--input", s(&d.join(format!("spd/{}.csv", p.name()))), "--rank", "6", "--role", p.name(),
            "--exclude", "projector-01", "--output", s(&basis),
        ]));
        assert!(d.join(format!("{}_basis_rates.csv", p.name())).exists());
        spd_bases.push(basis);
    }

    // truth: projector-01 projected onto the leave-one-out bases
    let mut beta = Vec::new();
    for (p, basis_path) in Primary::ALL.iter().zip(&spd_bases) {
        let db = io::read_spectral_csv(&d.join(format!("spd/{}.csv", p.name())), CurveRole::Spd).unwrap();
        let basis = io::read_basis(basis_path, BasisRole::Primary(*p)).unwrap();
        beta.extend(project(db.get("projector-01").unwrap(), &basis).unwrap().iter().copied());
    }
    io::write_beta(&d.join("beta.csv"), &nalgebra::DVector::from_vec(beta)).unwrap();
    let gains: Vec<_> = projspec::protocol::BandProtocol::TwentyOne.gains();
    io::write_gains(&d.join("gains.csv"), &gains).unwrap();

    let obs = d.join("obs.csv");
    let f = |n: &str| d.join(n).to_string_lossy().into_owned();
    let spd_args: Vec<String> = spd_bases.iter().map(|p| s(p).to_string()).collect();
    let mut sim: Vec<String> = [
        "simulate", "--camera", &f("camera.csv"), "--beta", &f("beta.csv"), "--gains", &f("gains.csv"),
        "--reflectances", &f("truth.csv"), "--noise", "0.01", "--seed", "3", "--output", s(&obs), "--spd-basis",
    ]
    .map(String::from)
    .to_vec();
    sim.extend(spd_args.iter().cloned());
    ok(projspec(&sim));
    assert!(d.join("obs_manifest.json").exists());

    let est = d.join("est");
    let mut estimate: Vec<String> = [
        "estimate", "--observations", s(&obs), "--ref-basis", &f("ref_basis.csv"), "--camera", &f("camera.csv"),
        "--bands", "21", "--max-iterations", "25", "--output", s(&est), "--spd-basis",
    ]
    .map(String::from)
    .to_vec();
    estimate.extend(spd_args);
    ok(projspec(&estimate));
    for f in ["reflectances.csv", "primaries.csv", "illuminations.csv", "cost_trace.csv", "beta.csv", "manifest.json"] {
        assert!(est.join(f).exists(), "{f}");
    }
    let m = RunManifest::read(&est.join("manifest.json")).unwrap();
    assert_eq!(m.inputs.len(), 6);

    let report = d.join("report.csv");
    ok(projspec(&["evaluate", "--estimated", s(&est), "--truth", s(&d.join("truth.csv")), "--output", s(&report)]));
    let r = io::read_report(&report).unwrap();
    assert_eq!(r.patches.len(), 8);
    assert_eq!(r.patches[0].patch, "patch-001");
}

#[test]
fn files_config_runs_and_records_input_digests() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    ok(projspec(&["gen-surrogate-spd", "--seed", "4", "--output-dir", s(d)]));
    ok(projspec(&["gen-surrogate-reflectance", "--seed", "5", "--count", "30", "--output", s(&d.join("refl_db.csv"))]));
    ok(projspec(&["gen-surrogate-reflectance", "--seed", "6", "--count", "5", "--output", s(&d.join("truth.csv"))]));
    ok(projspec(&["gen-camera", "--width", "40", "--output", s(&d.join("camera.csv"))]));
    let labels = ["red", "green", "blue"].map(String::from);
    let primaries: Vec<_> = labels
        .iter()
        .map(|p| {
            let db = io::read_spectral_csv(&d.join(format!("{p}.csv")), CurveRole::Spd).unwrap();
            db.get("projector-02").unwrap().clone()
        })
        .collect();
    io::write_spectral_csv(&d.join("primaries.csv"), &labels, &primaries).unwrap();
    let cfg = write_config(
        d,
        r#"
        bands = "21band"
        noise = 0.0
        [solver]
        max_iterations = 20
        [files]
        reflectance_database = "refl_db.csv"
        spd_database_red = "red.csv"
        spd_database_green = "green.csv"
        spd_database_blue = "blue.csv"
        exclude = "projector-02"
        camera = "camera.csv"
        truth_reflectances = "truth.csv"
        true_primaries = "primaries.csv"
        "#,
    );
    let out = d.join("run");
    ok(projspec(&["run", "--config", s(&cfg), "--output", s(&out)]));
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.inputs.len(), 7);
    let truth_prim = io::read_spectral_csv(&out.join("truth/primaries.csv"), CurveRole::Spd).unwrap();
    let white: f64 = truth_prim.curves().iter().map(|c| c.value_at(550.0).unwrap()).sum();
    assert!((white - 1.0).abs() < 1e-12);
    assert_eq!(io::read_report(&out.join("report.csv")).unwrap().patches.len(), 5);
}
