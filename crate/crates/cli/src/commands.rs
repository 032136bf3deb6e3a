use std::path::{Path, PathBuf};

use nalgebra::DVector;

use projspec::basis::{
    fit_basis, generate_surrogate_reflectance_database, generate_surrogate_spd_database_with, BasisRole, BasisSet,
    CurveDatabase, Primary, SurrogateSpdOptions,
};
use projspec::colorimetry::{evaluate_reflectances, rmse, EvaluationReport};
use projspec::forward::{simulate_from_primaries, CameraSensitivity, GainTriple, IlluminationBases, SimulationOptions};
use projspec::io::{self, SeriesPoint};
use projspec::protocol::BandProtocol;
use projspec::scene::{build_scene, SceneOptions};
use projspec::solver::{joint_estimate, EstimationConfig, EstimationResult, ModelBases};
use projspec::spectrum::{CurveRole, SpectralCurve, WavelengthGrid};

use crate::args::{
    EstimateArgs, EvaluateArgs, FitBasisArgs, GenCameraArgs, GenReflectanceArgs, GenSpdArgs, GridArgs, SimulateArgs,
};
use crate::config::{FilesConfig, PipelineConfig, SyntheticConfig};
use crate::error::{CliError, Result};
use crate::manifest::{digest_inputs, now_unix, RunManifest, RunSummary, MANIFEST_FILE};
use crate::output::{require_inputs, Staging};

fn to_json<T: serde::Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn grid(g: &GridArgs) -> Result<WavelengthGrid> {
    Ok(WavelengthGrid::new(g.grid_start, g.grid_step, g.grid_count)?)
}

fn curve_role(role: BasisRole) -> CurveRole {
    match role {
        BasisRole::Reflectance => CurveRole::Reflectance,
        BasisRole::Primary(_) => CurveRole::Spd,
    }
}

fn file_name(path: &Path) -> Result<String> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned())
}

fn patch_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("patch-{i:02}")).collect()
}

fn read_illumination_bases(paths: &[PathBuf]) -> Result<IlluminationBases> {
    let [r, g, b] = paths else {
        return Err(CliError::Config("need red, green and blue basis files".into()));
    };
    let read = |p: &Path, primary: Primary| io::read_basis(p, BasisRole::Primary(primary));
    Ok(IlluminationBases::new(read(r, Primary::Red)?, read(g, Primary::Green)?, read(b, Primary::Blue)?)?)
}

pub fn fit_basis_cmd(args: &FitBasisArgs) -> Result<()> {
    require_inputs([args.input.as_path()])?;
    let role: BasisRole = args.role.parse().map_err(|e: projspec::Error| CliError::Config(e.to_string()))?;
    let mut db = io::read_spectral_csv(&args.input, curve_role(role))?;
    for label in &args.exclude {
        db = db.without(label)?;
    }
    let basis = fit_basis(&db, args.rank, role)?;
    let staging = Staging::for_files(&args.output)?;
    io::write_basis(&staging.path(file_name(&args.output)?)?, &basis)?;
    staging.commit()?;
    log::info!(
        "{} basis of rank {} from {} curves, cumulative contribution {:?}",
        role,
        basis.rank(),
        db.len(),
        basis.cumulative_contribution()
    );
    Ok(())
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let started = now_unix();
    let inputs: Vec<&Path> = [&args.camera, &args.beta, &args.gains, &args.reflectances]
        .into_iter()
        .chain(&args.spd_basis)
        .map(PathBuf::as_path)
        .collect();
    require_inputs(inputs.iter().copied())?;
    let camera = io::read_camera(&args.camera)?;
    let ill = read_illumination_bases(&args.spd_basis)?;
    let beta = io::read_beta(&args.beta)?;
    let gains = io::read_gains(&args.gains)?;
    let surfaces = io::read_spectral_csv(&args.reflectances, CurveRole::Reflectance)?;
    let primaries = Primary::ALL.map(|p| ill.primary_spd(p, &beta));
    let [r, g, b] = primaries;
    let opts = SimulationOptions {
        noise_sigma: args.noise,
        seed: args.seed,
        gain_distortion: None,
    };
    let obs = simulate_from_primaries(&camera, &[r?, g?, b?], &gains, surfaces.curves(), &opts)?;

    let staging = Staging::for_files(&args.output)?;
    io::write_observations(&staging.path(file_name(&args.output)?)?, &obs)?;
    let mut manifest = RunManifest::new("simulate", Some(args.seed), to_json(args)?, started);
    manifest.inputs = digest_inputs(inputs)?;
    manifest.outputs = staging.digests()?;
    manifest.write(&staging.path(format!("{}_manifest.json", stem(&args.output)))?)?;
    staging.commit()
}

/// Estimation outputs shared by `estimate` and `run`.
fn write_estimate(staging: &Staging, dir: &str, result: &EstimationResult) -> Result<()> {
    let at = |name: &str| staging.path(Path::new(dir).join(name));
    io::write_spectral_csv(&at("reflectances.csv")?, &patch_labels(result.reflectances.len()), &result.reflectances)?;
    let primary_labels = Primary::ALL.map(|p| p.name().to_string());
    io::write_spectral_csv(&at("primaries.csv")?, &primary_labels, &result.primaries)?;
    let illum_labels: Vec<String> = (1..=result.illuminations.len()).map(|n| format!("illumination-{n}")).collect();
    io::write_spectral_csv(&at("illuminations.csv")?, &illum_labels, &result.illuminations)?;
    io::write_gains(&at("gains.csv")?, &result.gains)?;
    io::write_alpha(&at("alpha.csv")?, &result.alpha)?;
    io::write_beta(&at("beta.csv")?, &result.beta)?;
    io::write_cost_trace(&at("cost_trace.csv")?, &result.trace)?;
    Ok(())
}

fn basis_series(name: &str, basis: &BasisSet, curves: &mut Vec<SeriesPoint>, rates: &mut Vec<SeriesPoint>) {
    for j in 0..basis.rank() {
        curves.extend(io::curve_series(&format!("{name}-b{}", j + 1), &basis.column(j)));
    }
    if let Some(r) = basis.contribution_rates() {
        let mut cumulative = 0.0;
        for (j, v) in r.iter().enumerate() {
            cumulative += v;
            rates.push(SeriesPoint {
                series: name.to_string(),
                x: (j + 1) as f64,
                y: cumulative,
            });
        }
    }
}

struct Truth<'a> {
    reflectances: &'a [SpectralCurve],
    primaries: &'a [SpectralCurve; 3],
}

/// Long-format plot data: cost trace, basis curves and contribution rates,
/// and estimated spectra alongside the truth when it is known.
fn emit_plot_data(
    staging: &Staging,
    result: &EstimationResult,
    bases: &ModelBases,
    truth: Option<Truth<'_>>,
) -> Result<()> {
    let at = |name: &str| staging.path(Path::new("plots").join(name));
    let cost: Vec<SeriesPoint> = result
        .trace
        .iter()
        .map(|r| SeriesPoint {
            series: "cost".into(),
            x: r.iteration as f64,
            y: r.cost,
        })
        .collect();
    io::write_series(&at("cost_trace.csv")?, &cost)?;

    let (mut curves, mut rates) = (Vec::new(), Vec::new());
    basis_series("reflectance", &bases.reflectance, &mut curves, &mut rates);
    for p in Primary::ALL {
        basis_series(p.name(), bases.illumination.basis(p), &mut curves, &mut rates);
    }
    io::write_series(&at("basis_functions.csv")?, &curves)?;
    io::write_series(&at("basis_contribution.csv")?, &rates)?;

    let mut spd = Vec::new();
    for p in Primary::ALL {
        spd.extend(io::curve_series(&format!("{}-estimated", p.name()), &result.primaries[p.index()]));
        if let Some(t) = &truth {
            spd.extend(io::curve_series(&format!("{}-truth", p.name()), &t.primaries[p.index()]));
        }
    }
    io::write_series(&at("primaries.csv")?, &spd)?;

    let mut refl = Vec::new();
    for (i, (label, r)) in patch_labels(result.reflectances.len()).iter().zip(&result.reflectances).enumerate() {
        refl.extend(io::curve_series(&format!("{label}-estimated"), r));
        if let Some(t) = &truth {
            refl.extend(io::curve_series(&format!("{label}-truth"), &t.reflectances[i]));
        }
    }
    io::write_series(&at("reflectances.csv")?, &refl)?;
    Ok(())
}

fn summary(result: &EstimationResult, report: Option<&EvaluationReport>, truth: Option<&[SpectralCurve; 3]>) -> Result<RunSummary> {
    let primary_rmse = match truth {
        Some(t) => Some([
            rmse(&result.primaries[0], &t[0])?,
            rmse(&result.primaries[1], &t[1])?,
            rmse(&result.primaries[2], &t[2])?,
        ]),
        None => None,
    };
    Ok(RunSummary {
        converged: result.converged,
        iterations: result.iterations_used,
        final_cost: result.final_cost(),
        average_rmse: report.map(|r| r.average.rmse),
        average_delta_e00: report.map(|r| r.average.delta_e00),
        primary_rmse,
    })
}

fn report_non_convergence(result: &EstimationResult) {
    if !result.converged {
        log::warn!(
            "estimation did not converge within {} iterations; final cost {:.6e}",
            result.iterations_used,
            result.final_cost()
        );
    }
}

pub fn estimate_cmd(args: &EstimateArgs) -> Result<RunManifest> {
    let started = now_unix();
    let mut inputs: Vec<&Path> = vec![&args.observations, &args.ref_basis, &args.camera];
    inputs.extend(args.spd_basis.iter().map(PathBuf::as_path));
    inputs.extend(args.gains.as_deref());
    require_inputs(inputs.iter().copied())?;

    let (gains, default_anchor) = match (&args.bands, &args.gains) {
        (Some(b), _) => {
            let protocol: BandProtocol = b.parse().map_err(|e: projspec::Error| CliError::Config(e.to_string()))?;
            (protocol.gains(), protocol.anchor_illumination())
        }
        (None, Some(path)) => {
            let g = io::read_gains(path)?;
            let last = g.len() - 1;
            (g, last)
        }
        (None, None) => return Err(CliError::Config("either --bands or --gains is required".into())),
    };
    let reflectance = io::read_basis(&args.ref_basis, BasisRole::Reflectance)?;
    let bases = ModelBases::new(reflectance, read_illumination_bases(&args.spd_basis)?)?;
    let camera = io::read_camera(&args.camera)?;
    let obs = io::read_observations(&args.observations, *camera.grid(), gains)?;
    let config = EstimationConfig {
        sigma1: args.sigma1,
        sigma2: args.sigma2,
        lambda_f: args.lambda_f,
        anchor_illumination: Some(args.anchor.unwrap_or(default_anchor)),
        max_outer_iterations: args.max_iterations,
        cost_tolerance: args.tolerance,
        parallel: !args.serial,
        line_search: args.line_search,
        ..EstimationConfig::default()
    };
    let staging = Staging::for_directory(&args.output)?;
    let result = joint_estimate(&obs, &bases, &camera, &config)?;
    report_non_convergence(&result);
    write_estimate(&staging, "", &result)?;
    emit_plot_data(&staging, &result, &bases, None)?;

    let mut manifest = RunManifest::new("estimate", None, to_json(args)?, started);
    manifest.inputs = digest_inputs(inputs)?;
    manifest.outputs = staging.digests()?;
    manifest.result = Some(summary(&result, None, None)?);
    manifest.write(&staging.path(MANIFEST_FILE)?)?;
    staging.commit()?;
    Ok(manifest)
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<EvaluationReport> {
    let estimated_path = args.estimated.join("reflectances.csv");
    require_inputs([estimated_path.as_path(), args.truth.as_path()])?;
    let estimated = io::read_spectral_csv(&estimated_path, CurveRole::Signed)?;
    let truth = io::read_spectral_csv(&args.truth, CurveRole::Signed)?;
    let report = evaluate_reflectances(estimated.curves(), truth.curves(), Some(truth.labels()))?;
    let staging = Staging::for_files(&args.output)?;
    io::write_report(&staging.path(file_name(&args.output)?)?, &report)?;
    staging.commit()?;
    Ok(report)
}

/// Bases, camera and ground truth for one pipeline run. True primaries are
/// scaled so that the anchored illumination equals one at the anchor wavelength;
/// the simulated exposure then matches the estimator's scale convention.
struct Setup {
    bases: ModelBases,
    camera: CameraSensitivity,
    reflectances: Vec<SpectralCurve>,
    labels: Vec<String>,
    primaries: [SpectralCurve; 3],
}

fn fit_primary_bases(dbs: [&CurveDatabase; 3], rank: usize) -> Result<IlluminationBases> {
    let fit = |p: Primary| fit_basis(dbs[p.index()], rank, BasisRole::Primary(p));
    Ok(IlluminationBases::new(fit(Primary::Red)?, fit(Primary::Green)?, fit(Primary::Blue)?)?)
}

fn normalize_primaries(primaries: [SpectralCurve; 3], anchor: GainTriple, lambda_f: f64) -> Result<[SpectralCurve; 3]> {
    let value: f64 = Primary::ALL
        .iter()
        .map(|&p| {
            primaries[p.index()]
                .value_at(lambda_f)
                .map(|v| v * anchor.get(p))
                .ok_or_else(|| CliError::Config(format!("anchor wavelength {lambda_f} nm is not on the grid")))
        })
        .sum::<Result<f64>>()?;
    if !(value > 0.0) {
        return Err(projspec::Error::InfeasibleAnchor { wavelength: lambda_f }.into());
    }
    let [r, g, b] = primaries;
    let scale = |c: SpectralCurve| SpectralCurve::from_vector(*c.grid(), c.values() / value, c.role());
    Ok([scale(r)?, scale(g)?, scale(b)?])
}

fn synthetic_setup(s: &SyntheticConfig, config: &PipelineConfig, anchor: GainTriple) -> Result<Setup> {
    let opts = SceneOptions {
        grid: WavelengthGrid::new(s.grid_start_nm, s.grid_step_nm, s.grid_count)?,
        seed: config.seed,
        n_patches: s.n_patches,
        n_r: config.basis.reflectance_rank,
        n_s: config.basis.spd_rank,
        n_reference_reflectances: s.n_reference_reflectances,
        n_projectors: s.n_projectors,
        projector: s.projector,
        camera_width_nm: s.camera_width_nm,
    };
    let scene = build_scene(&opts)?;
    let beta: DVector<f64> = scene.normalized_beta(anchor, config.solver.lambda_f)?;
    let ill = &scene.bases.illumination;
    let primaries = [
        ill.primary_spd(Primary::Red, &beta)?,
        ill.primary_spd(Primary::Green, &beta)?,
        ill.primary_spd(Primary::Blue, &beta)?,
    ];
    Ok(Setup {
        labels: patch_labels(scene.n_patches()),
        reflectances: scene.reflectances,
        camera: scene.camera,
        bases: scene.bases,
        primaries,
    })
}

fn files_setup(f: &FilesConfig, config: &PipelineConfig, anchor: GainTriple) -> Result<Setup> {
    let refl_db = io::read_spectral_csv(&f.reflectance_database, CurveRole::Reflectance)?;
    let b_ref = fit_basis(&refl_db, config.basis.reflectance_rank, BasisRole::Reflectance)?;
    let read_spd = |p: &Path| -> Result<CurveDatabase> {
        let db = io::read_spectral_csv(p, CurveRole::Spd)?;
        Ok(match &f.exclude {
            Some(label) => db.without(label)?,
            None => db,
        })
    };
    let (r, g, b) = (read_spd(&f.spd_database_red)?, read_spd(&f.spd_database_green)?, read_spd(&f.spd_database_blue)?);
    let ill = fit_primary_bases([&r, &g, &b], config.basis.spd_rank)?;
    let truth = io::read_spectral_csv(&f.truth_reflectances, CurveRole::Reflectance)?;
    let prim = io::read_spectral_csv(&f.true_primaries, CurveRole::Spd)?;
    let [pr, pg, pb] = prim.curves() else {
        return Err(CliError::Config(format!(
            "{}: expected red, green and blue columns",
            f.true_primaries.display()
        )));
    };
    let primaries = normalize_primaries([pr.clone(), pg.clone(), pb.clone()], anchor, config.solver.lambda_f)?;
    Ok(Setup {
        bases: ModelBases::new(b_ref, ill)?,
        camera: io::read_camera(&f.camera)?,
        reflectances: truth.curves().to_vec(),
        labels: truth.labels().to_vec(),
        primaries,
    })
}

/// Full pipeline into a fresh directory. Nothing appears at `output` unless
/// every stage succeeds.
pub fn run_pipeline(config: &PipelineConfig, output: &Path) -> Result<RunManifest> {
    let started = now_unix();
    config.validate()?;
    let input_paths: Vec<&Path> = config.files.as_ref().map_or_else(Vec::new, |f| f.paths().to_vec());
    require_inputs(input_paths.iter().copied())?;
    let protocol = config.protocol()?;
    let gains = protocol.gains();
    let est_config = config.solver.estimation(protocol);
    est_config.validate()?;
    let anchor_index = est_config.anchor_illumination.unwrap_or(gains.len() - 1);
    let anchor = *gains
        .get(anchor_index)
        .ok_or_else(|| CliError::Config(format!("anchor illumination {anchor_index} out of range for {protocol}")))?;

    let staging = Staging::for_directory(output)?;
    let setup = match &config.files {
        Some(f) => files_setup(f, config, anchor)?,
        None => synthetic_setup(&config.synthetic.clone().unwrap_or_default(), config, anchor)?,
    };

    io::write_basis(&staging.path("bases/reflectance.csv")?, &setup.bases.reflectance)?;
    for p in Primary::ALL {
        io::write_basis(&staging.path(format!("bases/{}.csv", p.name()))?, setup.bases.illumination.basis(p))?;
    }
    io::write_camera(&staging.path("camera.csv")?, &setup.camera)?;
    io::write_spectral_csv(&staging.path("truth/reflectances.csv")?, &setup.labels, &setup.reflectances)?;
    let primary_labels = Primary::ALL.map(|p| p.name().to_string());
    io::write_spectral_csv(&staging.path("truth/primaries.csv")?, &primary_labels, &setup.primaries)?;

    let opts = SimulationOptions {
        noise_sigma: config.noise,
        seed: config.seed,
        gain_distortion: config.gain_distortion,
    };
    let obs = simulate_from_primaries(&setup.camera, &setup.primaries, &gains, &setup.reflectances, &opts)?;
    io::write_gains(&staging.path("gains.csv")?, &gains)?;
    io::write_observations(&staging.path("observations.csv")?, &obs)?;

    let result = joint_estimate(&obs, &setup.bases, &setup.camera, &est_config)?;
    report_non_convergence(&result);
    write_estimate(&staging, "estimate", &result)?;

    let report = evaluate_reflectances(&result.reflectances, &setup.reflectances, Some(&setup.labels))?;
    io::write_report(&staging.path("report.csv")?, &report)?;
    let truth = Truth {
        reflectances: &setup.reflectances,
        primaries: &setup.primaries,
    };
    emit_plot_data(&staging, &result, &setup.bases, Some(truth))?;

    let mut manifest = RunManifest::new("run", Some(config.seed), to_json(config)?, started);
    manifest.inputs = digest_inputs(input_paths)?;
    manifest.outputs = staging.digests()?;
    manifest.result = Some(summary(&result, Some(&report), Some(&setup.primaries))?);
    manifest.write(&staging.path(MANIFEST_FILE)?)?;
    staging.commit()?;
    Ok(manifest)
}

pub fn gen_surrogate_spd_cmd(args: &GenSpdArgs) -> Result<()> {
    if args.projectors == 0 || args.shapes == 0 {
        return Err(CliError::Config("--projectors and --shapes must be >= 1".into()));
    }
    let opts = SurrogateSpdOptions {
        n_projectors: args.projectors,
        latent_shapes: args.shapes,
        center_jitter_nm: args.jitter,
    };
    let db = generate_surrogate_spd_database_with(&grid(&args.grid)?, args.seed, opts);
    let staging = Staging::for_files(&args.output_dir.join("red.csv"))?;
    for p in Primary::ALL {
        io::write_database(&staging.path(format!("{}.csv", p.name()))?, db.primary(p))?;
    }
    staging.commit()
}

pub fn gen_surrogate_reflectance_cmd(args: &GenReflectanceArgs) -> Result<()> {
    if args.count == 0 {
        return Err(CliError::Config("--count must be >= 1".into()));
    }
    let db = generate_surrogate_reflectance_database(&grid(&args.grid)?, args.seed, args.count);
    let staging = Staging::for_files(&args.output)?;
    io::write_database(&staging.path(file_name(&args.output)?)?, &db)?;
    staging.commit()
}

pub fn gen_camera_cmd(args: &GenCameraArgs) -> Result<()> {
    let [r, g, b] = args.peaks[..] else {
        return Err(CliError::Config("--peaks takes three wavelengths".into()));
    };
    if !(args.width > 0.0) {
        return Err(CliError::Config("--width must be positive".into()));
    }
    let camera = CameraSensitivity::gaussian_with(&grid(&args.grid)?, [r, g, b], args.width);
    let staging = Staging::for_files(&args.output)?;
    io::write_camera(&staging.path(file_name(&args.output)?)?, &camera)?;
    staging.commit()
}
