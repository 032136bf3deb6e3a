//! CSV formats for spectra, bases, captures, coefficients and reports.
//!
//! Spectral files have a `wavelength_nm` column followed by one column per
//! curve, one row per sample in ascending order. Numbers are written in the
//! shortest form that parses back to the same `f64`.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisRole, BasisSet, CurveDatabase};
use crate::colorimetry::{EvaluationReport, PatchEvaluation};
use crate::error::{Error, Result};
use crate::forward::{CameraSensitivity, GainTriple, ObservationSet, CHANNELS};
use crate::solver::IterationRecord;
use crate::spectrum::{CurveRole, SpectralCurve, WavelengthGrid};

/// Relative tolerance on wavelength spacing when inferring a grid.
const SPACING_TOL: f64 = 1e-6;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn parse(field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("cannot parse {what} `{field}`")))
}

fn parse_index(field: &str, what: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("cannot parse {what} `{field}`")))
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn expect_header(found: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    let got: Vec<&str> = found.iter().collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "{}: expected columns {expected:?}, found {got:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Uniform grid through the given ascending sample positions.
pub fn grid_from_wavelengths(wl: &[f64]) -> Result<WavelengthGrid> {
    match wl {
        [] => Err(Error::InvalidGrid("no wavelength samples".into())),
        [only] => WavelengthGrid::new(*only, 1.0, 1),
        [first, second, ..] => {
            let step = second - first;
            let grid = WavelengthGrid::new(*first, step, wl.len())?;
            for (k, &w) in wl.iter().enumerate() {
                if (w - grid.wavelength(k)).abs() > SPACING_TOL * step.abs() {
                    return Err(Error::InvalidGrid(format!(
                        "wavelengths must be ascending and evenly spaced; sample {k} is {w} nm"
                    )));
                }
            }
            Ok(grid)
        }
    }
}

/// Reads a spectral CSV; every value column becomes a labelled curve with `role`.
pub fn read_spectral_csv(path: &Path, role: CurveRole) -> Result<CurveDatabase> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("wavelength_nm") || header.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: spectral CSV needs a `wavelength_nm` column and at least one curve",
            path.display()
        )));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut wl = Vec::new();
    let mut columns = vec![Vec::new(); labels.len()];
    for record in rdr.records() {
        let record = record?;
        wl.push(parse(&record[0], "wavelength")?);
        for (j, col) in columns.iter_mut().enumerate() {
            col.push(parse(&record[j + 1], "spectral value")?);
        }
    }
    let grid = grid_from_wavelengths(&wl)?;
    let curves = columns
        .into_iter()
        .map(|values| SpectralCurve::new(grid, values, role))
        .collect::<Result<Vec<_>>>()?;
    CurveDatabase::new(curves, labels)
}

/// Writes curves sharing one grid as a spectral CSV.
pub fn write_spectral_csv(path: &Path, labels: &[String], curves: &[SpectralCurve]) -> Result<()> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Dimension("nothing to write".into()))?;
    if labels.len() != curves.len() {
        return Err(Error::Dimension(format!("{} labels for {} curves", labels.len(), curves.len())));
    }
    let grid = *first.grid();
    for c in curves {
        grid.ensure_same(c.grid())?;
    }
    let mut w = writer(path)?;
    let mut header = vec!["wavelength_nm".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (k, nm) in grid.wavelengths().enumerate() {
        let mut row = vec![fmt(nm)];
        row.extend(curves.iter().map(|c| fmt(c.at(k))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_database(path: &Path, db: &CurveDatabase) -> Result<()> {
    write_spectral_csv(path, db.labels(), db.curves())
}

/// Sidecar holding contribution rates next to a basis file: `name.csv` -> `name_rates.csv`.
pub fn rates_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "basis".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_rates.csv"))
}

/// Writes basis columns `b1..bk` and, when known, the contribution-rate sidecar.
pub fn write_basis(path: &Path, basis: &BasisSet) -> Result<()> {
    let labels: Vec<String> = (1..=basis.rank()).map(|j| format!("b{j}")).collect();
    let curves: Vec<SpectralCurve> = (0..basis.rank()).map(|j| basis.column(j)).collect();
    write_spectral_csv(path, &labels, &curves)?;
    if let Some(rates) = basis.contribution_rates() {
        let mut w = writer(&rates_path(path))?;
        w.write_record(["component", "rate", "cumulative"])?;
        let mut cumulative = 0.0;
        for (j, &r) in rates.iter().enumerate() {
            cumulative += r;
            w.write_record([(j + 1).to_string(), fmt(r), fmt(cumulative)])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Reads a basis file and its rate sidecar if one exists.
pub fn read_basis(path: &Path, role: BasisRole) -> Result<BasisSet> {
    let db = read_spectral_csv(path, CurveRole::Signed)?;
    let sidecar = rates_path(path);
    let rates = if sidecar.exists() {
        let mut rdr = reader(&sidecar)?;
        expect_header(rdr.headers()?, &["component", "rate", "cumulative"], &sidecar)?;
        let mut rates = Vec::new();
        for record in rdr.records() {
            rates.push(parse(&record?[1], "contribution rate")?);
        }
        Some(rates)
    } else {
        None
    };
    BasisSet::from_columns(*db.grid(), db.matrix(), rates, role)
}

/// Camera file: spectral CSV with exactly three columns, red, green, blue.
pub fn read_camera(path: &Path) -> Result<CameraSensitivity> {
    let db = read_spectral_csv(path, CurveRole::Sensitivity)?;
    let [r, g, b] = db.curves() else {
        return Err(Error::Dimension(format!(
            "{}: camera file needs {CHANNELS} channel columns, found {}",
            path.display(),
            db.len()
        )));
    };
    CameraSensitivity::new([r.clone(), g.clone(), b.clone()])
}

pub fn write_camera(path: &Path, camera: &CameraSensitivity) -> Result<()> {
    let labels = ["r", "g", "b"].map(String::from);
    write_spectral_csv(path, &labels, camera.channels())
}

/// Gains file: `illumination,r,g,b` with illuminations numbered from zero.
pub fn read_gains(path: &Path) -> Result<Vec<GainTriple>> {
    let mut rdr = reader(path)?;
    expect_header(rdr.headers()?, &["illumination", "r", "g", "b"], path)?;
    let mut gains = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        if parse_index(&record[0], "illumination index")? != n {
            return Err(Error::Parse(format!("{}: illuminations must be numbered 0, 1, ...", path.display())));
        }
        gains.push(GainTriple::new(
            parse(&record[1], "gain")?,
            parse(&record[2], "gain")?,
            parse(&record[3], "gain")?,
        )?);
    }
    if gains.is_empty() {
        return Err(Error::Dimension(format!("{}: no illuminations", path.display())));
    }
    Ok(gains)
}

pub fn write_gains(path: &Path, gains: &[GainTriple]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["illumination", "r", "g", "b"])?;
    for (n, g) in gains.iter().enumerate() {
        w.write_record([n.to_string(), fmt(g.r), fmt(g.g), fmt(g.b)])?;
    }
    w.flush()?;
    Ok(())
}

/// Observation file: `channel,illumination,pixel,value`, every index from zero,
/// each `(channel, illumination, pixel)` exactly once.
pub fn read_observations(path: &Path, grid: WavelengthGrid, gains: Vec<GainTriple>) -> Result<ObservationSet> {
    let mut rdr = reader(path)?;
    expect_header(rdr.headers()?, &["channel", "illumination", "pixel", "value"], path)?;
    let mut entries = Vec::new();
    let mut n_pixels = 0;
    for record in rdr.records() {
        let record = record?;
        let m = parse_index(&record[0], "channel")?;
        let n = parse_index(&record[1], "illumination")?;
        let p = parse_index(&record[2], "pixel")?;
        if m >= CHANNELS || n >= gains.len() {
            return Err(Error::Dimension(format!(
                "{}: channel {m} / illumination {n} out of range",
                path.display()
            )));
        }
        n_pixels = n_pixels.max(p + 1);
        entries.push((m, n, p, parse(&record[3], "observation")?));
    }
    let n_illum = gains.len();
    let mut values = vec![f64::NAN; CHANNELS * n_illum * n_pixels];
    for (m, n, p, v) in entries {
        let slot = &mut values[(m * n_illum + n) * n_pixels + p];
        if !slot.is_nan() {
            return Err(Error::Parse(format!("{}: duplicate entry ({m}, {n}, {p})", path.display())));
        }
        *slot = v;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Dimension(format!("{}: missing observation at flat index {i}", path.display())));
    }
    ObservationSet::new(grid, gains, n_pixels, values)
}

pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["channel", "illumination", "pixel", "value"])?;
    for m in 0..CHANNELS {
        for n in 0..obs.n_illuminations() {
            for p in 0..obs.n_pixels() {
                w.write_record([m.to_string(), n.to_string(), p.to_string(), fmt(obs.get(m, n, p))])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

const PRIMARY_NAMES: [&str; 3] = ["red", "green", "blue"];

/// Illumination coefficients: `primary,coefficient,value` with coefficients from one.
pub fn read_beta(path: &Path) -> Result<DVector<f64>> {
    let mut rdr = reader(path)?;
    expect_header(rdr.headers()?, &["primary", "coefficient", "value"], path)?;
    let mut blocks: [Vec<f64>; 3] = Default::default();
    for record in rdr.records() {
        let record = record?;
        let k = PRIMARY_NAMES
            .iter()
            .position(|&n| n == &record[0])
            .ok_or_else(|| Error::Parse(format!("unknown primary `{}`", &record[0])))?;
        if parse_index(&record[1], "coefficient index")? != blocks[k].len() + 1 {
            return Err(Error::Parse(format!("{}: coefficients must be listed in order", path.display())));
        }
        blocks[k].push(parse(&record[2], "coefficient")?);
    }
    let n_s = blocks[0].len();
    if n_s == 0 || blocks.iter().any(|b| b.len() != n_s) {
        return Err(Error::Dimension(format!("{}: each primary needs the same number of coefficients", path.display())));
    }
    Ok(DVector::from_iterator(3 * n_s, blocks.into_iter().flatten()))
}

pub fn write_beta(path: &Path, beta: &DVector<f64>) -> Result<()> {
    if beta.is_empty() || beta.len() % 3 != 0 {
        return Err(Error::Dimension(format!("beta length {} is not a multiple of 3", beta.len())));
    }
    let n_s = beta.len() / 3;
    let mut w = writer(path)?;
    w.write_record(["primary", "coefficient", "value"])?;
    for (i, v) in beta.iter().enumerate() {
        w.write_record([PRIMARY_NAMES[i / n_s].to_string(), (i % n_s + 1).to_string(), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reflectance coefficients: `pixel,coefficient,value`.
pub fn write_alpha(path: &Path, alpha: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["pixel", "coefficient", "value"])?;
    for p in 0..alpha.nrows() {
        for j in 0..alpha.ncols() {
            w.write_record([p.to_string(), (j + 1).to_string(), fmt(alpha[(p, j)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_alpha(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = reader(path)?;
    expect_header(rdr.headers()?, &["pixel", "coefficient", "value"], path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let p = parse_index(&record[0], "pixel")?;
        let j = parse_index(&record[1], "coefficient index")?;
        if p == rows.len() {
            rows.push(Vec::new());
        }
        if p + 1 != rows.len() || j != rows[p].len() + 1 {
            return Err(Error::Parse(format!("{}: entries must be listed pixel by pixel in order", path.display())));
        }
        rows[p].push(parse(&record[2], "coefficient")?);
    }
    let n_r = rows.first().map_or(0, Vec::len);
    if n_r == 0 || rows.iter().any(|r| r.len() != n_r) {
        return Err(Error::Dimension(format!("{}: ragged coefficient table", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), n_r, |p, j| rows[p][j]))
}

const TRACE_HEADER: [&str; 6] = ["iteration", "cost", "cost_after_beta", "min_spd", "min_reflectance", "anchor_value"];

pub fn write_cost_trace(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            fmt(r.cost),
            fmt(r.cost_after_beta),
            fmt(r.min_spd),
            fmt(r.min_reflectance),
            fmt(r.anchor_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cost_trace(path: &Path) -> Result<Vec<IterationRecord>> {
    let mut rdr = reader(path)?;
    expect_header(rdr.headers()?, &TRACE_HEADER, path)?;
    rdr.records()
        .map(|record| {
            let r = record?;
            Ok(IterationRecord {
                iteration: parse_index(&r[0], "iteration")?,
                cost: parse(&r[1], "cost")?,
                cost_after_beta: parse(&r[2], "cost")?,
                min_spd: parse(&r[3], "minimum")?,
                min_reflectance: parse(&r[4], "minimum")?,
                anchor_value: parse(&r[5], "anchor value")?,
            })
        })
        .collect()
}

const REPORT_HEADER: [&str; 6] = ["patch", "rmse", "deltaE00", "srgb_r", "srgb_g", "srgb_b"];

/// Report CSV: one row per patch and a final `average` row.
pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for p in report.patches.iter().chain(std::iter::once(&report.average)) {
        w.write_record([
            p.patch.clone(),
            fmt(p.rmse),
            fmt(p.delta_e00),
            fmt(p.srgb[0]),
            fmt(p.srgb[1]),
            fmt(p.srgb[2]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvaluationReport> {
    let mut rdr = reader(path)?;
    expect_header(rdr.headers()?, &REPORT_HEADER, path)?;
    let mut rows = rdr
        .records()
        .map(|record| {
            let r = record?;
            Ok(PatchEvaluation {
                patch: r[0].to_string(),
                rmse: parse(&r[1], "rmse")?,
                delta_e00: parse(&r[2], "colour difference")?,
                srgb: [parse(&r[3], "sRGB")?, parse(&r[4], "sRGB")?, parse(&r[5], "sRGB")?],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let average = rows
        .pop()
        .filter(|p| p.patch == "average")
        .ok_or_else(|| Error::Parse(format!("{}: missing final average row", path.display())))?;
    Ok(EvaluationReport { patches: rows, average })
}

/// One point of a long-format plot series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

pub fn write_series(path: &Path, points: &[SeriesPoint]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["series", "x", "y"])?;
    for p in points {
        w.write_record([p.series.clone(), fmt(p.x), fmt(p.y)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesPoint>> {
    let mut rdr = reader(path)?;
    expect_header(rdr.headers()?, &["series", "x", "y"], path)?;
    rdr.records()
        .map(|record| {
            let r = record?;
            Ok(SeriesPoint {
                series: r[0].to_string(),
                x: parse(&r[1], "x")?,
                y: parse(&r[2], "y")?,
            })
        })
        .collect()
}

/// Sample points of `curve` as series `name`.
pub fn curve_series(name: &str, curve: &SpectralCurve) -> Vec<SeriesPoint> {
    curve
        .grid()
        .wavelengths()
        .zip(curve.values().iter())
        .map(|(x, &y)| SeriesPoint {
            series: name.to_string(),
            x,
            y,
        })
        .collect()
}
