//! Spectral error, CIE XYZ/Lab, sRGB rendering under D65 and CIEDE2000.

mod tables;

use crate::error::{Error, Result};
use crate::spectrum::{resample, CurveRole, SpectralCurve, WavelengthGrid};
use tables::{CMF_1931, D65, TABLE_START_NM, TABLE_STEP_NM};

/// 380 to 780 nm in 5 nm steps, the native grid of the embedded tables.
pub fn colorimetric_grid() -> WavelengthGrid {
    WavelengthGrid::new(TABLE_START_NM, TABLE_STEP_NM, D65.len()).expect("valid table grid")
}

fn table_curve(values: Vec<f64>, grid: &WavelengthGrid) -> Result<SpectralCurve> {
    resample(&SpectralCurve::new(colorimetric_grid(), values, CurveRole::Sensitivity)?, grid)
}

/// Linear interpolation onto `target`, holding the end values outside the source range.
pub fn extend_to(curve: &SpectralCurve, target: &WavelengthGrid) -> Result<SpectralCurve> {
    let src = curve.grid();
    let last = src.len() - 1;
    let values: Vec<f64> = target
        .wavelengths()
        .map(|nm| {
            let pos = ((nm - src.start()) / src.step()).clamp(0.0, last as f64);
            let lo = (pos.floor() as usize).min(last.saturating_sub(1));
            let t = pos - lo as f64;
            if last == 0 {
                curve.at(0)
            } else {
                (1.0 - t) * curve.at(lo) + t * curve.at(lo + 1)
            }
        })
        .collect();
    SpectralCurve::new(*target, values, curve.role())
}

/// CIE 1931 2 degree colour matching functions on a working grid.
#[derive(Debug, Clone)]
pub struct StandardObserver {
    pub x: SpectralCurve,
    pub y: SpectralCurve,
    pub z: SpectralCurve,
}

impl StandardObserver {
    pub fn cie1931(grid: &WavelengthGrid) -> Result<Self> {
        let col = |k: usize| table_curve(CMF_1931.iter().map(|row| row[k]).collect(), grid);
        Ok(Self {
            x: col(0)?,
            y: col(1)?,
            z: col(2)?,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        self.x.grid()
    }
}

#[derive(Debug, Clone)]
pub struct Illuminant {
    pub spd: SpectralCurve,
}

impl Illuminant {
    pub fn d65(grid: &WavelengthGrid) -> Result<Self> {
        let spd = table_curve(D65.to_vec(), grid)?.with_role(CurveRole::Spd)?;
        Ok(Self { spd })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// CIE 1976 L*a*b*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }
}

/// Root mean square difference over the samples of two curves.
pub fn rmse(estimated: &SpectralCurve, truth: &SpectralCurve) -> Result<f64> {
    estimated.grid().ensure_same(truth.grid())?;
    let n = estimated.len() as f64;
    Ok(((estimated.values() - truth.values()).norm_squared() / n).sqrt())
}

/// Tristimulus values of a surface under `ill`, scaled so the perfect reflector has `Y = 100`.
pub fn reflectance_to_xyz(r: &SpectralCurve, ill: &Illuminant, obs: &StandardObserver) -> Result<Xyz> {
    r.grid().ensure_same(ill.spd.grid())?;
    r.grid().ensure_same(obs.grid())?;
    let s = ill.spd.values();
    let weighted = |cmf: &SpectralCurve, refl: Option<&SpectralCurve>| -> f64 {
        let mut sum = 0.0;
        for k in 0..s.len() {
            sum += cmf.at(k) * s[k] * refl.map_or(1.0, |c| c.at(k));
        }
        sum
    };
    let norm = weighted(&obs.y, None);
    if !(norm > 0.0) {
        return Err(Error::InvalidWhite(0.0, norm, 0.0));
    }
    Ok(Xyz {
        x: 100.0 * (weighted(&obs.x, Some(r)) / norm),
        y: 100.0 * (weighted(&obs.y, Some(r)) / norm),
        z: 100.0 * (weighted(&obs.z, Some(r)) / norm),
    })
}

/// XYZ of the perfect reflector under `ill`.
pub fn white_point(ill: &Illuminant, obs: &StandardObserver) -> Result<Xyz> {
    let one = SpectralCurve::constant(*ill.spd.grid(), 1.0, CurveRole::Reflectance)?;
    reflectance_to_xyz(&one, ill, obs)
}

const XYZ_TO_LINEAR_SRGB: [[f64; 3]; 3] = [
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
];

fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Gamma-encoded sRGB of XYZ given on the `Y = 100` scale, clipped to `[0, 1]`.
pub fn xyz_to_srgb(xyz: Xyz) -> [f64; 3] {
    let v = [xyz.x / 100.0, xyz.y / 100.0, xyz.z / 100.0];
    XYZ_TO_LINEAR_SRGB.map(|row| {
        let linear = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        srgb_encode(linear.clamp(0.0, 1.0))
    })
}

const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

pub fn xyz_to_lab(xyz: Xyz, white: Xyz) -> Result<Lab> {
    if !(white.x > 0.0 && white.y > 0.0 && white.z > 0.0) {
        return Err(Error::InvalidWhite(white.x, white.y, white.z));
    }
    let (fx, fy, fz) = (lab_f(xyz.x / white.x), lab_f(xyz.y / white.y), lab_f(xyz.z / white.z));
    let yr = xyz.y / white.y;
    let l = if yr > LAB_EPSILON { 116.0 * fy - 16.0 } else { LAB_KAPPA * yr };
    Ok(Lab {
        l,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    })
}

/// CIEDE2000 colour difference with unit parametric factors.
pub fn de2000(c1: Lab, c2: Lab) -> f64 {
    let pow7 = |v: f64| v.powi(7);
    let twenty_five_7 = pow7(25.0);

    let c_ab = ((c1.a.hypot(c1.b)) + (c2.a.hypot(c2.b))) / 2.0;
    let g = 0.5 * (1.0 - (pow7(c_ab) / (pow7(c_ab) + twenty_five_7)).sqrt());
    let a1 = (1.0 + g) * c1.a;
    let a2 = (1.0 + g) * c2.a;
    let cp1 = a1.hypot(c1.b);
    let cp2 = a2.hypot(c2.b);
    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            b.atan2(a).to_degrees().rem_euclid(360.0)
        }
    };
    let h1 = hue(c1.b, a1);
    let h2 = hue(c2.b, a2);

    let dl = c2.l - c1.l;
    let dc = cp2 - cp1;
    let chroma_product = cp1 * cp2;
    let dh = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2 - h1;
        if d.abs() <= 180.0 {
            d
        } else if d > 180.0 {
            d - 360.0
        } else {
            d + 360.0
        }
    };
    let dh_big = 2.0 * chroma_product.sqrt() * (dh / 2.0).to_radians().sin();

    let l_bar = (c1.l + c2.l) / 2.0;
    let c_bar = (cp1 + cp2) / 2.0;
    let h_bar = if chroma_product == 0.0 {
        h1 + h2
    } else if (h1 - h2).abs() <= 180.0 {
        (h1 + h2) / 2.0
    } else if h1 + h2 < 360.0 {
        (h1 + h2 + 360.0) / 2.0
    } else {
        (h1 + h2 - 360.0) / 2.0
    };

    let t = 1.0 - 0.17 * (h_bar - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar).to_radians().cos()
        + 0.32 * (3.0 * h_bar + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar - 63.0).to_radians().cos();
    let d_theta = 30.0 * (-((h_bar - 275.0) / 25.0).powi(2)).exp();
    let r_c = 2.0 * (pow7(c_bar) / (pow7(c_bar) + twenty_five_7)).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * c_bar;
    let s_h = 1.0 + 0.015 * c_bar * t;
    let r_t = -(2.0 * d_theta).to_radians().sin() * r_c;

    let (tl, tc, th) = (dl / s_l, dc / s_c, dh_big / s_h);
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

/// One patch of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEvaluation {
    pub patch: String,
    pub rmse: f64,
    pub delta_e00: f64,
    /// Estimated reflectance rendered under D65.
    pub srgb: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub patches: Vec<PatchEvaluation>,
    /// Column means over the patches.
    pub average: PatchEvaluation,
}

/// Spectral and colorimetric errors of estimated reflectances against the truth.
/// RMSE uses the working grid; colours are computed on the full table range
/// with the reflectances held constant beyond their own range.
pub fn evaluate_reflectances(
    estimated: &[SpectralCurve],
    truth: &[SpectralCurve],
    labels: Option<&[String]>,
) -> Result<EvaluationReport> {
    if estimated.len() != truth.len() || estimated.is_empty() {
        return Err(Error::Dimension(format!(
            "{} estimated and {} true reflectances",
            estimated.len(),
            truth.len()
        )));
    }
    if labels.is_some_and(|l| l.len() != truth.len()) {
        return Err(Error::Dimension("one label per patch required".into()));
    }
    let grid = colorimetric_grid();
    let ill = Illuminant::d65(&grid)?;
    let obs = StandardObserver::cie1931(&grid)?;
    let white = white_point(&ill, &obs)?;

    let mut patches = Vec::with_capacity(truth.len());
    for (i, (e, t)) in estimated.iter().zip(truth).enumerate() {
        let xyz_e = reflectance_to_xyz(&extend_to(e, &grid)?, &ill, &obs)?;
        let xyz_t = reflectance_to_xyz(&extend_to(t, &grid)?, &ill, &obs)?;
        patches.push(PatchEvaluation {
            patch: labels.map_or_else(|| format!("patch-{:02}", i + 1), |l| l[i].clone()),
            rmse: rmse(e, t)?,
            delta_e00: de2000(xyz_to_lab(xyz_e, white)?, xyz_to_lab(xyz_t, white)?),
            srgb: xyz_to_srgb(xyz_e),
        });
    }
    let n = patches.len() as f64;
    let mean = |f: &dyn Fn(&PatchEvaluation) -> f64| patches.iter().map(f).sum::<f64>() / n;
    let average = PatchEvaluation {
        patch: "average".into(),
        rmse: mean(&|p| p.rmse),
        delta_e00: mean(&|p| p.delta_e00),
        srgb: [0, 1, 2].map(|k| mean(&|p| p.srgb[k])),
    };
    Ok(EvaluationReport { patches, average })
}

pub fn evaluate_run(result: &crate::solver::EstimationResult, truth: &[SpectralCurve]) -> Result<EvaluationReport> {
    evaluate_reflectances(&result.reflectances, truth, None)
}
