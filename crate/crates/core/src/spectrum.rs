//! Wavelength grids, sampled spectral curves and the smoothness operator.
//!
//! Every spectrum in a run lives on one shared [`WavelengthGrid`]. Arithmetic
//! between curves on different grids is rejected; use [`resample`] explicitly
//! when ingesting tabulated data.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing grid parameters.
const GRID_EPS: f64 = 1e-9;

/// Uniformly spaced wavelength samples `start + k * step`, `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthGrid {
    start: f64,
    step: f64,
    count: usize,
}

impl WavelengthGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !start.is_finite() || !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "step must be positive and finite, got {step}"
            )));
        }
        if count < 3 {
            return Err(Error::InvalidGrid(format!(
                "at least 3 samples are required, got {count}"
            )));
        }
        Ok(Self { start, step, count })
    }

    /// 400 nm to 700 nm at 10 nm, 31 samples.
    pub fn visible() -> Self {
        Self {
            start: 400.0,
            step: 10.0,
            count: 31,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end(&self) -> f64 {
        self.wavelength(self.count - 1)
    }

    pub fn wavelength(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.wavelength(k))
    }

    /// Index of the sample at `nm`, if `nm` lies on the grid.
    pub fn index_of(&self, nm: f64) -> Option<usize> {
        let pos = (nm - self.start) / self.step;
        let k = pos.round();
        if k < 0.0 || k as usize >= self.count || (pos - k).abs() > GRID_EPS * self.count as f64 {
            return None;
        }
        Some(k as usize)
    }

    /// Grid equality up to floating-point noise in the parameters.
    pub fn same_as(&self, other: &WavelengthGrid) -> bool {
        self.count == other.count
            && (self.start - other.start).abs() <= GRID_EPS * self.start.abs().max(1.0)
            && (self.step - other.step).abs() <= GRID_EPS * self.step
    }

    pub fn ensure_same(&self, other: &WavelengthGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl Default for WavelengthGrid {
    fn default() -> Self {
        Self::visible()
    }
}

impl fmt::Display for WavelengthGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}..{} nm step {} ({} samples)",
            self.start,
            self.end(),
            self.step,
            self.count
        )
    }
}

/// Physical meaning of a curve. Tagged roles are non-negative by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveRole {
    Reflectance,
    Spd,
    Sensitivity,
    /// Signed data such as basis vectors or unclamped reconstructions.
    Signed,
}

impl CurveRole {
    pub fn name(self) -> &'static str {
        match self {
            CurveRole::Reflectance => "reflectance",
            CurveRole::Spd => "spd",
            CurveRole::Sensitivity => "sensitivity",
            CurveRole::Signed => "signed",
        }
    }

    fn non_negative(self) -> bool {
        !matches!(self, CurveRole::Signed)
    }
}

/// A function of wavelength sampled on a [`WavelengthGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCurve {
    grid: WavelengthGrid,
    values: DVector<f64>,
    role: CurveRole,
}

impl SpectralCurve {
    pub fn new(grid: WavelengthGrid, values: Vec<f64>, role: CurveRole) -> Result<Self> {
        Self::from_vector(grid, DVector::from_vec(values), role)
    }

    pub fn from_vector(grid: WavelengthGrid, values: DVector<f64>, role: CurveRole) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "curve has {} values but grid has {} samples",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if role.non_negative() {
            if let Some(k) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::NegativeValue {
                    role: role.name(),
                    wavelength: grid.wavelength(k),
                    value: values[k],
                });
            }
        }
        Ok(Self { grid, values, role })
    }

    pub fn constant(grid: WavelengthGrid, value: f64, role: CurveRole) -> Result<Self> {
        Self::from_vector(grid, DVector::from_element(grid.len(), value), role)
    }

    /// Samples `f` at every grid wavelength.
    pub fn from_fn(grid: WavelengthGrid, role: CurveRole, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.wavelengths().map(f).collect(), role)
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn role(&self) -> CurveRole {
        self.role
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Value at an on-grid wavelength.
    pub fn value_at(&self, nm: f64) -> Option<f64> {
        self.grid.index_of(nm).map(|k| self.values[k])
    }

    /// Re-tags the curve, validating the new role's constraints.
    pub fn with_role(self, role: CurveRole) -> Result<Self> {
        Self::from_vector(self.grid, self.values, role)
    }

    pub fn min_value(&self) -> f64 {
        self.values.min()
    }
}

/// Piecewise-linear resampling of `curve` onto `target`.
pub fn resample(curve: &SpectralCurve, target: &WavelengthGrid) -> Result<SpectralCurve> {
    let src = curve.grid();
    if src.same_as(target) {
        return Ok(curve.clone());
    }
    let slack = GRID_EPS * src.step() * src.len() as f64;
    if target.start() < src.start() - slack || target.end() > src.end() + slack {
        return Err(Error::OutOfRange {
            target_lo: target.start(),
            target_hi: target.end(),
            source_lo: src.start(),
            source_hi: src.end(),
        });
    }
    let values = curve.values();
    let last = src.len() - 1;
    let out: Vec<f64> = target
        .wavelengths()
        .map(|nm| {
            let pos = ((nm - src.start()) / src.step()).clamp(0.0, last as f64);
            let lo = (pos.floor() as usize).min(last - 1);
            let t = pos - lo as f64;
            (1.0 - t) * values[lo] + t * values[lo + 1]
        })
        .collect();
    SpectralCurve::new(*target, out, curve.role())
}

/// Discrete second derivative `[1, -2, 1] / step^2`, shape `(count - 2) x count`.
#[derive(Debug, Clone)]
pub struct SecondDifference {
    matrix: DMatrix<f64>,
}

impl SecondDifference {
    pub fn new(grid: &WavelengthGrid) -> Self {
        let n = grid.len();
        let h2 = grid.step() * grid.step();
        let mut matrix = DMatrix::zeros(n - 2, n);
        for row in 0..n - 2 {
            matrix[(row, row)] = 1.0 / h2;
            matrix[(row, row + 1)] = -2.0 / h2;
            matrix[(row, row + 2)] = 1.0 / h2;
        }
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, values: &DVector<f64>) -> DVector<f64> {
        &self.matrix * values
    }
}

pub fn second_difference(grid: &WavelengthGrid) -> SecondDifference {
    SecondDifference::new(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn visible_grid_spans_400_to_700() {
        let grid = WavelengthGrid::new(400.0, 10.0, 31).unwrap();
        assert_eq!(grid.len(), 31);
        assert_eq!(grid.wavelength(0), 400.0);
        assert_eq!(grid.end(), 700.0);
        assert!(grid.same_as(&WavelengthGrid::visible()));
    }

    #[test]
    fn minimal_and_invalid_grids() {
        assert_eq!(WavelengthGrid::new(400.0, 10.0, 3).unwrap().end(), 420.0);
        assert!(matches!(
            WavelengthGrid::new(400.0, 0.0, 31),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            WavelengthGrid::new(400.0, -5.0, 31),
            Err(Error::InvalidGrid(_))
        ));
        assert!(WavelengthGrid::new(400.0, 10.0, 2).is_err());
    }

    #[test]
    fn index_lookup() {
        let grid = WavelengthGrid::visible();
        assert_eq!(grid.index_of(550.0), Some(15));
        assert_eq!(grid.index_of(555.0), None);
        assert_eq!(grid.index_of(710.0), None);
    }

    #[test]
    fn tagged_curves_reject_negative_values() {
        let grid = WavelengthGrid::new(400.0, 10.0, 3).unwrap();
        for role in [CurveRole::Reflectance, CurveRole::Spd, CurveRole::Sensitivity] {
            assert!(matches!(
                SpectralCurve::new(grid, vec![0.1, -0.01, 0.2], role),
                Err(Error::NegativeValue { .. })
            ));
        }
        assert!(SpectralCurve::new(grid, vec![0.1, -0.01, 0.2], CurveRole::Signed).is_ok());
        assert!(matches!(
            SpectralCurve::new(grid, vec![0.1, f64::NAN, 0.2], CurveRole::Signed),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(SpectralCurve::new(grid, vec![0.1], CurveRole::Signed).is_err());
    }

    #[test]
    fn resample_constant_and_identity() {
        let fine = WavelengthGrid::new(400.0, 5.0, 61).unwrap();
        let c = SpectralCurve::constant(fine, 0.37, CurveRole::Reflectance).unwrap();
        let coarse = resample(&c, &WavelengthGrid::visible()).unwrap();
        assert!(coarse.values().iter().all(|&v| (v - 0.37).abs() < 1e-15));

        let same = resample(&c, &fine).unwrap();
        assert_eq!(same.values(), c.values());
    }

    #[test]
    fn resample_ramp_matches_closed_form() {
        let fine = WavelengthGrid::new(400.0, 5.0, 61).unwrap();
        let ramp = SpectralCurve::from_fn(fine, CurveRole::Reflectance, |nm| (nm - 400.0) / 300.0).unwrap();
        let coarse = resample(&ramp, &WavelengthGrid::visible()).unwrap();
        for (k, nm) in WavelengthGrid::visible().wavelengths().enumerate() {
            assert!((coarse.at(k) - (nm - 400.0) / 300.0).abs() < 1e-14);
        }
        // off-sample targets pick up the linear interpolant too
        let shifted = WavelengthGrid::new(402.5, 10.0, 30).unwrap();
        let out = resample(&ramp, &shifted).unwrap();
        assert!((out.at(0) - 2.5 / 300.0).abs() < 1e-14);
    }

    #[test]
    fn resample_rejects_out_of_range() {
        let c = SpectralCurve::constant(WavelengthGrid::visible(), 1.0, CurveRole::Spd).unwrap();
        let wide = WavelengthGrid::new(380.0, 10.0, 33).unwrap();
        assert!(matches!(resample(&c, &wide), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn second_difference_shape_and_quadratic() {
        let grid = WavelengthGrid::visible();
        let d = second_difference(&grid);
        assert_eq!(d.matrix().shape(), (29, 31));

        let ones = DVector::from_element(31, 1.0);
        assert!(d.apply(&ones).amax() < 1e-15);

        let ramp = DVector::from_fn(31, |k, _| k as f64 * grid.step());
        assert!(d.apply(&ramp).amax() < 1e-12);

        let quad = DVector::from_fn(31, |k, _| (k as f64 * grid.step()).powi(2));
        for v in d.apply(&quad).iter() {
            assert!((v - 2.0).abs() < 1e-9, "{v}");
        }
    }

    proptest! {
        #[test]
        fn second_difference_annihilates_affine(
            start in 300.0f64..500.0,
            step in 0.5f64..20.0,
            count in 3usize..64,
            a in -10.0f64..10.0,
            b in -0.1f64..0.1,
        ) {
            let grid = WavelengthGrid::new(start, step, count).unwrap();
            let v = DVector::from_fn(count, |k, _| a + b * grid.wavelength(k));
            let out = second_difference(&grid).apply(&v);
            let scale = (a.abs() + b.abs() * grid.end()) / (step * step);
            prop_assert!(out.amax() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn resample_exact_on_affine(a in 0.0f64..2.0, b in 0.0f64..0.01, step in 1.0f64..6.0) {
            let src = WavelengthGrid::new(390.0, step, (330.0 / step) as usize).unwrap();
            let curve = SpectralCurve::from_fn(src, CurveRole::Spd, |nm| a + b * (nm - 390.0)).unwrap();
            let target = WavelengthGrid::new(400.0, 7.0, 40).unwrap();
            prop_assume!(target.end() <= src.end());
            let out = resample(&curve, &target).unwrap();
            for (k, nm) in target.wavelengths().enumerate() {
                prop_assert!((out.at(k) - (a + b * (nm - 390.0))).abs() < 1e-12);
            }
            let again = resample(&out, &target).unwrap();
            prop_assert_eq!(again.values(), out.values());
        }
    }
}
