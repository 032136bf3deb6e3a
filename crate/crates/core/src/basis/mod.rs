//! Low-dimensional spectral bases fitted by uncentered PCA.

mod surrogate;

pub use surrogate::{
    generate_surrogate_reflectance_database, generate_surrogate_spd_database,
    generate_surrogate_spd_database_with, SurrogateSpdDatabase, SurrogateSpdOptions,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectrum::{CurveRole, SpectralCurve, WavelengthGrid};

/// Orthonormality tolerance for basis columns.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// One of the three projector primaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primary {
    Red,
    Green,
    Blue,
}

impl Primary {
    pub const ALL: [Primary; 3] = [Primary::Red, Primary::Green, Primary::Blue];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Primary::Red => "red",
            Primary::Green => "green",
            Primary::Blue => "blue",
        }
    }
}

/// What a basis represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisRole {
    Reflectance,
    Primary(Primary),
}

impl fmt::Display for BasisRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisRole::Reflectance => f.write_str("reflectance"),
            BasisRole::Primary(p) => f.write_str(p.name()),
        }
    }
}

impl FromStr for BasisRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reflectance" => Ok(BasisRole::Reflectance),
            "red" => Ok(BasisRole::Primary(Primary::Red)),
            "green" => Ok(BasisRole::Primary(Primary::Green)),
            "blue" => Ok(BasisRole::Primary(Primary::Blue)),
            other => Err(Error::Parse(format!("unknown basis role `{other}`"))),
        }
    }
}

/// A set of curves sharing one grid, each with a source label.
#[derive(Debug, Clone)]
pub struct CurveDatabase {
    grid: WavelengthGrid,
    curves: Vec<SpectralCurve>,
    labels: Vec<String>,
}

impl CurveDatabase {
    pub fn new(curves: Vec<SpectralCurve>, labels: Vec<String>) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::Dimension("curve database needs at least one curve".into()))?;
        let grid = *first.grid();
        for c in &curves {
            grid.ensure_same(c.grid())?;
        }
        if labels.len() != curves.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} curves",
                labels.len(),
                curves.len()
            )));
        }
        Ok(Self {
            grid,
            curves,
            labels,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn curves(&self) -> &[SpectralCurve] {
        &self.curves
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&SpectralCurve> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| &self.curves[i])
    }

    /// Copy of the database without the curve labelled `label` (leave-one-out).
    pub fn without(&self, label: &str) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] != label).collect();
        if keep.len() == self.len() {
            return Err(Error::InvalidConfig(format!("no curve labelled `{label}`")));
        }
        Self::new(
            keep.iter().map(|&i| self.curves[i].clone()).collect(),
            keep.iter().map(|&i| self.labels[i].clone()).collect(),
        )
    }

    /// Data matrix with one curve per column.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.grid.len(), self.len(), |r, c| self.curves[c].at(r))
    }
}

/// Orthonormal basis columns on a grid, with PCA contribution rates when known.
#[derive(Debug, Clone)]
pub struct BasisSet {
    grid: WavelengthGrid,
    vectors: DMatrix<f64>,
    contribution_rates: Option<Vec<f64>>,
    role: BasisRole,
}

impl BasisSet {
    /// Wraps externally supplied columns, checking orthonormality.
    pub fn from_columns(
        grid: WavelengthGrid,
        vectors: DMatrix<f64>,
        contribution_rates: Option<Vec<f64>>,
        role: BasisRole,
    ) -> Result<Self> {
        if vectors.nrows() != grid.len() || vectors.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "basis matrix is {}x{} for a {}-sample grid",
                vectors.nrows(),
                vectors.ncols(),
                grid.len()
            )));
        }
        let gram = vectors.transpose() * &vectors;
        let k = vectors.ncols();
        let dev = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::Parse(format!(
                "basis columns are not orthonormal (max Gram deviation {dev:e})"
            )));
        }
        if let Some(rates) = &contribution_rates {
            if rates.len() != k {
                return Err(Error::Dimension(format!("{} rates for {k} columns", rates.len())));
            }
            if rates.iter().any(|r| !(0.0..=1.0 + 1e-12).contains(r))
                || rates.windows(2).any(|w| w[1] > w[0] + 1e-15)
            {
                return Err(Error::Parse(
                    "contribution rates must be non-increasing and within [0, 1]".into(),
                ));
            }
        }
        Ok(Self {
            grid,
            vectors,
            contribution_rates,
            role,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn role(&self) -> BasisRole {
        self.role
    }

    pub fn contribution_rates(&self) -> Option<&[f64]> {
        self.contribution_rates.as_deref()
    }

    pub fn cumulative_contribution(&self) -> Option<f64> {
        self.contribution_rates.as_ref().map(|r| r.iter().sum())
    }

    pub fn column(&self, j: usize) -> SpectralCurve {
        SpectralCurve::from_vector(self.grid, self.vectors.column(j).into_owned(), CurveRole::Signed)
            .expect("basis columns are finite")
    }

    /// Keeps the leading `k` columns.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidRank {
                rank: k,
                max: self.rank(),
            });
        }
        Ok(Self {
            grid: self.grid,
            vectors: self.vectors.columns(0, k).into_owned(),
            contribution_rates: self.contribution_rates.as_ref().map(|r| r[..k].to_vec()),
            role: self.role,
        })
    }

    pub fn with_role(mut self, role: BasisRole) -> Self {
        self.role = role;
        self
    }
}

/// Uncentered PCA: the leading `k` left singular vectors of the raw data matrix.
///
/// Columns are sign-normalized so that each column's entry of largest
/// magnitude is positive.
pub fn fit_basis(db: &CurveDatabase, k: usize, role: BasisRole) -> Result<BasisSet> {
    let max = db.grid().len().min(db.len());
    if k == 0 || k > max {
        return Err(Error::InvalidRank { rank: k, max });
    }
    let data = db.matrix();
    let svd = data.svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut vectors = DMatrix::zeros(db.grid().len(), k);
    let mut rates = Vec::with_capacity(k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let mut col = u.column(src).into_owned();
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(j, &col);
        rates.push(if total > 0.0 { sv[src] * sv[src] / total } else { 0.0 });
    }
    // SVD rounding can leave neighbouring rates out of order by an ulp
    for j in 1..rates.len() {
        if rates[j] > rates[j - 1] {
            rates[j] = rates[j - 1];
        }
    }
    Ok(BasisSet {
        grid: *db.grid(),
        vectors,
        contribution_rates: Some(rates),
        role,
    })
}

/// Least-squares coefficients of `curve` in `basis` (`B^T v` for orthonormal `B`).
pub fn project(curve: &SpectralCurve, basis: &BasisSet) -> Result<DVector<f64>> {
    basis.grid().ensure_same(curve.grid())?;
    Ok(basis.vectors().transpose() * curve.values())
}

/// `B c` on the basis grid. The result is signed and never clamped.
pub fn reconstruct(basis: &BasisSet, coeffs: &DVector<f64>) -> Result<SpectralCurve> {
    if coeffs.len() != basis.rank() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a rank-{} basis",
            coeffs.len(),
            basis.rank()
        )));
    }
    SpectralCurve::from_vector(*basis.grid(), basis.vectors() * coeffs, CurveRole::Signed)
}
