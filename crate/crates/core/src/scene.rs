//! Synthetic scenes with known ground truth.
//!
//! Truth reflectances and primary SPDs lie exactly in the span of the fitted
//! bases and are non-negative, so a perfect estimator can reproduce them.

use nalgebra::{DMatrix, DVector};

use crate::basis::{
    fit_basis, generate_surrogate_reflectance_database, generate_surrogate_spd_database, project, BasisRole, Primary,
};
use crate::error::{Error, Result};
use crate::forward::{simulate_observations, CameraSensitivity, GainTriple, IlluminationBases, ObservationSet, SimulationOptions};
use crate::protocol::BandProtocol;
use crate::solver::ModelBases;
use crate::spectrum::{CurveRole, SpectralCurve, WavelengthGrid};

/// Lowest truth reflectance after lifting along the first basis vector.
const REFLECTANCE_FLOOR: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct SceneOptions {
    pub grid: WavelengthGrid,
    pub seed: u64,
    pub n_patches: usize,
    pub n_r: usize,
    pub n_s: usize,
    /// Size of the reflectance collection the reflectance basis is fitted to.
    pub n_reference_reflectances: usize,
    pub n_projectors: usize,
    /// Which surrogate projector plays the device under test.
    pub projector: usize,
    /// Standard deviation of the Gaussian camera channels.
    pub camera_width_nm: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            grid: WavelengthGrid::visible(),
            seed: 1,
            n_patches: 18,
            n_r: 6,
            n_s: 6,
            n_reference_reflectances: 40,
            n_projectors: 13,
            projector: 0,
            camera_width_nm: 50.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub bases: ModelBases,
    pub camera: CameraSensitivity,
    /// Primary coefficients before any exposure normalization.
    pub beta_true: DVector<f64>,
    /// `P x N_r` reflectance coefficients.
    pub alpha_true: DMatrix<f64>,
    pub reflectances: Vec<SpectralCurve>,
}

pub fn build_scene(opts: &SceneOptions) -> Result<SyntheticScene> {
    if opts.n_patches == 0 || opts.projector >= opts.n_projectors {
        return Err(Error::InvalidConfig("scene needs patches and a valid projector index".into()));
    }
    let grid = opts.grid;
    let ref_db = generate_surrogate_reflectance_database(&grid, opts.seed, opts.n_reference_reflectances);
    let b_ref = fit_basis(&ref_db, opts.n_r, BasisRole::Reflectance)?;
    let spd_db = generate_surrogate_spd_database(&grid, opts.seed, opts.n_projectors);
    let fit = |p: Primary| fit_basis(spd_db.primary(p), opts.n_s, BasisRole::Primary(p));
    let ill = IlluminationBases::new(fit(Primary::Red)?, fit(Primary::Green)?, fit(Primary::Blue)?)?;

    let mut beta_true = DVector::zeros(ill.dim());
    for p in Primary::ALL {
        let curve = &spd_db.primary(p).curves()[opts.projector];
        beta_true
            .rows_mut(p.index() * opts.n_s, opts.n_s)
            .copy_from(&project(curve, ill.basis(p))?);
    }

    let b1 = b_ref.vectors().column(0).into_owned();
    if b1.min() <= 0.0 {
        return Err(Error::InvalidConfig("first reflectance basis vector is not positive".into()));
    }
    let patches = generate_surrogate_reflectance_database(&grid, opts.seed.wrapping_add(0x5eed), opts.n_patches);
    let mut alpha_true = DMatrix::zeros(opts.n_patches, opts.n_r);
    let mut reflectances = Vec::with_capacity(opts.n_patches);
    for (p, curve) in patches.curves().iter().enumerate() {
        let mut a = project(curve, &b_ref)?;
        let r = b_ref.vectors() * &a;
        let lift = ((REFLECTANCE_FLOOR - r.min()) / b1.min()).max(0.0);
        a[0] += lift;
        alpha_true.set_row(p, &a.transpose());
        reflectances.push(SpectralCurve::from_vector(grid, b_ref.vectors() * &a, CurveRole::Signed)?);
    }

    Ok(SyntheticScene {
        bases: ModelBases::new(b_ref, ill)?,
        camera: CameraSensitivity::gaussian_with(&grid, [600.0, 540.0, 460.0], opts.camera_width_nm),
        beta_true,
        alpha_true,
        reflectances,
    })
}

impl SyntheticScene {
    /// `beta_true` rescaled so that illumination `anchor` equals one at `lambda_f`.
    pub fn normalized_beta(&self, anchor: GainTriple, lambda_f: f64) -> Result<DVector<f64>> {
        let s = self.bases.illumination.spd(anchor, &self.beta_true)?;
        let value = s.value_at(lambda_f).ok_or_else(|| {
            Error::InvalidConfig(format!("anchor wavelength {lambda_f} nm is not on the grid"))
        })?;
        if !(value > 0.0) {
            return Err(Error::InfeasibleAnchor { wavelength: lambda_f });
        }
        Ok(&self.beta_true / value)
    }

    /// Captures under `protocol` with the exposure chosen so that the
    /// protocol's anchor convention reproduces the truth scale.
    pub fn capture(&self, protocol: BandProtocol, lambda_f: f64, opts: &SimulationOptions) -> Result<(ObservationSet, DVector<f64>)> {
        let gains = protocol.gains();
        let beta = self.normalized_beta(gains[protocol.anchor_illumination()], lambda_f)?;
        let obs = simulate_observations(&self.camera, &self.bases.illumination, &beta, &gains, &self.reflectances, opts)?;
        Ok((obs, beta))
    }

    pub fn n_patches(&self) -> usize {
        self.reflectances.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truths_are_in_span_and_nonnegative() {
        let scene = build_scene(&SceneOptions::default()).unwrap();
        assert_eq!(scene.n_patches(), 18);
        for r in &scene.reflectances {
            assert!(r.min_value() >= REFLECTANCE_FLOOR - 1e-12);
            let back = scene.bases.reflectance.vectors() * project(r, &scene.bases.reflectance).unwrap();
            assert!((back - r.values()).amax() < 1e-12);
        }
        for p in Primary::ALL {
            let s = scene.bases.illumination.primary_spd(p, &scene.beta_true).unwrap();
            assert!(s.min_value() > -1e-9);
        }
        let beta = scene.normalized_beta(GainTriple::WHITE, 550.0).unwrap();
        let s = scene.bases.illumination.spd(GainTriple::WHITE, &beta).unwrap();
        assert!((s.value_at(550.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
