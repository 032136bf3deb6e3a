//! Regularized joint cost and its alternating minimization.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::qp::{quadratic_value, ConstrainedQuadratic};
use crate::basis::{BasisSet, Primary};
use crate::error::{Error, Result};
use crate::forward::{build_design_matrix, gamma_matrix, CameraSensitivity, GainTriple, IlluminationBases, ObservationSet, CHANNELS};
use crate::spectrum::{CurveRole, SecondDifference, SpectralCurve};

/// Anchor rows with a smaller norm cannot fix the illumination scale.
const ANCHOR_NORM_MIN: f64 = 1e-12;

/// Longest extrapolation step, in units of the last outer step.
const LINE_SEARCH_MAX_STEP: f64 = 1e3;
/// Factor by which the extrapolation step grows after a success and shrinks after a failure.
const LINE_SEARCH_GROWTH: f64 = 2.0;

/// Relative constraint violation an incumbent may carry and still be kept.
const FEASIBILITY_SLACK: f64 = 1e-12;

/// Largest negative entry relative to the magnitude of `v`.
fn violation(v: &DVector<f64>) -> f64 {
    (-v.min()).max(0.0) / v.amax().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    /// Weight of the illumination smoothness term.
    pub sigma1: f64,
    /// Weight of the reflectance smoothness term.
    pub sigma2: f64,
    /// Anchor wavelength in nm; must lie on the working grid.
    pub lambda_f: f64,
    /// Index of the anchored illumination; `None` is the last one.
    pub anchor_illumination: Option<usize>,
    pub max_outer_iterations: usize,
    /// Relative cost change that counts as converged.
    pub cost_tolerance: f64,
    /// Slack for reporting constraint satisfaction.
    pub nonneg_tolerance: f64,
    /// Solve the per-pixel reflectance problems on the rayon pool.
    pub parallel: bool,
    /// After every iteration, try a re-solved point further along the last
    /// reflectance step; kept only when it lowers the cost.
    pub line_search: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            sigma1: 0.125,
            sigma2: 0.005,
            lambda_f: 550.0,
            anchor_illumination: None,
            max_outer_iterations: 500,
            cost_tolerance: 1e-8,
            nonneg_tolerance: 1e-9,
            parallel: true,
            line_search: false,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.sigma1 >= 0.0 && self.sigma1.is_finite()) || !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma1 = {}, sigma2 = {} must be finite and >= 0", self.sigma1, self.sigma2));
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be >= 1".into());
        }
        if !(self.cost_tolerance >= 0.0) || !(self.nonneg_tolerance >= 0.0) {
            return bad("tolerances must be >= 0".into());
        }
        Ok(())
    }
}

/// Reflectance basis plus the three primary bases.
#[derive(Debug, Clone)]
pub struct ModelBases {
    pub reflectance: BasisSet,
    pub illumination: IlluminationBases,
}

impl ModelBases {
    pub fn new(reflectance: BasisSet, illumination: IlluminationBases) -> Result<Self> {
        reflectance.grid().ensure_same(illumination.grid())?;
        Ok(Self {
            reflectance,
            illumination,
        })
    }

    pub fn n_reflectance(&self) -> usize {
        self.reflectance.rank()
    }

    pub fn n_beta(&self) -> usize {
        self.illumination.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost_after_beta: f64,
    pub cost: f64,
    /// Smallest sample over the three reconstructed primaries.
    pub min_spd: f64,
    pub min_reflectance: f64,
    /// Anchored illumination at the anchor wavelength.
    pub anchor_value: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// `P x N_r`, one pixel per row.
    pub alpha: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub gains: Vec<GainTriple>,
    pub reflectances: Vec<SpectralCurve>,
    pub primaries: [SpectralCurve; 3],
    pub illuminations: Vec<SpectralCurve>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl EstimationResult {
    pub fn cost_trace(&self) -> Vec<(usize, f64)> {
        self.trace.iter().map(|r| (r.iteration, r.cost)).collect()
    }

    pub fn final_cost(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.cost)
    }
}

/// Curves reconstructed from solver coefficients.
#[derive(Debug, Clone)]
pub struct ReconstructedCurves {
    pub reflectances: Vec<SpectralCurve>,
    pub primaries: [SpectralCurve; 3],
    pub illuminations: Vec<SpectralCurve>,
}

pub fn reconstruct_result(
    alpha: &DMatrix<f64>,
    beta: &DVector<f64>,
    bases: &ModelBases,
    gains: &[GainTriple],
) -> Result<ReconstructedCurves> {
    if alpha.ncols() != bases.n_reflectance() {
        return Err(Error::Dimension(format!(
            "alpha has {} columns, reflectance basis rank is {}",
            alpha.ncols(),
            bases.n_reflectance()
        )));
    }
    let grid = *bases.reflectance.grid();
    let ill = &bases.illumination;
    let refl = bases.reflectance.vectors() * alpha.transpose();
    let reflectances = refl
        .column_iter()
        .map(|c| SpectralCurve::from_vector(grid, c.into_owned(), CurveRole::Signed))
        .collect::<Result<Vec<_>>>()?;
    let primaries = [
        ill.primary_spd(Primary::Red, beta)?,
        ill.primary_spd(Primary::Green, beta)?,
        ill.primary_spd(Primary::Blue, beta)?,
    ];
    let illuminations = gains.iter().map(|&g| ill.spd(g, beta)).collect::<Result<Vec<_>>>()?;
    Ok(ReconstructedCurves {
        reflectances,
        primaries,
        illuminations,
    })
}

/// Everything about one estimation problem that does not depend on `alpha` or `beta`.
#[derive(Debug, Clone)]
pub struct JointProblem {
    n_illum: usize,
    n_pixels: usize,
    n_r: usize,
    n_b: usize,
    gains: Vec<GainTriple>,
    /// `W_{m,n}` at index `m * N + n`.
    design: Vec<DMatrix<f64>>,
    /// Observations per `(m, n)` as `P`-vectors, same indexing as `design`.
    images: Vec<DVector<f64>>,
    /// `D B_ref`.
    d_ref: DMatrix<f64>,
    /// `D [B_r B_g B_b]`.
    d_ill: DMatrix<f64>,
    /// `sum_n Gamma_n Q Gamma_n` with `Q = (D B^ill)^T (D B^ill)`.
    ill_penalty: DMatrix<f64>,
    /// `(D B_ref)^T (D B_ref)`.
    ref_penalty: DMatrix<f64>,
    /// Block-diagonal `diag(B_r, B_g, B_b)`; `G beta >= 0` is primary non-negativity.
    beta_constraints: DMatrix<f64>,
    ref_basis: DMatrix<f64>,
    anchor_row: DVector<f64>,
    sigma1: f64,
    sigma2: f64,
    parallel: bool,
    line_search: bool,
}

impl JointProblem {
    pub fn new(obs: &ObservationSet, bases: &ModelBases, camera: &CameraSensitivity, config: &EstimationConfig) -> Result<Self> {
        config.validate()?;
        let grid = *bases.reflectance.grid();
        grid.ensure_same(obs.grid())?;
        grid.ensure_same(camera.grid())?;
        let ill = &bases.illumination;
        let (n_illum, n_pixels) = (obs.n_illuminations(), obs.n_pixels());
        let (n_r, n_s) = (bases.n_reflectance(), ill.rank());
        let n_b = 3 * n_s;
        let gains = obs.gains().to_vec();

        let mut design = Vec::with_capacity(CHANNELS * n_illum);
        let mut images = Vec::with_capacity(CHANNELS * n_illum);
        for m in 0..CHANNELS {
            for (n, &g) in gains.iter().enumerate() {
                design.push(build_design_matrix(&bases.reflectance, camera.channel(m), ill, g)?);
                images.push(DVector::from_fn(n_pixels, |p, _| obs.get(m, n, p)));
            }
        }

        let d = SecondDifference::new(&grid);
        let d_ref = d.matrix() * bases.reflectance.vectors();
        let d_ill = d.matrix() * ill.stacked();
        let q = d_ill.transpose() * &d_ill;
        let mut ill_penalty = DMatrix::zeros(n_b, n_b);
        for &g in &gains {
            let gd = gamma_matrix(g, n_s)?.diagonal();
            ill_penalty += DMatrix::from_fn(n_b, n_b, |i, j| gd[i] * q[(i, j)] * gd[j]);
        }
        let ref_penalty = d_ref.transpose() * &d_ref;

        let n_l = grid.len();
        let mut beta_constraints = DMatrix::zeros(3 * n_l, n_b);
        for p in Primary::ALL {
            let k = p.index();
            beta_constraints
                .view_mut((k * n_l, k * n_s), (n_l, n_s))
                .copy_from(ill.basis(p).vectors());
        }

        let anchor_idx = config.anchor_illumination.unwrap_or(n_illum - 1);
        if anchor_idx >= n_illum {
            return Err(Error::InvalidConfig(format!(
                "anchor illumination {anchor_idx} out of range for {n_illum} illuminations"
            )));
        }
        let k_f = grid.index_of(config.lambda_f).ok_or_else(|| {
            Error::InvalidConfig(format!("anchor wavelength {} nm is not on the grid {grid}", config.lambda_f))
        })?;
        let gd = gamma_matrix(gains[anchor_idx], n_s)?.diagonal();
        let anchor_row = ill.stacked().row(k_f).transpose().component_mul(&gd);
        if anchor_row.norm() < ANCHOR_NORM_MIN {
            return Err(Error::InfeasibleAnchor {
                wavelength: config.lambda_f,
            });
        }

        Ok(Self {
            n_illum,
            n_pixels,
            n_r,
            n_b,
            gains,
            design,
            images,
            d_ref,
            d_ill,
            ill_penalty,
            ref_penalty,
            beta_constraints,
            ref_basis: bases.reflectance.vectors().clone(),
            anchor_row,
            sigma1: config.sigma1,
            sigma2: config.sigma2,
            parallel: config.parallel,
            line_search: config.line_search,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn anchor_row(&self) -> &DVector<f64> {
        &self.anchor_row
    }

    fn check(&self, alpha: &DMatrix<f64>, beta: &DVector<f64>) -> Result<()> {
        if alpha.shape() != (self.n_pixels, self.n_r) {
            return Err(Error::Dimension(format!(
                "alpha is {}x{}, expected {}x{}",
                alpha.nrows(),
                alpha.ncols(),
                self.n_pixels,
                self.n_r
            )));
        }
        if beta.len() != self.n_b {
            return Err(Error::Dimension(format!("beta has {} entries, expected {}", beta.len(), self.n_b)));
        }
        Ok(())
    }

    /// `W_{m,n} beta` for every `(m, n)`.
    fn design_times_beta(&self, beta: &DVector<f64>) -> Vec<DVector<f64>> {
        self.design.iter().map(|w| w * beta).collect()
    }

    /// Data and reflectance-smoothness share of the cost owned by pixel `p`.
    fn pixel_share(&self, p: usize, alpha_p: &DVector<f64>, wb: &[DVector<f64>]) -> f64 {
        let np = (self.n_illum * self.n_pixels) as f64;
        let data: f64 = wb
            .iter()
            .zip(&self.images)
            .map(|(v, img)| (img[p] - alpha_p.dot(v)).powi(2))
            .sum();
        data / np + self.sigma2 / self.n_pixels as f64 * (&self.d_ref * alpha_p).norm_squared()
    }

    fn illumination_penalty(&self, beta: &DVector<f64>) -> f64 {
        let n_s = self.n_b / 3;
        let total: f64 = self
            .gains
            .iter()
            .map(|&g| {
                let gb = gamma_matrix(g, n_s).expect("validated gains").apply(beta);
                (&self.d_ill * gb).norm_squared()
            })
            .sum();
        self.sigma1 / self.n_illum as f64 * total
    }

    /// Full regularized cost, summed pixel by pixel in index order.
    pub fn cost(&self, alpha: &DMatrix<f64>, beta: &DVector<f64>) -> Result<f64> {
        self.check(alpha, beta)?;
        let wb = self.design_times_beta(beta);
        let mut total = 0.0;
        for p in 0..self.n_pixels {
            total += self.pixel_share(p, &alpha.row(p).transpose(), &wb);
        }
        Ok(total + self.illumination_penalty(beta))
    }

    /// `(H, f)` of the cost as `beta^T H beta - 2 f^T beta + const` for fixed `alpha`.
    pub fn beta_quadratic(&self, alpha: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let np = (self.n_illum * self.n_pixels) as f64;
        let gram = alpha.transpose() * alpha;
        let mut h = &self.ill_penalty * (self.sigma1 / self.n_illum as f64);
        let mut f = DVector::zeros(self.n_b);
        for (w, img) in self.design.iter().zip(&self.images) {
            h += w.transpose() * &gram * w / np;
            f += w.transpose() * (alpha.transpose() * img) / np;
        }
        (h, f)
    }

    /// Shared Hessian of the per-pixel reflectance problems and the matrix whose
    /// `p`-th column is the linear term of pixel `p`.
    pub fn alpha_quadratic(&self, beta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let np = (self.n_illum * self.n_pixels) as f64;
        let wb = self.design_times_beta(beta);
        let mut h = &self.ref_penalty * (self.sigma2 / self.n_pixels as f64);
        let mut f = DMatrix::zeros(self.n_r, self.n_pixels);
        for (v, img) in wb.iter().zip(&self.images) {
            h += v * v.transpose() / np;
            f += v * img.transpose() / np;
        }
        (h, f)
    }

    fn beta_feasible(&self, beta: &DVector<f64>, reference: &DVector<f64>) -> bool {
        let g = &self.beta_constraints;
        violation(&(g * beta)) <= violation(&(g * reference)).max(FEASIBILITY_SLACK)
            && (self.anchor_row.dot(beta) - 1.0).abs() <= 1e-9
    }

    /// Minimizes over `beta` with `alpha` fixed. A feasible `incumbent` with a
    /// lower cost is returned unchanged.
    pub fn solve_beta(&self, alpha: &DMatrix<f64>, incumbent: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        self.check(alpha, &DVector::zeros(self.n_b))?;
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        let (h, f) = self.beta_quadratic(alpha);
        let qp = ConstrainedQuadratic::new(&h, &self.beta_constraints, Some((&self.anchor_row, 1.0)))?;
        let beta = qp.solve_from(&f, incumbent)?;
        if let Some(old) = incumbent {
            if old.len() == self.n_b
                && self.beta_feasible(old, &beta)
                && quadratic_value(&h, &f, old) < quadratic_value(&h, &f, &beta)
            {
                return Ok(old.clone());
            }
        }
        Ok(beta)
    }

    /// Minimizes over `alpha` with `beta` fixed, one independent problem per pixel.
    /// Pixels whose feasible incumbent row is at least as good keep it.
    pub fn solve_alpha(&self, beta: &DVector<f64>, incumbent: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
        self.check(incumbent.unwrap_or(&DMatrix::zeros(self.n_pixels, self.n_r)), beta)?;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        let (h, f) = self.alpha_quadratic(beta);
        let qp = ConstrainedQuadratic::new(&h, &self.ref_basis, None)?;
        let solve_pixel = |p: usize| -> Result<DVector<f64>> {
            let fp = f.column(p).into_owned();
            let warm = incumbent.map(|a| a.row(p).transpose());
            let new = qp.solve_from(&fp, warm.as_ref())?;
            if let Some(old) = warm {
                let slack = violation(&(&self.ref_basis * &new)).max(FEASIBILITY_SLACK);
                if violation(&(&self.ref_basis * &old)) <= slack && quadratic_value(&h, &fp, &old) < quadratic_value(&h, &fp, &new) {
                    return Ok(old);
                }
            }
            Ok(new)
        };
        let rows: Vec<DVector<f64>> = if self.parallel {
            (0..self.n_pixels).into_par_iter().map(solve_pixel).collect::<Result<_>>()?
        } else {
            (0..self.n_pixels).map(solve_pixel).collect::<Result<_>>()?
        };
        let mut alpha = DMatrix::zeros(self.n_pixels, self.n_r);
        for (p, row) in rows.iter().enumerate() {
            alpha.set_row(p, &row.transpose());
        }
        Ok(alpha)
    }

    fn record(&self, iteration: usize, alpha: &DMatrix<f64>, beta: &DVector<f64>, cost_after_beta: f64, cost: f64) -> IterationRecord {
        let min_spd = (&self.beta_constraints * beta).min();
        let min_reflectance = (&self.ref_basis * alpha.transpose()).min();
        IterationRecord {
            iteration,
            cost_after_beta,
            cost,
            min_spd,
            min_reflectance,
            anchor_value: self.anchor_row.dot(beta),
        }
    }

    /// One extrapolated sweep: `alpha` is pushed `step` outer steps further
    /// along its last change, then both blocks are re-solved from there, so the
    /// trial point is feasible by construction.
    fn extrapolate(
        &self,
        alpha_prev: &DMatrix<f64>,
        alpha: &DMatrix<f64>,
        beta: &DVector<f64>,
        step: f64,
    ) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
        let pushed = alpha + (alpha - alpha_prev) * step;
        let b = self.solve_beta(&pushed, Some(beta))?;
        let a = self.solve_alpha(&b, Some(alpha))?;
        let c = self.cost(&a, &b)?;
        Ok((a, b, c))
    }

    /// Alternates `solve_beta` and `solve_alpha` from `alpha_p = e_1`.
    pub fn run(&self, max_outer_iterations: usize, cost_tolerance: f64) -> Result<(DMatrix<f64>, DVector<f64>, Vec<IterationRecord>, bool)> {
        let mut alpha = DMatrix::zeros(self.n_pixels, self.n_r);
        alpha.column_mut(0).fill(1.0);
        let mut beta: Option<DVector<f64>> = None;
        let mut trace = Vec::new();
        let mut converged = false;
        // a cost this small relative to the data energy is zero for all purposes
        let floor = 1e-24 * self.images.iter().map(|v| v.norm_squared()).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut prev = f64::INFINITY;
        let mut step = 1.0;
        for it in 1..=max_outer_iterations {
            let b = self.solve_beta(&alpha, beta.as_ref())?;
            let cost_after_beta = self.cost(&alpha, &b)?;
            let alpha_prev = alpha.clone();
            alpha = self.solve_alpha(&b, if it == 1 { None } else { Some(&alpha) })?;
            let mut cost = self.cost(&alpha, &b)?;
            let mut b = b;
            if self.line_search && it > 1 {
                let (a2, b2, c2) = self.extrapolate(&alpha_prev, &alpha, &b, step)?;
                if c2 < cost {
                    alpha = a2;
                    b = b2;
                    cost = c2;
                    step = (step * LINE_SEARCH_GROWTH).min(LINE_SEARCH_MAX_STEP);
                } else {
                    step = (step / LINE_SEARCH_GROWTH).max(1.0);
                }
            }

            trace.push(self.record(it, &alpha, &b, cost_after_beta, cost));
            beta = Some(b);
            if cost <= floor || (prev.is_finite() && (prev - cost).abs() < cost_tolerance * prev.abs()) {
                converged = true;
                break;
            }
            prev = cost;
        }
        Ok((alpha, beta.expect("at least one iteration"), trace, converged))
    }
}

/// Per-pixel data and smoothness cost plus the illumination smoothness penalty.
pub fn evaluate_cost(
    obs: &ObservationSet,
    alpha: &DMatrix<f64>,
    beta: &DVector<f64>,
    bases: &ModelBases,
    camera: &CameraSensitivity,
    config: &EstimationConfig,
) -> Result<f64> {
    JointProblem::new(obs, bases, camera, config)?.cost(alpha, beta)
}

pub fn solve_beta(
    obs: &ObservationSet,
    alpha: &DMatrix<f64>,
    bases: &ModelBases,
    camera: &CameraSensitivity,
    config: &EstimationConfig,
) -> Result<DVector<f64>> {
    JointProblem::new(obs, bases, camera, config)?.solve_beta(alpha, None)
}

pub fn solve_alpha(
    obs: &ObservationSet,
    beta: &DVector<f64>,
    bases: &ModelBases,
    camera: &CameraSensitivity,
    config: &EstimationConfig,
) -> Result<DMatrix<f64>> {
    JointProblem::new(obs, bases, camera, config)?.solve_alpha(beta, None)
}

/// Alternating estimation of reflectance and illumination coefficients.
/// Non-convergence within the iteration budget is reported, not an error.
pub fn joint_estimate(
    obs: &ObservationSet,
    bases: &ModelBases,
    camera: &CameraSensitivity,
    config: &EstimationConfig,
) -> Result<EstimationResult> {
    let problem = JointProblem::new(obs, bases, camera, config)?;
    let (alpha, beta, trace, converged) = problem.run(config.max_outer_iterations, config.cost_tolerance)?;
    let curves = reconstruct_result(&alpha, &beta, bases, obs.gains())?;
    log::debug!(
        "joint estimate: {} iterations, cost {:.6e}, converged {converged}",
        trace.len(),
        trace.last().map_or(f64::NAN, |r| r.cost)
    );
    Ok(EstimationResult {
        iterations_used: trace.len(),
        alpha,
        beta,
        gains: obs.gains().to_vec(),
        reflectances: curves.reflectances,
        primaries: curves.primaries,
        illuminations: curves.illuminations,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::SimulationOptions;
    use crate::protocol::BandProtocol;
    use crate::scene::{build_scene, SceneOptions, SyntheticScene};
    use crate::spectrum::WavelengthGrid;

    fn noiseless(protocol: BandProtocol) -> (SyntheticScene, ObservationSet, DVector<f64>, EstimationConfig) {
        let scene = build_scene(&SceneOptions::default()).unwrap();
        let (obs, beta) = scene.capture(protocol, 550.0, &SimulationOptions::default()).unwrap();
        let config = EstimationConfig {
            anchor_illumination: Some(protocol.anchor_illumination()),
            ..Default::default()
        };
        (scene, obs, beta, config)
    }

    #[test]
    fn cost_vanishes_at_truth_without_regularization() {
        let (scene, obs, beta, config) = noiseless(BandProtocol::TwentyOne);
        let config = EstimationConfig { sigma1: 0.0, sigma2: 0.0, ..config };
        let c = evaluate_cost(&obs, &scene.alpha_true, &beta, &scene.bases, &scene.camera, &config).unwrap();
        assert!(c <= 1e-18, "{c}");
        let zero_obs = obs.scaled(0.0).unwrap();
        let za = DMatrix::zeros(18, 6);
        let zb = DVector::zeros(18);
        assert_eq!(evaluate_cost(&zero_obs, &za, &zb, &scene.bases, &scene.camera, &config).unwrap(), 0.0);
    }

    #[test]
    fn beta_recovered_from_true_alpha() {
        let (scene, obs, beta, config) = noiseless(BandProtocol::TwentyOne);
        let config = EstimationConfig { sigma1: 0.0, ..config };
        let est = solve_beta(&obs, &scene.alpha_true, &scene.bases, &scene.camera, &config).unwrap();
        for p in Primary::ALL {
            let a = scene.bases.illumination.primary_spd(p, &est).unwrap();
            let b = scene.bases.illumination.primary_spd(p, &beta).unwrap();
            assert!((a.values() - b.values()).amax() <= 1e-6);
        }
    }

    #[test]
    fn alpha_recovered_from_true_beta() {
        let (scene, obs, beta, config) = noiseless(BandProtocol::Nine);
        let config = EstimationConfig { sigma2: 0.0, ..config };
        let est = solve_alpha(&obs, &beta, &scene.bases, &scene.camera, &config).unwrap();
        let err = (scene.bases.reflectance.vectors() * (est - &scene.alpha_true).transpose()).amax();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn zero_observations_give_zero_alpha() {
        let (scene, obs, beta, config) = noiseless(BandProtocol::Nine);
        let est = solve_alpha(&obs.scaled(0.0).unwrap(), &beta, &scene.bases, &scene.camera, &config).unwrap();
        assert!(est.amax() <= 1e-12);
    }

    #[test]
    fn scalar_beta_matches_closed_form() {
        // one wavelength sample per basis: a 3-sample grid with unit basis columns
        // keeps every quantity scalar
        let grid = WavelengthGrid::new(540.0, 10.0, 3).unwrap();
        let col = |k: usize| {
            let mut v = DMatrix::zeros(3, 1);
            v[(k, 0)] = 1.0;
            v
        };
        let basis = |k: usize, role| BasisSet::from_columns(grid, col(k), None, role).unwrap();
        let ill = IlluminationBases::new(
            basis(1, crate::basis::BasisRole::Primary(Primary::Red)),
            basis(1, crate::basis::BasisRole::Primary(Primary::Green)),
            basis(1, crate::basis::BasisRole::Primary(Primary::Blue)),
        )
        .unwrap();
        let bases = ModelBases::new(basis(1, crate::basis::BasisRole::Reflectance), ill).unwrap();
        let flat = SpectralCurve::constant(grid, 1.0, CurveRole::Sensitivity).unwrap();
        let camera = CameraSensitivity::new([flat.clone(), flat.clone(), flat]).unwrap();
        // a red-only illumination, so beta = (b_r, b_g, b_b) sees only b_r in the data,
        // and the anchor on the same illumination pins b_r = 1/gain
        let gain = 0.5;
        let obs = ObservationSet::new(grid, vec![GainTriple::new(gain, 0.0, 0.0).unwrap()], 1, vec![0.3, 0.4, 0.2]).unwrap();
        let config = EstimationConfig { sigma1: 0.0, sigma2: 0.0, ..Default::default() };
        let alpha = DMatrix::from_element(1, 1, 0.8);
        let beta = solve_beta(&obs, &alpha, &bases, &camera, &config).unwrap();
        assert!((beta[0] - 1.0 / gain).abs() < 1e-12);
        // with beta fixed the reflectance is the scalar least-squares fit, clamped at 0:
        // a = sum(I) / (3 gain b_r) = 0.9 / 3
        let a = solve_alpha(&obs, &beta, &bases, &camera, &config).unwrap();
        assert!((a[(0, 0)] - 0.3).abs() < 1e-12);
        let neg = ObservationSet::new(grid, obs.gains().to_vec(), 1, vec![0.0; 3]).unwrap();
        assert!(solve_alpha(&neg, &beta, &bases, &camera, &config).unwrap()[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn extrapolation_descends_and_stays_feasible() {
        let (scene, obs, _, config) = noiseless(BandProtocol::TwentyOne);
        let run = |line_search: bool| {
            let config = EstimationConfig { line_search, max_outer_iterations: 200, ..config.clone() };
            joint_estimate(&obs, &scene.bases, &scene.camera, &config).unwrap()
        };
        let (plain, fast) = (run(false), run(true));
        let mut prev = f64::INFINITY;
        for r in &fast.trace {
            assert!(r.cost_after_beta <= prev + 1e-12 && r.cost <= r.cost_after_beta + 1e-12);
            assert!(r.min_spd >= -1e-9 && r.min_reflectance >= -1e-9);
            assert!((r.anchor_value - 1.0).abs() < 1e-9);
            prev = r.cost;
        }
        assert!(fast.final_cost() < plain.final_cost());
    }
}
