//! Discretized image formation for a projector-camera setup.
//!
//! A pixel value is `c_m^T diag(s_n) r_p`: the camera channel sensitivity,
//! the projected illumination SPD and the surface reflectance multiplied
//! sample-wise and summed. Illuminations are gain-weighted sums of the three
//! primaries, each primary living in its own basis.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::{BasisRole, BasisSet, Primary};
use crate::error::{Error, Result};
use crate::spectrum::{CurveRole, SpectralCurve, WavelengthGrid};

/// Number of camera channels.
pub const CHANNELS: usize = 3;

#[derive(Debug, Clone)]
pub struct CameraSensitivity {
    channels: [SpectralCurve; CHANNELS],
}

impl CameraSensitivity {
    pub fn new(channels: [SpectralCurve; CHANNELS]) -> Result<Self> {
        let grid = *channels[0].grid();
        let channels = channels.map(|c| c.with_role(CurveRole::Sensitivity));
        let [a, b, c] = channels;
        let channels = [a?, b?, c?];
        for ch in &channels[1..] {
            grid.ensure_same(ch.grid())?;
        }
        Ok(Self { channels })
    }

    /// Gaussian channels peaking at 600, 540 and 460 nm with 50 nm standard deviation.
    pub fn gaussian(grid: &WavelengthGrid) -> Self {
        Self::gaussian_with(grid, [600.0, 540.0, 460.0], 50.0)
    }

    /// Gaussian channels with the given red, green and blue peaks and a shared width (nm).
    pub fn gaussian_with(grid: &WavelengthGrid, peaks: [f64; CHANNELS], width_nm: f64) -> Self {
        let ch = |peak: f64| {
            SpectralCurve::from_fn(*grid, CurveRole::Sensitivity, |nm| {
                (-0.5 * ((nm - peak) / width_nm).powi(2)).exp()
            })
            .expect("gaussian is non-negative")
        };
        Self {
            channels: peaks.map(ch),
        }
    }

    pub fn grid(&self) -> &WavelengthGrid {
        self.channels[0].grid()
    }

    pub fn channel(&self, m: usize) -> &SpectralCurve {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[SpectralCurve; CHANNELS] {
        &self.channels
    }
}

/// Mixing weights of the red, green and blue primaries for one illumination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainTriple {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl GainTriple {
    pub const RED: GainTriple = GainTriple { r: 1.0, g: 0.0, b: 0.0 };
    pub const GREEN: GainTriple = GainTriple { r: 0.0, g: 1.0, b: 0.0 };
    pub const BLUE: GainTriple = GainTriple { r: 0.0, g: 0.0, b: 1.0 };
    pub const CYAN: GainTriple = GainTriple { r: 0.0, g: 1.0, b: 1.0 };
    pub const MAGENTA: GainTriple = GainTriple { r: 1.0, g: 0.0, b: 1.0 };
    pub const YELLOW: GainTriple = GainTriple { r: 1.0, g: 1.0, b: 0.0 };
    pub const WHITE: GainTriple = GainTriple { r: 1.0, g: 1.0, b: 1.0 };

    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        if [r, g, b].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidGain(r, g, b));
        }
        Ok(Self { r, g, b })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn get(&self, p: Primary) -> f64 {
        self.as_array()[p.index()]
    }

    pub fn is_zero(&self) -> bool {
        self.r == 0.0 && self.g == 0.0 && self.b == 0.0
    }

    /// The unit primary this triple selects, if it is exactly one.
    pub fn unit_primary(&self) -> Option<Primary> {
        match self.as_array() {
            [1.0, 0.0, 0.0] => Some(Primary::Red),
            [0.0, 1.0, 0.0] => Some(Primary::Green),
            [0.0, 0.0, 1.0] => Some(Primary::Blue),
            _ => None,
        }
    }
}

/// Block-diagonal `diag(g_r I, g_g I, g_b I)` of size `3 n_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMatrix {
    gains: GainTriple,
    n_s: usize,
}

impl GainMatrix {
    pub fn gains(&self) -> GainTriple {
        self.gains
    }

    pub fn block_size(&self) -> usize {
        self.n_s
    }

    pub fn dim(&self) -> usize {
        3 * self.n_s
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let g = self.gains.as_array();
        DVector::from_fn(self.dim(), |i, _| g[i / self.n_s])
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diagonal())
    }

    /// `Gamma(g) Gamma(g')`, which is again block-diagonal.
    pub fn compose(&self, other: &GainMatrix) -> Result<GainMatrix> {
        if self.n_s != other.n_s {
            return Err(Error::Dimension("gain matrices of different block size".into()));
        }
        let (a, b) = (self.gains, other.gains);
        Ok(GainMatrix {
            gains: GainTriple::new(a.r * b.r, a.g * b.g, a.b * b.b)?,
            n_s: self.n_s,
        })
    }

    /// `Gamma(g) v` without materializing the matrix.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_mul(&self.diagonal())
    }
}

pub fn gamma_matrix(g: GainTriple, n_s: usize) -> Result<GainMatrix> {
    if n_s == 0 {
        return Err(Error::Dimension("illumination basis rank must be positive".into()));
    }
    let g = GainTriple::new(g.r, g.g, g.b)?;
    Ok(GainMatrix { gains: g, n_s })
}

/// The three per-primary illumination bases, sharing a grid and a rank.
#[derive(Debug, Clone)]
pub struct IlluminationBases {
    bases: [BasisSet; 3],
    stacked: DMatrix<f64>,
}

impl IlluminationBases {
    pub fn new(red: BasisSet, green: BasisSet, blue: BasisSet) -> Result<Self> {
        let grid = *red.grid();
        let rank = red.rank();
        for b in [&green, &blue] {
            grid.ensure_same(b.grid())?;
            if b.rank() != rank {
                return Err(Error::Dimension(format!(
                    "illumination bases have ranks {} and {}",
                    rank,
                    b.rank()
                )));
            }
        }
        let bases = [
            red.with_role(BasisRole::Primary(Primary::Red)),
            green.with_role(BasisRole::Primary(Primary::Green)),
            blue.with_role(BasisRole::Primary(Primary::Blue)),
        ];
        let mut stacked = DMatrix::zeros(grid.len(), 3 * rank);
        for (i, b) in bases.iter().enumerate() {
            stacked.columns_mut(i * rank, rank).copy_from(b.vectors());
        }
        Ok(Self { bases, stacked })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        self.bases[0].grid()
    }

    /// Per-primary rank `N_s`.
    pub fn rank(&self) -> usize {
        self.bases[0].rank()
    }

    /// Length of the stacked coefficient vector, `3 N_s`.
    pub fn dim(&self) -> usize {
        3 * self.rank()
    }

    pub fn basis(&self, p: Primary) -> &BasisSet {
        &self.bases[p.index()]
    }

    /// `[B_r, B_g, B_b]`, shape `N_lambda x 3 N_s`.
    pub fn stacked(&self) -> &DMatrix<f64> {
        &self.stacked
    }

    pub fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "beta has {} entries, expected {}",
                beta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `B_p beta_p` for one primary.
    pub fn primary_spd(&self, p: Primary, beta: &DVector<f64>) -> Result<SpectralCurve> {
        self.check_beta(beta)?;
        let k = self.rank();
        let part = beta.rows(p.index() * k, k);
        SpectralCurve::from_vector(*self.grid(), self.basis(p).vectors() * part, CurveRole::Signed)
    }

    /// `B^ill Gamma(g) beta`.
    pub fn spd(&self, g: GainTriple, beta: &DVector<f64>) -> Result<SpectralCurve> {
        self.check_beta(beta)?;
        let gm = gamma_matrix(g, self.rank())?;
        SpectralCurve::from_vector(*self.grid(), &self.stacked * gm.apply(beta), CurveRole::Signed)
    }
}

pub fn illumination_spd(bases: &IlluminationBases, g: GainTriple, beta: &DVector<f64>) -> Result<SpectralCurve> {
    bases.spd(g, beta)
}

/// `sum_lambda c(lambda) s(lambda) r(lambda)`, no wavelength-step factor.
pub fn form_pixel(c: &SpectralCurve, s: &SpectralCurve, r: &SpectralCurve) -> Result<f64> {
    c.grid().ensure_same(s.grid())?;
    c.grid().ensure_same(r.grid())?;
    Ok(c.values()
        .iter()
        .zip(s.values().iter())
        .zip(r.values().iter())
        .map(|((c, s), r)| c * s * r)
        .sum())
}

/// `W_{m,n} = B_ref^T diag(c_m) B^ill Gamma(g)`, so that `alpha^T W beta` is the pixel value.
pub fn build_design_matrix(
    b_ref: &BasisSet,
    c_m: &SpectralCurve,
    bases_ill: &IlluminationBases,
    g: GainTriple,
) -> Result<DMatrix<f64>> {
    b_ref.grid().ensure_same(c_m.grid())?;
    b_ref.grid().ensure_same(bases_ill.grid())?;
    let gm = gamma_matrix(g, bases_ill.rank())?;
    let mut weighted = bases_ill.stacked().clone();
    for (mut row, c) in weighted.row_iter_mut().zip(c_m.values().iter()) {
        row *= *c;
    }
    let mut w = b_ref.vectors().transpose() * weighted;
    for (mut col, gain) in w.column_iter_mut().zip(gm.diagonal().iter()) {
        col *= *gain;
    }
    Ok(w)
}

/// Pixel tensor `I[m, n, p]` with the nominal gains of each illumination.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    grid: WavelengthGrid,
    gains: Vec<GainTriple>,
    n_pixels: usize,
    values: Vec<f64>,
}

impl ObservationSet {
    /// `values` is laid out channel-major: index `(m * N + n) * P + p`.
    pub fn new(grid: WavelengthGrid, gains: Vec<GainTriple>, n_pixels: usize, values: Vec<f64>) -> Result<Self> {
        if gains.is_empty() || n_pixels == 0 {
            return Err(Error::Dimension("observations need N >= 1 and P >= 1".into()));
        }
        let expected = CHANNELS * gains.len() * n_pixels;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "{} observation values, expected {expected}",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Parse("observations must be non-negative".into()));
        }
        Ok(Self {
            grid,
            gains,
            n_pixels,
            values,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn gains(&self) -> &[GainTriple] {
        &self.gains
    }

    pub fn n_illuminations(&self) -> usize {
        self.gains.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index(&self, m: usize, n: usize, p: usize) -> usize {
        (m * self.gains.len() + n) * self.n_pixels + p
    }

    pub fn get(&self, m: usize, n: usize, p: usize) -> f64 {
        self.values[self.index(m, n, p)]
    }

    /// Image under illumination `n` as a `3 x P` matrix.
    pub fn image(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(CHANNELS, self.n_pixels, |m, p| self.get(m, n, p))
    }

    /// Same pixels with replaced gains (for example pre-estimated ones).
    pub fn with_gains(&self, gains: Vec<GainTriple>) -> Result<Self> {
        if gains.len() != self.gains.len() {
            return Err(Error::Dimension(format!(
                "{} gains for {} illuminations",
                gains.len(),
                self.gains.len()
            )));
        }
        Ok(Self {
            gains,
            ..self.clone()
        })
    }

    /// Keeps the listed illuminations, in the given order.
    pub fn select_illuminations(&self, which: &[usize]) -> Result<Self> {
        if which.is_empty() || which.iter().any(|&n| n >= self.gains.len()) {
            return Err(Error::Dimension("illumination selection out of range".into()));
        }
        let gains: Vec<GainTriple> = which.iter().map(|&n| self.gains[n]).collect();
        let mut values = Vec::with_capacity(CHANNELS * which.len() * self.n_pixels);
        for m in 0..CHANNELS {
            for &n in which {
                values.extend((0..self.n_pixels).map(|p| self.get(m, n, p)));
            }
        }
        Self::new(self.grid, gains, self.n_pixels, values)
    }

    /// Every value multiplied by `k >= 0`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(
            self.grid,
            self.gains.clone(),
            self.n_pixels,
            self.values.iter().map(|v| v * k).collect(),
        )
    }
}

/// Knobs of the synthetic capture.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationOptions {
    /// Noise standard deviation as a fraction of the mean clean signal.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Per-primary exponent applied to input gains before mixing, modelling a
    /// projector whose output is not linear in its input gains. `None` is linear.
    pub gain_distortion: Option<[f64; 3]>,
}

/// Gains the projector actually applies for nominal input gains `g`.
pub fn effective_gains(g: GainTriple, distortion: Option<[f64; 3]>) -> GainTriple {
    match distortion {
        None => g,
        Some(e) => GainTriple {
            r: g.r.powf(e[0]),
            g: g.g.powf(e[1]),
            b: g.b.powf(e[2]),
        },
    }
}

/// Synthetic captures from basis coefficients `beta_true`.
pub fn simulate_observations(
    camera: &CameraSensitivity,
    bases_ill: &IlluminationBases,
    beta_true: &DVector<f64>,
    gains: &[GainTriple],
    reflectances: &[SpectralCurve],
    opts: &SimulationOptions,
) -> Result<ObservationSet> {
    let primaries = [
        bases_ill.primary_spd(Primary::Red, beta_true)?,
        bases_ill.primary_spd(Primary::Green, beta_true)?,
        bases_ill.primary_spd(Primary::Blue, beta_true)?,
    ];
    simulate_from_primaries(camera, &primaries, gains, reflectances, opts)
}

/// Synthetic captures from explicit primary SPD curves.
///
/// Noise is Gaussian with standard deviation `noise_sigma * mean(clean)`,
/// clamped at zero. Each pixel draws from its own stream derived from the
/// seed and the pixel index.
pub fn simulate_from_primaries(
    camera: &CameraSensitivity,
    primaries: &[SpectralCurve; 3],
    gains: &[GainTriple],
    reflectances: &[SpectralCurve],
    opts: &SimulationOptions,
) -> Result<ObservationSet> {
    if !(opts.noise_sigma >= 0.0 && opts.noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise sigma {} must be >= 0", opts.noise_sigma)));
    }
    if gains.is_empty() || reflectances.is_empty() {
        return Err(Error::Dimension("need at least one illumination and one pixel".into()));
    }
    let grid = *camera.grid();
    for s in primaries {
        grid.ensure_same(s.grid())?;
    }
    for r in reflectances {
        grid.ensure_same(r.grid())?;
    }

    let spds: Vec<SpectralCurve> = gains
        .iter()
        .map(|&g| {
            let g = effective_gains(GainTriple::new(g.r, g.g, g.b)?, opts.gain_distortion);
            let v = primaries[0].values() * g.r + primaries[1].values() * g.g + primaries[2].values() * g.b;
            SpectralCurve::from_vector(grid, v, CurveRole::Signed)
        })
        .collect::<Result<_>>()?;

    let (n_illum, n_pix) = (gains.len(), reflectances.len());
    let mut values = vec![0.0; CHANNELS * n_illum * n_pix];
    for m in 0..CHANNELS {
        for (n, s) in spds.iter().enumerate() {
            for (p, r) in reflectances.iter().enumerate() {
                values[(m * n_illum + n) * n_pix + p] = form_pixel(camera.channel(m), s, r)?;
            }
        }
    }

    if opts.noise_sigma > 0.0 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd = opts.noise_sigma * mean;
        for p in 0..n_pix {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(p as u64);
            for m in 0..CHANNELS {
                for n in 0..n_illum {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = &mut values[(m * n_illum + n) * n_pix + p];
                    *v += sd * z;
                }
            }
        }
    }
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    ObservationSet::new(grid, gains.to_vec(), n_pix, values)
}
