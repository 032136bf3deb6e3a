//! Synthetic curve databases standing in for measured projector SPDs and
//! reflectance collections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CurveDatabase, Primary};
use crate::spectrum::{CurveRole, SpectralCurve, WavelengthGrid};

/// Mercury emission lines assigned to each primary, in nm.
const MERCURY_LINES: [(Primary, &[f64]); 3] = [
    (Primary::Red, &[578.0]),
    (Primary::Green, &[546.0]),
    (Primary::Blue, &[436.0, 405.0]),
];

const LINE_WIDTH_NM: f64 = 6.0;

#[derive(Debug, Clone, Copy)]
pub struct SurrogateSpdOptions {
    pub n_projectors: usize,
    /// Number of shared spectral shapes per primary; the database rank is at most this.
    pub latent_shapes: usize,
    /// Standard deviation (nm) of per-projector lobe-centre jitter. Zero keeps the rank exact.
    pub center_jitter_nm: f64,
}

impl Default for SurrogateSpdOptions {
    fn default() -> Self {
        Self {
            n_projectors: 13,
            latent_shapes: 6,
            center_jitter_nm: 0.0,
        }
    }
}

/// One database per primary; curve `i` of every primary belongs to the same projector.
#[derive(Debug, Clone)]
pub struct SurrogateSpdDatabase {
    pub red: CurveDatabase,
    pub green: CurveDatabase,
    pub blue: CurveDatabase,
}

impl SurrogateSpdDatabase {
    pub fn primary(&self, p: Primary) -> &CurveDatabase {
        match p {
            Primary::Red => &self.red,
            Primary::Green => &self.green,
            Primary::Blue => &self.blue,
        }
    }
}

fn lobe_range(p: Primary) -> (f64, f64) {
    match p {
        Primary::Red => (580.0, 680.0),
        Primary::Green => (480.0, 580.0),
        Primary::Blue => (420.0, 500.0),
    }
}

fn gaussian(nm: f64, center: f64, width: f64) -> f64 {
    let z = (nm - center) / width;
    (-0.5 * z * z).exp()
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    center: f64,
    width: f64,
    broad: bool,
}

/// Deterministic surrogate projector database with six latent shapes per primary.
pub fn generate_surrogate_spd_database(grid: &WavelengthGrid, seed: u64, n_projectors: usize) -> SurrogateSpdDatabase {
    generate_surrogate_spd_database_with(
        grid,
        seed,
        SurrogateSpdOptions {
            n_projectors,
            ..Default::default()
        },
    )
}

pub fn generate_surrogate_spd_database_with(
    grid: &WavelengthGrid,
    seed: u64,
    opts: SurrogateSpdOptions,
) -> SurrogateSpdDatabase {
    assert!(opts.n_projectors >= 1, "need at least one projector");
    assert!(opts.latent_shapes >= 1, "need at least one latent shape");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let shapes: Vec<Vec<Shape>> = MERCURY_LINES
        .iter()
        .map(|&(p, lines)| {
            let n_lines = lines.len().min(opts.latent_shapes - 1);
            let (lo, hi) = lobe_range(p);
            let mut s: Vec<Shape> = (0..opts.latent_shapes - n_lines)
                .map(|_| Shape {
                    center: rng.random_range(lo..hi),
                    width: rng.random_range(15.0..40.0),
                    broad: true,
                })
                .collect();
            s.extend(lines[..n_lines].iter().map(|&c| Shape {
                center: c,
                width: LINE_WIDTH_NM,
                broad: false,
            }));
            s
        })
        .collect();

    let jitter = Normal::new(0.0, opts.center_jitter_nm.max(0.0)).expect("finite jitter");
    let labels: Vec<String> = (1..=opts.n_projectors).map(|i| format!("projector-{i:02}")).collect();
    let mut per_primary: Vec<Vec<SpectralCurve>> = vec![Vec::new(); 3];
    for _ in 0..opts.n_projectors {
        for (pi, primary_shapes) in shapes.iter().enumerate() {
            let terms: Vec<(f64, f64, f64)> = primary_shapes
                .iter()
                .map(|sh| {
                    let weight = if sh.broad {
                        rng.random_range(0.05..1.0)
                    } else {
                        rng.random_range(0.0..0.8)
                    };
                    let shift = if sh.broad && opts.center_jitter_nm > 0.0 {
                        jitter.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (weight, sh.center + shift, sh.width)
                })
                .collect();
            let raw: Vec<f64> = grid
                .wavelengths()
                .map(|nm| terms.iter().map(|&(w, c, s)| w * gaussian(nm, c, s)).sum())
                .collect();
            let peak = raw.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let curve = SpectralCurve::new(*grid, raw.iter().map(|v| v / peak).collect(), CurveRole::Spd)
                .expect("non-negative mixture");
            per_primary[pi].push(curve);
        }
    }
    let mut it = per_primary.into_iter();
    let mut next = || CurveDatabase::new(it.next().unwrap(), labels.clone()).expect("non-empty database");
    SurrogateSpdDatabase {
        red: next(),
        green: next(),
        blue: next(),
    }
}

/// Smooth, Munsell-like synthetic reflectances in `[0.01, 0.98]`.
pub fn generate_surrogate_reflectance_database(grid: &WavelengthGrid, seed: u64, n: usize) -> CurveDatabase {
    assert!(n >= 1, "need at least one curve");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5ec7);
    let curves = (0..n)
        .map(|_| {
            let base = rng.random_range(0.03..0.25);
            let bumps: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.0..0.55),
                        rng.random_range(380.0..720.0),
                        rng.random_range(25.0..80.0),
                    )
                })
                .collect();
            let edge = rng.random_range(-0.25..0.6);
            let edge_at = rng.random_range(450.0..650.0);
            let edge_width = rng.random_range(8.0..30.0);
            SpectralCurve::from_fn(*grid, CurveRole::Reflectance, |nm| {
                let mut v = base + edge / (1.0 + (-(nm - edge_at) / edge_width).exp());
                for &(a, c, w) in &bumps {
                    v += a * gaussian(nm, c, w);
                }
                v.clamp(0.01, 0.98)
            })
            .expect("clamped reflectance is valid")
        })
        .collect();
    let labels = (1..=n).map(|i| format!("patch-{i:03}")).collect();
    CurveDatabase::new(curves, labels).expect("non-empty database")
}
