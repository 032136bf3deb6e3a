//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the solver internals: costs are summed literally
//! over wavelengths, quadratic models are recovered from cost evaluations by
//! polarization, and constrained minima come from enumerating active sets.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use projspec::basis::{
    fit_basis, generate_surrogate_reflectance_database, generate_surrogate_spd_database, BasisRole, Primary,
};
use projspec::forward::{
    simulate_from_primaries, CameraSensitivity, GainTriple, IlluminationBases, ObservationSet, SimulationOptions,
};
use projspec::solver::{EstimationConfig, ModelBases};
use projspec::spectrum::{SpectralCurve, WavelengthGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub obs: ObservationSet,
    pub bases: ModelBases,
    pub camera: CameraSensitivity,
    pub config: EstimationConfig,
}

/// Random gain triple with every component in `[0, 1]` and at least one well above zero.
pub fn random_gains(rng: &mut ChaCha8Rng) -> GainTriple {
    loop {
        let g = GainTriple::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))
            .unwrap();
        if g.r.max(g.g).max(g.b) > 0.2 {
            return g;
        }
    }
}

/// Observations of surrogate surfaces under a surrogate projector (not
/// necessarily in the basis span) through a random Gaussian camera.
pub fn random_instance(
    seed: u64,
    grid: WavelengthGrid,
    n_pixels: usize,
    n_r: usize,
    n_s: usize,
    gains: Vec<GainTriple>,
    noise_sigma: f64,
) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refl_db = generate_surrogate_reflectance_database(&grid, seed, 30);
    let b_ref = fit_basis(&refl_db, n_r, BasisRole::Reflectance).unwrap();
    let spd_db = generate_surrogate_spd_database(&grid, seed, 13);
    let fit = |p: Primary| fit_basis(spd_db.primary(p), n_s, BasisRole::Primary(p)).unwrap();
    let ill = IlluminationBases::new(fit(Primary::Red), fit(Primary::Green), fit(Primary::Blue)).unwrap();

    let peaks = [rng.random_range(580.0..630.0), rng.random_range(510.0..560.0), rng.random_range(440.0..480.0)];
    let camera = CameraSensitivity::gaussian_with(&grid, peaks, rng.random_range(30.0..60.0));
    let which = rng.random_range(0..13);
    let primaries = Primary::ALL.map(|p| spd_db.primary(p).curves()[which].clone());
    let surfaces: Vec<SpectralCurve> =
        generate_surrogate_reflectance_database(&grid, seed ^ 0xabcdef, n_pixels).curves().to_vec();
    let opts = SimulationOptions {
        noise_sigma,
        seed,
        gain_distortion: None,
    };
    let obs = simulate_from_primaries(&camera, &primaries, &gains, &surfaces, &opts).unwrap();
    Instance {
        obs,
        bases: ModelBases::new(b_ref, ill).unwrap(),
        camera,
        config: EstimationConfig::default(),
    }
}

/// The cost summed term by term over channels, illuminations, pixels and wavelengths.
pub fn literal_cost(
    obs: &ObservationSet,
    alpha: &DMatrix<f64>,
    beta: &DVector<f64>,
    bases: &ModelBases,
    camera: &CameraSensitivity,
    sigma1: f64,
    sigma2: f64,
) -> f64 {
    let n_l = obs.grid().len();
    let step = obs.grid().step();
    let n_illum = obs.n_illuminations();
    let n_pix = obs.n_pixels();
    let n_s = bases.illumination.rank();
    let b_ref = bases.reflectance.vectors();

    let spd = |g: GainTriple, l: usize| -> f64 {
        let mut s = 0.0;
        for p in Primary::ALL {
            let b = bases.illumination.basis(p).vectors();
            for j in 0..n_s {
                s += g.get(p) * b[(l, j)] * beta[p.index() * n_s + j];
            }
        }
        s
    };
    let refl = |p: usize, l: usize| -> f64 { (0..alpha.ncols()).map(|j| b_ref[(l, j)] * alpha[(p, j)]).sum() };
    let second = |f: &dyn Fn(usize) -> f64| -> f64 {
        (1..n_l - 1)
            .map(|l| ((f(l - 1) - 2.0 * f(l) + f(l + 1)) / (step * step)).powi(2))
            .sum()
    };

    let mut data = 0.0;
    for m in 0..3 {
        for n in 0..n_illum {
            let g = obs.gains()[n];
            for p in 0..n_pix {
                let mut predicted = 0.0;
                for l in 0..n_l {
                    predicted += camera.channel(m).at(l) * spd(g, l) * refl(p, l);
                }
                data += (obs.get(m, n, p) - predicted).powi(2);
            }
        }
    }
    let ill_smooth: f64 = obs.gains().iter().map(|&g| second(&|l| spd(g, l))).sum();
    let ref_smooth: f64 = (0..n_pix).map(|p| second(&|l| refl(p, l))).sum();
    data / (n_illum * n_pix) as f64 + sigma1 / n_illum as f64 * ill_smooth + sigma2 / n_pix as f64 * ref_smooth
}

/// `(H, f, c)` with `q(x) = x^T H x - 2 f^T x + c` for a function known to be quadratic.
pub fn polarize(n: usize, q: impl Fn(&DVector<f64>) -> f64) -> (DMatrix<f64>, DVector<f64>, f64) {
    let e = |i: usize| {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    };
    let c = q(&DVector::zeros(n));
    let plus: Vec<f64> = (0..n).map(|i| q(&e(i))).collect();
    let minus: Vec<f64> = (0..n).map(|i| q(&-e(i))).collect();
    let mut h = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    for i in 0..n {
        h[(i, i)] = (plus[i] + minus[i] - 2.0 * c) / 2.0;
        f[i] = (minus[i] - plus[i]) / 4.0;
        for j in 0..i {
            let v = (q(&(e(i) + e(j))) - plus[i] - plus[j] + c) / 2.0;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    (h, f, c)
}

pub fn quad(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * h * x)[0] - 2.0 * f.dot(x)
}

/// Minimum of `x^T H x - 2 f^T x` over `G x >= 0`, `a^T x = d` by trying every
/// working set of at most `n` rows and keeping the best feasible stationary point.
pub fn brute_force_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    eq: Option<(&DVector<f64>, f64)>,
) -> Option<(f64, DVector<f64>)> {
    let n = h.nrows();
    let m = g.nrows();
    let n_eq = eq.is_some() as usize;
    let scale = h.amax().max(f.amax()).max(1.0);
    let mut best: Option<(f64, DVector<f64>)> = None;

    let mut consider = |subset: &[usize]| {
        let k = subset.len() + n_eq;
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(h * 2.0));
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(f * 2.0));
        let mut row = n;
        if let Some((a, d)) = eq {
            kkt.view_mut((row, 0), (1, n)).copy_from(&a.transpose());
            kkt.view_mut((0, row), (n, 1)).copy_from(a);
            rhs[row] = d;
            row += 1;
        }
        for &i in subset {
            kkt.view_mut((row, 0), (1, n)).copy_from(&g.row(i));
            kkt.view_mut((0, row), (n, 1)).copy_from(&g.row(i).transpose());
            row += 1;
        }
        let svd = kkt.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let Ok(sol) = svd.solve(&rhs, tol) else { return };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * scale {
            return;
        }
        let x = sol.rows(0, n).into_owned();
        let gx = g * &x;
        let feas_scale = 1e-9 * x.amax().max(1.0);
        // slack proportional to each row's length, so short rows are not free to violate
        if gx.iter().zip(g.row_iter()).any(|(&v, r)| v < -feas_scale * r.norm()) {
            return;
        }
        if let Some((a, d)) = eq {
            if (a.dot(&x) - d).abs() > feas_scale {
                return;
            }
        }
        let val = quad(h, f, &x);
        if best.as_ref().map_or(true, |(b, _)| val < *b) {
            best = Some((val, x));
        }
    };

    let limit = n.saturating_sub(n_eq).min(m);
    let mut subset = Vec::new();
    enumerate(0, m, limit, &mut subset, &mut consider);
    best
}

fn enumerate(start: usize, m: usize, limit: usize, subset: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    visit(subset);
    if subset.len() == limit {
        return;
    }
    for i in start..m {
        subset.push(i);
        enumerate(i + 1, m, limit, subset, visit);
        subset.pop();
    }
}

/// Block-diagonal primary basis matrix: rows are SPD samples of red, green, blue.
pub fn primary_constraints(bases: &ModelBases) -> DMatrix<f64> {
    let n_l = bases.reflectance.grid().len();
    let n_s = bases.illumination.rank();
    let mut g = DMatrix::zeros(3 * n_l, 3 * n_s);
    for p in Primary::ALL {
        let k = p.index();
        g.view_mut((k * n_l, k * n_s), (n_l, n_s)).copy_from(bases.illumination.basis(p).vectors());
    }
    g
}

/// Linear map `beta -> s_anchor(lambda_f)` sample by sample.
pub fn anchor_row(bases: &ModelBases, gains: GainTriple, lambda_f: f64) -> DVector<f64> {
    let l = bases.reflectance.grid().index_of(lambda_f).unwrap();
    let n_s = bases.illumination.rank();
    DVector::from_fn(3 * n_s, |i, _| {
        let p = Primary::ALL[i / n_s];
        gains.get(p) * bases.illumination.basis(p).vectors()[(l, i % n_s)]
    })
}

pub fn rmse(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}
