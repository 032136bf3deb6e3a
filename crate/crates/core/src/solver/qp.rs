//! Small dense convex quadratic programs
//!
//! ```text
//! minimize  x^T H x - 2 f^T x   subject to  G x >= 0,  a^T x = d (optional)
//! ```
//!
//! Solved by a primal active-set method: the equality stays in every working
//! set and is eliminated through the null space of the working constraints.
//! `H` may be singular. Iterates stay feasible and the objective never
//! increases, so a feasible warm start is never made worse. A feasible start
//! for the equality-constrained case comes from a least-distance program
//! solved by non-negative least squares.

use nalgebra::{DMatrix, DVector};

use super::nnls::nnls;
use crate::error::{Error, Result};

/// Reduced-Hessian eigenvalues below this fraction of the largest count as zero curvature.
const CURVATURE_TOL: f64 = 1e-14;

/// Constraint values below this multiple of `|g_i| |x|` are treated as zero.
const ACTIVE_TOL: f64 = 1e-14;

/// Constraint rows shorter than this fraction of the longest are dropped as vacuous.
const NEGLIGIBLE_ROW: f64 = 1e-10;

/// Relative constraint violation still accepted for a warm start.
const START_TOL: f64 = 1e-12;

/// Objective `x^T H x - 2 f^T x`.
pub fn quadratic_value(h: &DMatrix<f64>, f: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * h * x)[0] - 2.0 * f.dot(x)
}

/// One-shot solve of `min x^T H x - 2 f^T x` s.t. `G x >= 0` and optionally `a^T x = d`.
pub fn solve_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    equality: Option<(&DVector<f64>, f64)>,
) -> Result<DVector<f64>> {
    ConstrainedQuadratic::new(h, g, equality)?.solve(f)
}

/// A QP whose Hessian and constraints are fixed; only the linear term changes.
#[derive(Debug, Clone)]
pub struct ConstrainedQuadratic {
    hessian: DMatrix<f64>,
    constraints: DMatrix<f64>,
    equality: Option<(DVector<f64>, f64)>,
    /// Feasible point used when no usable warm start is given.
    start: DVector<f64>,
    max_iterations: usize,
}

impl ConstrainedQuadratic {
    pub fn new(h: &DMatrix<f64>, g: &DMatrix<f64>, equality: Option<(&DVector<f64>, f64)>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n || g.ncols() != n {
            return Err(Error::Dimension(format!(
                "QP with {}x{} Hessian and {}x{} constraints",
                h.nrows(),
                h.ncols(),
                g.nrows(),
                g.ncols()
            )));
        }
        let equality = match equality {
            None => None,
            Some((a, d)) => {
                if a.len() != n || a.norm() == 0.0 || !a.norm().is_finite() || !d.is_finite() {
                    return Err(Error::Infeasible);
                }
                Some((a.clone(), d))
            }
        };
        let g = normalized_rows(g);
        let m = g.nrows();
        let start = match &equality {
            None => DVector::zeros(n),
            Some((a, d)) => feasible_point(&g, a, *d)?,
        };
        Ok(Self {
            hessian: (h + h.transpose()) * 0.5,
            constraints: g,
            equality,
            start,
            max_iterations: 50 * (n + m) + 100,
        })
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn is_feasible(&self, x: &DVector<f64>) -> bool {
        let gx = &self.constraints * x;
        let scale = row_scale(&self.constraints, x);
        let ok_ineq = gx.iter().all(|&v| v >= -START_TOL * scale);
        let ok_eq = self
            .equality
            .as_ref()
            .map_or(true, |(a, d)| (a.dot(x) - d).abs() <= START_TOL * d.abs().max(a.norm() * x.norm()).max(1.0));
        x.len() == self.dim() && ok_ineq && ok_eq
    }

    pub fn solve(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve_from(f, None)
    }

    /// Solves starting from `warm` when it is feasible.
    pub fn solve_from(&self, f: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        if f.len() != self.dim() {
            return Err(Error::Dimension("QP linear term length".into()));
        }
        let x0 = match warm {
            Some(w) if self.is_feasible(w) => w.clone(),
            _ => self.start.clone(),
        };
        self.active_set(f, x0)
    }

    fn active_set(&self, f: &DVector<f64>, mut x: DVector<f64>) -> Result<DVector<f64>> {
        let (h, g) = (&self.hessian, &self.constraints);
        let (n, m) = (self.dim(), g.nrows());
        let h_abs = h.abs();
        let mut working: Vec<usize> = Vec::new();
        let mut in_working = vec![false; m];
        // set after an unblocked Newton step, which lands on the working-set minimizer
        let mut at_minimizer = false;
        // after a zero-length step, constraints are dropped by smallest index (Bland)
        let mut degenerate = false;

        for _ in 0..self.max_iterations {
            let hx = h * &x;
            let grad = (&hx - f) * 2.0;
            let obj_scale = x.dot(&hx).abs() + 2.0 * f.dot(&x).abs() + f64::MIN_POSITIVE;
            // rounding floor of the gradient
            let grad_scale = 2.0 * ((&h_abs * x.abs()).amax() + f.amax()) + f64::MIN_POSITIVE;

            let active = self.working_matrix(&working);
            let z = null_space(&active, n);
            let step = if z.ncols() == 0 || at_minimizer {
                Step::Stationary
            } else {
                newton_step(h, &z, &grad, obj_scale, grad_scale)
            };

            match step {
                Step::Stationary => {
                    if working.is_empty() {
                        return Ok(x);
                    }
                    let lambda = multipliers(&active, &grad);
                    let offset = self.equality.is_some() as usize;
                    let tol = 1e-12 * grad_scale;
                    let mut drop: Option<(usize, f64)> = None;
                    for (k, &i) in working.iter().enumerate() {
                        let l = lambda[offset + k];
                        let better = match drop {
                            None => l < -tol,
                            Some((j, _)) if degenerate => l < -tol && i < working[j],
                            Some((j, best)) => l < best || (l == best && i < working[j]),
                        };
                        if better {
                            drop = Some((k, l));
                        }
                    }
                    match drop {
                        None => return Ok(x),
                        Some((k, _)) => {
                                    in_working[working[k]] = false;
                            working.remove(k);
                            at_minimizer = false;
                        }
                    }
                }
                Step::Move(p) => {
                    let (t, block) = ratio_test(g, &x, &p, &in_working, 1.0);
                    degenerate = t == 0.0;
                    x += &p * t;
                    match block {
                        Some(i) => {
                            in_working[i] = true;
                            working.push(i);
                        }
                        None => at_minimizer = true,
                    }
                }
                Step::Ray(d) => {
                    let (t, block) = ratio_test(g, &x, &d, &in_working, f64::INFINITY);
                    let Some(i) = block else {
                        return Err(Error::Unbounded);
                    };
                    degenerate = t == 0.0;
                    x += &d * t;
                    in_working[i] = true;
                    working.push(i);
                }
            }
        }
        log::warn!("active-set QP hit its iteration limit; returning the current feasible iterate");
        Ok(x)
    }

    /// Rows of the equality (first) and the working inequalities.
    fn working_matrix(&self, working: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        let offset = self.equality.is_some() as usize;
        let mut a = DMatrix::zeros(offset + working.len(), n);
        if let Some((eq, _)) = &self.equality {
            a.row_mut(0).copy_from(&eq.transpose());
        }
        for (k, &i) in working.iter().enumerate() {
            a.row_mut(offset + k).copy_from(&self.constraints.row(i));
        }
        a
    }
}

enum Step {
    Stationary,
    Move(DVector<f64>),
    /// Zero-curvature descent direction.
    Ray(DVector<f64>),
}

/// Minimizer of the quadratic model restricted to the columns of `z`.
fn newton_step(h: &DMatrix<f64>, z: &DMatrix<f64>, grad: &DVector<f64>, obj_scale: f64, grad_scale: f64) -> Step {
    let reduced = z.transpose() * h * z;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let gz = z.transpose() * grad;
    let eig = reduced.symmetric_eigen();
    let lam_max = eig.eigenvalues.amax();
    let thr = CURVATURE_TOL * lam_max.max(f64::MIN_POSITIVE);
    let mut y = DVector::zeros(z.ncols());
    for j in 0..z.ncols() {
        let v = eig.eigenvectors.column(j);
        let c = v.dot(&gz);
        let lam = eig.eigenvalues[j];
        if lam > thr {
            y -= v * (c / (2.0 * lam));
        } else if c.abs() > 1e-10 * grad_scale {
            return Step::Ray(z * (v * -c.signum()));
        }
    }
    let p = z * y;
    // predicted decrease of the model along the full step
    let decrease = -(grad.dot(&p) + (p.transpose() * h * &p)[0]);
    if decrease <= 8.0 * f64::EPSILON * obj_scale || p.amax() == 0.0 {
        Step::Stationary
    } else {
        Step::Move(p)
    }
}

/// Largest `t <= t_max` keeping `G (x + t p) >= 0` over constraints outside the
/// working set, and the first constraint that blocks (smallest index on ties).
/// Constraints within rounding of zero count as exactly active.
fn ratio_test(g: &DMatrix<f64>, x: &DVector<f64>, p: &DVector<f64>, in_working: &[bool], t_max: f64) -> (f64, Option<usize>) {
    let gx = g * x;
    let gp = g * p;
    let x_scale = x.amax().max(f64::MIN_POSITIVE);
    let mut t = t_max;
    let mut block = None;
    for i in 0..g.nrows() {
        if in_working[i] || gp[i] >= 0.0 {
            continue;
        }
        let floor = ACTIVE_TOL * g.row(i).lp_norm(1) * x_scale;
        let ratio = if gx[i] <= floor { 0.0 } else { gx[i] / -gp[i] };
        if ratio < t {
            t = ratio;
            block = Some(i);
        }
    }
    (t, block)
}

/// Orthonormal basis of `{p : A p = 0}` for `A` with independent rows.
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let k = a.nrows();
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    if k >= n {
        return DMatrix::zeros(n, 0);
    }
    // Householder QR of [A^T | I]: the trailing columns of Q complement range(A^T).
    let mut aug = DMatrix::zeros(n, k + n);
    aug.columns_mut(0, k).copy_from(&a.transpose());
    aug.columns_mut(k, n).fill_with_identity();
    let q = aug.qr().q();
    q.columns(k, n - k).into_owned()
}

/// Least-squares `lambda` with `A^T lambda = grad`.
fn multipliers(a: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    a.transpose()
        .svd(true, true)
        .solve(grad, 0.0)
        .expect("svd with both factors")
}

/// Rows of `g` scaled to unit length, without the negligible ones.
fn normalized_rows(g: &DMatrix<f64>) -> DMatrix<f64> {
    let longest = g.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let rows: Vec<_> = g
        .row_iter()
        .filter(|r| r.norm() > NEGLIGIBLE_ROW * longest)
        .map(|r| r / r.norm())
        .collect();
    if rows.is_empty() {
        DMatrix::zeros(0, g.ncols())
    } else {
        DMatrix::from_rows(&rows)
    }
}

fn row_scale(g: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let gmax = g.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    (gmax * x.norm()).max(1.0)
}

/// A point with `G x >= 0` and `a^T x = d`: the least-norm point of
/// `{G x >= 0, a^T x >= d}` rescaled onto the equality.
fn feasible_point(g: &DMatrix<f64>, a: &DVector<f64>, d: f64) -> Result<DVector<f64>> {
    let n = a.len();
    if d == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let sign = d.signum();
    let m = g.nrows();
    // rows of E u >= h: G u >= 0 and sign a^T u >= |d|
    let mut e = DMatrix::zeros(m + 1, n);
    e.rows_mut(0, m).copy_from(g);
    e.row_mut(m).copy_from(&(a.transpose() * sign));
    let mut lhs = DMatrix::zeros(n + 1, m + 1);
    lhs.rows_mut(0, n).copy_from(&e.transpose());
    lhs[(n, m)] = d.abs();
    let mut target = DVector::zeros(n + 1);
    target[n] = 1.0;
    let sol = nnls(&lhs, &target);
    let r = &sol.residual;
    if r.norm() <= 1e-13 || r[n] >= 0.0 {
        return Err(Error::Infeasible);
    }
    let u: DVector<f64> = -r.rows(0, n) / r[n];
    let au = a.dot(&u);
    if au == 0.0 || au.signum() != sign {
        return Err(Error::Infeasible);
    }
    let x = u * (d / au);
    let gx = g * &x;
    if gx.iter().any(|&v| v < -1e-9 * row_scale(g, &x)) {
        return Err(Error::Infeasible);
    }
    Ok(x)
}
