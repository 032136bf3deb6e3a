//! Lawson-Hanson active-set non-negative least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `a x - b`.
    pub residual: DVector<f64>,
    pub iterations: usize,
}

/// Minimizes `||a x - b||` subject to `x >= 0`.
///
/// Entering columns are chosen by largest gradient with the smallest index
/// winning ties, so results are reproducible.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "nnls: rhs length");
    let norm1 = a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let tol = 10.0 * f64::EPSILON * norm1.max(f64::MIN_POSITIVE) * m.max(n) as f64;
    let max_iter = 3 * n.max(1) + 30;

    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut iterations = 0;

    while iterations < max_iter {
        let w = a.transpose() * (b - a * &x);
        let mut enter = None;
        let mut best = tol;
        for j in 0..n {
            if !passive[j] && !blocked[j] && w[j] > best {
                best = w[j];
                enter = Some(j);
            }
        }
        let Some(t) = enter else { break };
        passive[t] = true;
        let mut idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut z = solve_subset(a, b, &idx);
        let pos_t = idx.iter().position(|&j| j == t).unwrap();
        if z[pos_t] <= tol {
            // rounding stalled the entering column; skip it until the support changes
            passive[t] = false;
            blocked[t] = true;
            continue;
        }
        loop {
            iterations += 1;
            if z.iter().all(|&v| v > tol) || iterations >= max_iter {
                break;
            }
            let mut step = 1.0f64;
            let mut leaving = None;
            for (&j, &v) in idx.iter().zip(z.iter()) {
                if v <= tol {
                    let denom = x[j] - v;
                    let s = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if leaving.is_none() || s < step {
                        step = s;
                        leaving = Some(j);
                    }
                }
            }
            for (&j, &v) in idx.iter().zip(z.iter()) {
                x[j] += step * (v - x[j]);
                if x[j] <= tol || Some(j) == leaving {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            idx = (0..n).filter(|&j| passive[j]).collect();
            if idx.is_empty() {
                z = DVector::zeros(0);
                break;
            }
            z = solve_subset(a, b, &idx);
        }
        x.fill(0.0);
        for (&j, &v) in idx.iter().zip(z.iter()) {
            x[j] = v.max(0.0);
        }
        blocked.iter_mut().for_each(|v| *v = false);
    }

    let residual = a * &x - b;
    NnlsSolution {
        x,
        residual,
        iterations,
    }
}

/// Unconstrained least squares restricted to columns `idx`.
fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(idx);
    let svd = sub.svd(true, true);
    let eps = f64::EPSILON * svd.singular_values.max() * a.nrows().max(idx.len()) as f64;
    svd.solve(b, eps).expect("svd with both factors").column(0).into_owned()
}
