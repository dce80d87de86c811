//! Nonnegative least squares by the Lawson–Hanson active-set method.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::LeastSquaresSvd;

use crate::error::{Error, Result};

/// Solves `min ‖A x − b‖₂` subject to `x ≥ 0`.
///
/// Returns the solution and the residual norm. Deterministic: ties in the
/// dual selection resolve to the lowest column index.
pub fn nnls(a: &Array2<f64>, b: &Array1<f64>) -> Result<(Array1<f64>, f64)> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 || b.len() != m {
        return Err(Error::InvalidParams(format!(
            "nnls: bad dimensions ({m}×{n}, rhs {})",
            b.len()
        )));
    }
    let mut x = Array1::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let scale = b.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
    let tol = 1e-12 * scale;

    for _outer in 0..3 * n {
        // dual vector w = Aᵀ(b − Ax)
        let resid = b - &a.dot(&x);
        let w = a.t().dot(&resid);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap().then(j.cmp(&i)));
        let Some(j_star) = candidate else { break };
        if w[j_star] <= tol {
            break;
        }
        passive[j_star] = true;

        // Inner loop: solve on the passive set, clip negative coordinates.
        for _inner in 0..3 * n {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select(Axis(1), &cols);
            let sol = sub
                .least_squares(b)
                .map_err(|e| Error::Linalg(format!("nnls inner solve: {e}")))?
                .solution;
            if sol.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&j, &v) in cols.iter().zip(sol.iter()) {
                    x[j] = v;
                }
                break;
            }
            // step length toward the unconstrained solution
            let mut alpha = f64::INFINITY;
            for (&j, &v) in cols.iter().zip(sol.iter()) {
                if v <= 0.0 {
                    let t = x[j] / (x[j] - v);
                    if t < alpha {
                        alpha = t;
                    }
                }
            }
            for (&j, &v) in cols.iter().zip(sol.iter()) {
                x[j] += alpha * (v - x[j]);
            }
            for &j in &cols {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }

    let resid = b - &a.dot(&x);
    let rnorm = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((x, rnorm))
}
