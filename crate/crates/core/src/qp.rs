//! Parametric quadratic program over the probability simplex.
//!
//! Minimizes `−μᵀθ + ((φ+1)/2) θᵀΣθ` subject to `θ ≥ 0`, `1ᵀθ = 1` with a
//! primal active-set method. The working set holds the indices pinned at
//! zero; each iteration solves the equality-constrained KKT system on the
//! free indices and either steps to its minimizer, blocks on a bound, or
//! releases the bound with the most negative multiplier.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::market::MarketModel;

/// Smallest admissible risk parameter for the quadratic family: the
/// quadratic coefficient `(φ+1)/2` must stay positive.
pub const PHI_FLOOR: f64 = -1.0 + 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Indices with strictly positive weight.
    pub active_set: Vec<usize>,
}

impl QpSolution {
    /// `½θᵀΣθ`, the derivative of the optimal value with respect to φ.
    pub fn half_variance(&self, model: &MarketModel) -> f64 {
        0.5 * model.variance(&self.theta)
    }
}

pub fn solve_parametric_qp(model: &MarketModel, phi: f64) -> Result<QpSolution> {
    solve_parametric_qp_warm(model, phi, None)
}

/// Same as [`solve_parametric_qp`] but starting from a feasible point,
/// typically the minimizer at a neighbouring φ.
pub fn solve_parametric_qp_warm(
    model: &MarketModel,
    phi: f64,
    start: Option<&[f64]>,
) -> Result<QpSolution> {
    if !(phi >= PHI_FLOOR) || !phi.is_finite() {
        return Err(Error::PhiOutOfDomain { phi, floor: PHI_FLOOR });
    }
    let n = model.n_assets();
    let coef = 0.5 * (phi + 1.0);
    let hess = model.sigma_cov() * (2.0 * coef);
    let lin: DVector<f64> = -model.mu();
    let objective = |th: &[f64]| coef * model.variance(th) - model.mean(th);

    let mut theta = vec![0.0; n];
    let mut free = vec![false; n];
    match start {
        Some(s) if s.len() == n && is_feasible(s) => {
            for i in 0..n {
                if s[i] > 0.0 {
                    theta[i] = s[i];
                    free[i] = true;
                }
            }
            normalize(&mut theta);
        }
        _ => {
            // best vertex
            let mut best = 0;
            let mut best_val = f64::INFINITY;
            for i in 0..n {
                let v = coef * model.sigma_cov()[(i, i)] - model.mu()[i];
                if v < best_val {
                    best_val = v;
                    best = i;
                }
            }
            theta[best] = 1.0;
            free[best] = true;
        }
    }

    let max_iter = 50 + 20 * n;
    for _ in 0..max_iter {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let (target, lambda) = equality_minimizer(&hess, &lin, &idx)?;

        let step: Vec<f64> = idx.iter().zip(&target).map(|(&i, &t)| t - theta[i]).collect();
        let feasible = target.iter().all(|&t| t >= 0.0);

        if feasible {
            for (&i, &t) in idx.iter().zip(&target) {
                theta[i] = t;
            }
            // multipliers of the pinned bounds
            let mut release: Option<(usize, f64)> = None;
            let tol = 1e-12 * (1.0 + lambda.abs());
            for i in (0..n).filter(|&i| !free[i]) {
                let grad_i: f64 = (0..n).map(|j| hess[(i, j)] * theta[j]).sum::<f64>() + lin[i];
                let nu = grad_i - lambda;
                if nu < -tol && release.map_or(true, |(_, best)| nu < best) {
                    release = Some((i, nu));
                }
            }
            match release {
                None => return Ok(finish(theta, &objective)),
                Some((i, _)) => free[i] = true,
            }
        } else {
            let mut t_max = 1.0;
            let mut block = None;
            for (k, &i) in idx.iter().enumerate() {
                if step[k] < 0.0 {
                    let t = theta[i] / -step[k];
                    if t < t_max {
                        t_max = t;
                        block = Some(i);
                    }
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                theta[i] += t_max * step[k];
            }
            if let Some(b) = block {
                theta[b] = 0.0;
                free[b] = false;
            }
            for v in theta.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    Err(Error::QpNotConverged(max_iter))
}

/// Minimizer of `½θᵀHθ + gᵀθ` on the free coordinates with `1ᵀθ = 1`,
/// together with the budget multiplier.
fn equality_minimizer(hess: &DMatrix<f64>, lin: &DVector<f64>, idx: &[usize]) -> Result<(Vec<f64>, f64)> {
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |a, b| hess[(idx[a], idx[b])]);
    let chol = sub.cholesky().ok_or(Error::NonConvex)?;
    let ones = DVector::from_element(m, 1.0);
    let g = DVector::from_fn(m, |a, _| lin[idx[a]]);
    let y1 = chol.solve(&ones);
    let y2 = chol.solve(&g);
    let lambda = (1.0 + y2.sum()) / y1.sum();
    let theta = (y1 * lambda - y2).iter().copied().collect();
    Ok((theta, lambda))
}

fn is_feasible(theta: &[f64]) -> bool {
    theta.iter().all(|&t| t >= 0.0 && t.is_finite()) && (theta.iter().sum::<f64>() - 1.0).abs() < 1e-8
}

fn normalize(theta: &mut [f64]) {
    let s: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|t| *t /= s);
}

fn finish(mut theta: Vec<f64>, objective: &impl Fn(&[f64]) -> f64) -> QpSolution {
    theta.iter_mut().for_each(|t| {
        if *t < 0.0 {
            *t = 0.0
        }
    });
    normalize(&mut theta);
    let value = objective(&theta);
    let active_set = theta.iter().enumerate().filter(|(_, &t)| t > 0.0).map(|(i, _)| i).collect();
    QpSolution { theta, value, active_set }
}
