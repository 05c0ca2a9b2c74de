//! Direct solver for the value function by implicit time stepping with a
//! frozen policy, used to cross-check the Riccati pipeline.
//!
//! In `τ = T − t` the equation reads
//! `∂τV = max_θ {μ(x, θ) ∂ₓV + ½σ(θ)² ∂ₓ²V} + c`, `V(x, 0) = u(x)`. Each
//! step freezes θ from the previous layer and solves the resulting linear
//! tridiagonal system with centered differences.

use std::sync::Arc;

use crate::alpha::AlphaTable;
use crate::error::{Error, Result};
use crate::grid::SolverGrid;
use crate::market::MarketModel;
use crate::qp::{solve_parametric_qp, PHI_FLOOR};
use crate::tridiag::thomas_solve;
use crate::utility::{Intertemporal, TerminalUtility};

/// Where improved policies come from.
#[derive(Debug, Clone)]
pub enum ThetaSource {
    /// Interpolated minimizers of a precomputed table.
    FromAlphaTable(Arc<AlphaTable>),
    /// A fresh quadratic program at every node.
    PerNodeQp,
}

#[derive(Debug, Clone)]
pub struct PolicyIterationConfig {
    pub grid: SolverGrid,
    /// Policy/solve sweeps per time step; 1 is the plain fixed-policy scheme.
    pub max_policy_sweeps: usize,
    /// Relative change in V below which extra sweeps stop.
    pub policy_tol: f64,
    pub theta_source: ThetaSource,
}

impl PolicyIterationConfig {
    pub fn new(grid: SolverGrid, theta_source: ThetaSource) -> Self {
        Self { grid, max_policy_sweeps: 1, policy_tol: 1e-10, theta_source }
    }

    fn validate(&self) -> Result<()> {
        if self.max_policy_sweeps < 1 || !(self.policy_tol > 0.0) {
            return Err(Error::Config("policy sweeps must be >= 1 and tolerance > 0".into()));
        }
        Ok(())
    }
}

/// One implicit step `V − k(μ D₁ + ½s D₂)V = V_prev + k c(·, τ_j)` with
/// Dirichlet values `boundary = (V_left, V_right)` at the new layer.
#[allow(clippy::too_many_arguments)]
pub fn policy_step(
    v_prev: &[f64],
    theta_field: &[Vec<f64>],
    grid: &SolverGrid,
    model: &MarketModel,
    c_util: &Intertemporal,
    tau_j: f64,
    boundary: (f64, f64),
) -> Result<Vec<f64>> {
    let n = grid.n_interior;
    let (h, k) = (grid.h, grid.k);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for row in 0..n {
        let i = row + 1;
        let x = grid.x(i);
        let th = &theta_field[i];
        let mu = model.drift(x, th);
        let s = model.variance(th);
        let conv = k * mu / (2.0 * h);
        let diff = k * s / (2.0 * h * h);
        lower[row] = conv - diff;
        diag[row] = 1.0 + 2.0 * diff;
        upper[row] = -conv - diff;
        rhs[row] = v_prev[i] + k * c_util.eval(x, tau_j).c;
    }
    rhs[0] -= lower[0] * boundary.0;
    rhs[n - 1] -= upper[n - 1] * boundary.1;
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    let inner = thomas_solve(&lower, &diag, &upper, &rhs)?;
    let mut v = Vec::with_capacity(n + 2);
    v.push(boundary.0);
    v.extend_from_slice(&inner);
    v.push(boundary.1);
    Ok(v)
}

/// `φ = −D₂V/D₁V` at interior node `i`; `None` where `D₁V ≤ 0`.
pub fn local_risk_aversion(v: &[f64], h: f64, i: usize) -> Option<f64> {
    let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
    let d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    (d1 > 0.0).then(|| -d2 / d1)
}

/// Minimizer of `−μᵀθ + ((φ+1)/2)θᵀΣθ` for any φ; below the convexity floor
/// the objective is concave and the best vertex is returned.
pub fn policy_for(model: &MarketModel, phi: f64, source: &ThetaSource) -> Result<Vec<f64>> {
    if phi < PHI_FLOOR {
        let n = model.n_assets();
        let coef = 0.5 * (phi + 1.0);
        let best = (0..n)
            .min_by(|&a, &b| {
                let va = coef * model.sigma_cov()[(a, a)] - model.mu()[a];
                let vb = coef * model.sigma_cov()[(b, b)] - model.mu()[b];
                va.total_cmp(&vb)
            })
            .unwrap_or(0);
        let mut th = vec![0.0; n];
        th[best] = 1.0;
        return Ok(th);
    }
    match source {
        ThetaSource::FromAlphaTable(t) => Ok(t.theta_at(phi)),
        ThetaSource::PerNodeQp => Ok(solve_parametric_qp(model, phi)?.theta),
    }
}

/// New policy from the current V. Nodes where `D₁V ≤ 0` keep the previous
/// policy and are counted in the second return value. Boundary nodes copy
/// their interior neighbours.
pub fn improve_policy(
    v: &[f64],
    grid: &SolverGrid,
    model: &MarketModel,
    source: &ThetaSource,
    prev: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, usize)> {
    let n = grid.n_interior;
    let mut field = prev.to_vec();
    let mut flagged = 0;
    for i in 1..=n {
        match local_risk_aversion(v, grid.h, i) {
            Some(phi) => field[i] = policy_for(model, phi, source)?,
            None => flagged += 1,
        }
    }
    field[0] = field[1].clone();
    field[n + 1] = field[n].clone();
    Ok((field, flagged))
}

/// Frozen-policy objective `−μ(x, θ) D₁V − ½σ(θ)² D₂V` at node `i`.
pub fn policy_objective(v: &[f64], grid: &SolverGrid, model: &MarketModel, theta: &[f64], i: usize) -> f64 {
    let h = grid.h;
    let d1 = (v[i + 1] - v[i - 1]) / (2.0 * h);
    let d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    -model.drift(grid.x(i), theta) * d1 - 0.5 * model.variance(theta) * d2
}

/// Recorded V profiles and diagnostics of a full run.
#[derive(Debug, Clone)]
pub struct HjbSolution {
    pub grid: SolverGrid,
    /// `(layer, τ, V)` at the requested layers.
    pub snapshots: Vec<(usize, f64, Vec<f64>)>,
    pub final_v: Vec<f64>,
    pub flagged_nodes: usize,
}

/// Runs from `V(·, 0) = u` to `τ = T`. `boundary(j)` supplies the Dirichlet
/// values at layer `j`.
pub fn solve_hjb<B: Fn(usize) -> (f64, f64)>(
    cfg: &PolicyIterationConfig,
    model: &MarketModel,
    terminal: &TerminalUtility,
    c_util: &Intertemporal,
    boundary: B,
    snapshot_layers: &[usize],
) -> Result<HjbSolution> {
    cfg.validate()?;
    let grid = &cfg.grid;
    let mut v: Vec<f64> = grid.nodes().iter().map(|&x| terminal.value(x)).collect();
    let uniform = vec![1.0 / model.n_assets() as f64; model.n_assets()];
    let mut theta = vec![uniform; grid.n_nodes()];
    let mut flagged_nodes = 0;
    let mut snapshots = Vec::new();
    if snapshot_layers.contains(&0) {
        snapshots.push((0, 0.0, v.clone()));
    }
    for j in 0..grid.m_steps {
        let tau = grid.tau(j);
        let (t, f) = improve_policy(&v, grid, model, &cfg.theta_source, &theta)?;
        theta = t;
        flagged_nodes += f;
        let bnd = boundary(j + 1);
        let mut next = policy_step(&v, &theta, grid, model, c_util, tau, bnd)?;
        for _ in 1..cfg.max_policy_sweeps {
            let (t, _) = improve_policy(&next, grid, model, &cfg.theta_source, &theta)?;
            let again = policy_step(&v, &t, grid, model, c_util, tau, bnd)?;
            theta = t;
            let scale = again.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            let change = again.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            next = again;
            if change / scale < cfg.policy_tol {
                break;
            }
        }
        v = next;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(j + 1));
        }
        if snapshot_layers.contains(&(j + 1)) {
            snapshots.push((j + 1, grid.tau(j + 1), v.clone()));
        }
    }
    Ok(HjbSolution { grid: grid.clone(), snapshots, final_v: v, flagged_nodes })
}
