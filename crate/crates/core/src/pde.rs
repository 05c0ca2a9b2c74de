//! Semi-implicit finite-volume evolution of the risk-aversion field φ(x, τ).
//!
//! Each step integrates the transformed equation over dual volumes
//! `(x_{i−½}, x_{i+½})`. Face coefficients `D = α′_φ`, `E = α′_x` and
//! `F = −αφ` are frozen at the old layer, the gradient at the faces is taken
//! from the new layer, and the non-local source `J` is explicit. This gives
//! one tridiagonal solve per step. The scalar `b = ∂ₓV(x_*)` is advanced
//! alongside by an Euler step of its ODE.

use std::sync::Arc;

use crate::alpha::Alpha;
use crate::error::{Error, Result};
use crate::grid::SolverGrid;
use crate::reconstruct::{SolutionBundle, Snapshot};
use crate::tridiag::thomas_solve_into;
use crate::utility::{Intertemporal, TerminalUtility};

/// A strictly positive scalar stored by its logarithm.
///
/// `b` can be as large as `a·e^{a|x_*|}`; keeping `ln b` lets the ratio
/// `e^{Φ_i − Φ_{i*}}/b` be formed without overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveScalar {
    ln: f64,
}

impl PositiveScalar {
    pub fn from_value(v: f64) -> Option<Self> {
        (v > 0.0 && v.is_finite()).then(|| Self { ln: v.ln() })
    }

    pub fn from_ln(ln: f64) -> Self {
        Self { ln }
    }

    pub fn value(self) -> f64 {
        self.ln.exp()
    }

    pub fn ln(self) -> f64 {
        self.ln
    }
}

pub type DirichletFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Boundary treatment at `x_left` and `x_right`.
#[derive(Clone)]
pub enum BoundaryCondition {
    /// `φ_0 = φ_1`, `φ_{n+1} = φ_n`.
    Neumann,
    /// Prescribed values `g(x, τ)`.
    Dirichlet(DirichletFn),
}

impl std::fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Neumann => f.write_str("Neumann"),
            BoundaryCondition::Dirichlet(_) => f.write_str("Dirichlet(..)"),
        }
    }
}

/// Euler variant used for the `b` ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BMode {
    /// `b^{j+1} = (1 − kω^j) b^j + k ∂ₓc^j`.
    Explicit,
    /// `b^{j+1} = (b^j + k ∂ₓc^j) / (1 + kω^j)`, from the old layer before the solve.
    #[default]
    Implicit,
    /// `b^{j+1} = (b^j + k ∂ₓc^{j+1}) / (1 + kω^{j+1})`, from the new layer after the solve.
    Backward,
}

/// Time treatment of the non-local source `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceMode {
    /// `J` evaluated entirely on the old layer.
    #[default]
    Explicit,
    /// The `φ ∂ₓc` part of `J` moves to the new layer where `∂ₓc ≥ 0`.
    Linearized,
}

/// Evolving discrete state at one time layer.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Node values including the two boundary entries.
    pub phi: Vec<f64>,
    pub b: PositiveScalar,
    pub j_step: usize,
    /// Trapezoid antiderivative `Φ_i` of φ from `x_left`.
    pub cumulative_phi: Vec<f64>,
    pub clamp_count: u64,
}

impl SolverState {
    pub fn new(phi: Vec<f64>, b: PositiveScalar, h: f64) -> Self {
        let cumulative_phi = cumulative_integral(&phi, h);
        Self { phi, b, j_step: 0, cumulative_phi, clamp_count: 0 }
    }

    pub fn b_scalar(&self) -> f64 {
        self.b.value()
    }

    pub fn refresh_cumulative(&mut self, h: f64) {
        cumulative_integral_into(&self.phi, h, &mut self.cumulative_phi);
    }
}

/// `Φ_0 = 0`, `Φ_{i+1} = Φ_i + (h/2)(φ_i + φ_{i+1})`.
pub fn cumulative_integral(phi: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; phi.len()];
    cumulative_integral_into(phi, h, &mut out);
    out
}

fn cumulative_integral_into(phi: &[f64], h: f64, out: &mut [f64]) {
    out[0] = 0.0;
    for i in 1..phi.len() {
        out[i] = out[i - 1] + 0.5 * h * (phi[i - 1] + phi[i]);
    }
}

/// `−u″(x_i)/u′(x_i)` at every node; boundary entries follow the BC.
pub fn initial_condition(utility: &TerminalUtility, grid: &SolverGrid, bc: &BoundaryCondition) -> Result<Vec<f64>> {
    let mut phi = Vec::with_capacity(grid.n_nodes());
    for i in 0..grid.n_nodes() {
        let x = grid.x(i);
        if !(utility.deriv(x) > 0.0) && utility.ln_deriv(x).is_none() {
            return Err(Error::NonIncreasingUtility(x));
        }
        phi.push(utility.risk_aversion(x));
    }
    let last = grid.n_interior + 1;
    match bc {
        BoundaryCondition::Neumann => {
            phi[0] = phi[1];
            phi[last] = phi[last - 1];
        }
        BoundaryCondition::Dirichlet(g) => {
            phi[0] = g(grid.x(0), 0.0);
            phi[last] = g(grid.x(last), 0.0);
        }
    }
    Ok(phi)
}

/// Non-local source `J_i = −h e^{Φ_i − Φ_{i*}}/b · (φ_i ∂ₓc + ∂ₓ²c)` at `τ`,
/// for every node (boundary entries are computed too but unused).
pub fn nonlocal_term(state: &SolverState, grid: &SolverGrid, c_util: &Intertemporal, tau: f64) -> Result<Vec<f64>> {
    if !state.b.ln().is_finite() {
        return Err(Error::NonpositiveB(state.j_step));
    }
    let mut out = vec![0.0; grid.n_nodes()];
    if c_util.is_flat() {
        return Ok(out);
    }
    let anchor = state.cumulative_phi[grid.i_star];
    for (i, o) in out.iter_mut().enumerate() {
        *o = nonlocal_at(state, grid, c_util, tau, anchor, i);
    }
    Ok(out)
}

#[inline]
fn nonlocal_at(state: &SolverState, grid: &SolverGrid, c_util: &Intertemporal, tau: f64, anchor: f64, i: usize) -> f64 {
    let (w_cx, w_cxx) = nonlocal_parts(state, grid, c_util, tau, anchor, i);
    -grid.h * (state.phi[i] * w_cx + w_cxx)
}

/// `(e^{Φ_i−Φ_{i*}}/b · ∂ₓc, e^{Φ_i−Φ_{i*}}/b · ∂ₓ²c)` at node `i`.
#[inline]
fn nonlocal_parts(state: &SolverState, grid: &SolverGrid, c_util: &Intertemporal, tau: f64, anchor: f64, i: usize) -> (f64, f64) {
    let (scale, cx, cxx) = c_util.scaled_derivs(grid.x(i), tau);
    if cx == 0.0 && cxx == 0.0 {
        return (0.0, 0.0);
    }
    let weight = (state.cumulative_phi[i] - anchor - state.b.ln() + scale).exp();
    (weight * cx, weight * cxx)
}

/// Tridiagonal system for the interior unknowns `φ_1..φ_n` at the next layer.
#[derive(Debug, Clone, Default)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Face evaluations where φ left the α domain.
    pub clamped: u64,
}

impl TridiagonalSystem {
    /// Strict row diagonal dominance.
    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.diag.len()).all(|i| self.diag[i].abs() > self.lower[i].abs() + self.upper[i].abs())
    }
}

/// Face coefficients `(D, E, F)` on the `n+1` dual faces.
struct Faces {
    d: Vec<f64>,
    e: Vec<f64>,
    f: Vec<f64>,
}

fn face_coefficients(phi: &[f64], grid: &SolverGrid, alpha: &Alpha, tau: f64, faces: &mut Faces) -> u64 {
    let mut clamped = 0;
    for f in 0..=grid.n_interior {
        let x = grid.x(f) + 0.5 * grid.h;
        let p = 0.5 * (phi[f] + phi[f + 1]);
        let ev = alpha.eval(x, tau, p);
        clamped += ev.clamped as u64;
        faces.d[f] = ev.alpha_phi;
        faces.e[f] = ev.alpha_x;
        faces.f[f] = -ev.alpha * p;
    }
    clamped
}

/// Assembles the linear system advancing `state` from `τ_j` to `τ_{j+1}`.
pub fn assemble_step(
    state: &SolverState,
    grid: &SolverGrid,
    alpha: &Alpha,
    c_util: &Intertemporal,
    bc: &BoundaryCondition,
    tau_j: f64,
    source: SourceMode,
) -> Result<TridiagonalSystem> {
    let mut sys = TridiagonalSystem::default();
    let mut faces = Faces { d: vec![0.0; grid.n_interior + 1], e: vec![0.0; grid.n_interior + 1], f: vec![0.0; grid.n_interior + 1] };
    assemble_into(state, grid, alpha, c_util, bc, tau_j, source, &mut faces, &mut sys)?;
    Ok(sys)
}

#[allow(clippy::too_many_arguments)]
fn assemble_into(
    state: &SolverState,
    grid: &SolverGrid,
    alpha: &Alpha,
    c_util: &Intertemporal,
    bc: &BoundaryCondition,
    tau_j: f64,
    source: SourceMode,
    faces: &mut Faces,
    sys: &mut TridiagonalSystem,
) -> Result<()> {
    let n = grid.n_interior;
    let (h, k) = (grid.h, grid.k);
    let r = k / (h * h);
    let q = k / h;
    sys.lower.resize(n, 0.0);
    sys.diag.resize(n, 0.0);
    sys.upper.resize(n, 0.0);
    sys.rhs.resize(n, 0.0);
    sys.clamped = face_coefficients(&state.phi, grid, alpha, tau_j, faces);

    if !state.b.ln().is_finite() {
        return Err(Error::NonpositiveB(state.j_step));
    }
    let flat = c_util.is_flat();
    let anchor = state.cumulative_phi[grid.i_star];

    for row in 0..n {
        let i = row + 1;
        let (dm, dp) = (faces.d[i - 1], faces.d[i]);
        let (w_cx, w_cxx) = if flat { (0.0, 0.0) } else { nonlocal_parts(state, grid, c_util, tau_j, anchor, i) };
        let (implicit, j_i) = match source {
            SourceMode::Linearized if w_cx >= 0.0 => (k * w_cx, -h * w_cxx),
            _ => (0.0, -h * (state.phi[i] * w_cx + w_cxx)),
        };
        sys.lower[row] = -r * dm;
        sys.upper[row] = -r * dp;
        sys.diag[row] = 1.0 + r * (dp + dm) + implicit;
        sys.rhs[row] = q * (j_i + faces.e[i] - faces.e[i - 1] + faces.f[i] - faces.f[i - 1]) + state.phi[i];
    }

    match bc {
        BoundaryCondition::Neumann => {
            sys.diag[0] += sys.lower[0];
            sys.diag[n - 1] += sys.upper[n - 1];
        }
        BoundaryCondition::Dirichlet(g) => {
            let tau_next = tau_j + k;
            sys.rhs[0] -= sys.lower[0] * g(grid.x(0), tau_next);
            sys.rhs[n - 1] -= sys.upper[n - 1] * g(grid.x(n + 1), tau_next);
        }
    }
    sys.lower[0] = 0.0;
    sys.upper[n - 1] = 0.0;
    Ok(())
}

/// `ω = α′_x + α′_φ ∂ₓφ − αφ` at the anchor node, with a centered gradient.
pub fn omega(state: &SolverState, grid: &SolverGrid, alpha: &Alpha, tau: f64) -> f64 {
    let i = grid.i_star;
    let p = state.phi[i];
    let ev = alpha.eval(grid.x(i), tau, p);
    ev.alpha_x + ev.alpha_phi * (state.phi[i + 1] - state.phi[i - 1]) / (2.0 * grid.h) - ev.alpha * p
}

/// Next value of `b` from `−db/dτ = ωb − ∂ₓc(x_*, T−τ)`.
///
/// Both variants use `ω_j` and `∂ₓc` at `τ_j`.
pub fn update_b(
    state: &SolverState,
    grid: &SolverGrid,
    alpha: &Alpha,
    c_util: &Intertemporal,
    tau_j: f64,
    mode: BMode,
) -> Result<PositiveScalar> {
    let w = omega(state, grid, alpha, tau_j);
    let (scale, cx, _) = c_util.scaled_derivs(grid.x_star(), tau_j);
    // k ∂ₓc / b
    let source = if cx == 0.0 { 0.0 } else { grid.k * cx * (scale - state.b.ln()).exp() };
    let ln = match mode {
        BMode::Explicit => {
            let factor = 1.0 - grid.k * w + source;
            if !(factor > 0.0) {
                return Err(Error::NonpositiveB(state.j_step + 1));
            }
            state.b.ln() + factor.ln()
        }
        BMode::Implicit | BMode::Backward => {
            if !(1.0 + source > 0.0) || !(1.0 + grid.k * w > 0.0) {
                return Err(Error::NonpositiveB(state.j_step + 1));
            }
            state.b.ln() + source.ln_1p() - (grid.k * w).ln_1p()
        }
    };
    if !ln.is_finite() {
        return Err(Error::NonpositiveB(state.j_step + 1));
    }
    Ok(PositiveScalar::from_ln(ln))
}

/// A-priori band for φ; layers leaving `[lower − margin, upper + margin]`
/// are counted and logged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiBounds {
    pub lower: f64,
    pub upper: f64,
    pub margin: f64,
}

/// Everything needed for one run of the scheme.
#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub grid: SolverGrid,
    pub alpha: Alpha,
    pub terminal: TerminalUtility,
    pub intertemporal: Intertemporal,
    pub bc: BoundaryCondition,
    pub b_mode: BMode,
    pub source_mode: SourceMode,
    /// τ values at which full φ profiles are kept.
    pub snapshot_taus: Vec<f64>,
    pub bounds: Option<PhiBounds>,
}

impl EvolveConfig {
    pub fn new(grid: SolverGrid, alpha: Alpha, terminal: TerminalUtility, intertemporal: Intertemporal) -> Self {
        Self {
            grid,
            alpha,
            terminal,
            intertemporal,
            bc: BoundaryCondition::Neumann,
            b_mode: BMode::Implicit,
            source_mode: SourceMode::Explicit,
            snapshot_taus: Vec::new(),
            bounds: None,
        }
    }

    /// Snapshots at `τ = jT/count` for `j = 0..=count`.
    pub fn with_uniform_snapshots(mut self, count: usize) -> Self {
        let t = self.grid.horizon;
        self.snapshot_taus = (0..=count).map(|j| j as f64 * t / count as f64).collect();
        self
    }
}

/// Read-only view of one computed layer, handed to observers.
#[derive(Debug)]
pub struct LayerView<'a> {
    pub j: usize,
    pub tau: f64,
    pub phi: &'a [f64],
    pub b: PositiveScalar,
    pub a: f64,
}

/// Runs the scheme over all `m` steps.
pub fn evolve(cfg: &EvolveConfig) -> Result<SolutionBundle> {
    evolve_with(cfg, |_| {})
}

/// [`evolve`] with a callback invoked on every layer, including `τ = 0`.
pub fn evolve_with<F: FnMut(&LayerView)>(cfg: &EvolveConfig, mut observer: F) -> Result<SolutionBundle> {
    let grid = &cfg.grid;
    let n = grid.n_interior;
    let x_star = grid.x_star();
    let phi0 = initial_condition(&cfg.terminal, grid, &cfg.bc)?;
    let b0 = cfg
        .terminal
        .ln_deriv(x_star)
        .map(PositiveScalar::from_ln)
        .ok_or(Error::NonIncreasingUtility(x_star))?;
    let mut state = SolverState::new(phi0, b0, grid.h);

    let mut snapshot_layers: Vec<usize> = cfg.snapshot_taus.iter().map(|&t| grid.layer_of(t)).collect();
    snapshot_layers.sort_unstable();
    snapshot_layers.dedup();
    let mut next_snapshot = 0;
    let mut snapshots = Vec::with_capacity(snapshot_layers.len());

    let mut a = cfg.terminal.value(x_star);
    let mut a_path = Vec::with_capacity(grid.m_steps + 1);
    let mut b_path = Vec::with_capacity(grid.m_steps + 1);
    let mut phi_star_path = Vec::with_capacity(grid.m_steps + 1);
    let mut bounds_violations = 0u64;

    let mut faces = Faces { d: vec![0.0; n + 1], e: vec![0.0; n + 1], f: vec![0.0; n + 1] };
    let mut sys = TridiagonalSystem::default();
    let mut scratch = vec![0.0; n];
    let mut solution = vec![0.0; n];

    for j in 0..=grid.m_steps {
        let tau = grid.tau(j);
        state.j_step = j;
        state.refresh_cumulative(grid.h);

        a_path.push(a);
        b_path.push(state.b);
        phi_star_path.push(state.phi[grid.i_star]);
        if let Some(bounds) = cfg.bounds {
            let lo = bounds.lower - bounds.margin;
            let hi = bounds.upper + bounds.margin;
            if state.phi.iter().any(|&p| p < lo || p > hi) {
                if bounds_violations == 0 {
                    log::warn!("phi left the a-priori band [{lo}, {hi}] at tau = {tau}");
                }
                bounds_violations += 1;
            }
        }
        if next_snapshot < snapshot_layers.len() && snapshot_layers[next_snapshot] == j {
            snapshots.push(Snapshot { layer: j, tau, phi: state.phi.clone() });
            next_snapshot += 1;
        }
        observer(&LayerView { j, tau, phi: &state.phi, b: state.b, a });
        if j == grid.m_steps {
            break;
        }

        let b_next = match cfg.b_mode {
            BMode::Backward => None,
            mode => Some(update_b(&state, grid, &cfg.alpha, &cfg.intertemporal, tau, mode)?),
        };
        let gamma = cfg.alpha.eval(x_star, tau, state.phi[grid.i_star]).alpha;
        a += grid.k * (-gamma * state.b.value() + cfg.intertemporal.eval(x_star, tau).c);

        assemble_into(&state, grid, &cfg.alpha, &cfg.intertemporal, &cfg.bc, tau, cfg.source_mode, &mut faces, &mut sys)?;
        state.clamp_count += sys.clamped;
        thomas_solve_into(&sys.lower, &sys.diag, &sys.upper, &sys.rhs, &mut scratch, &mut solution)?;
        state.phi[1..=n].copy_from_slice(&solution);
        match &cfg.bc {
            BoundaryCondition::Neumann => {
                state.phi[0] = state.phi[1];
                state.phi[n + 1] = state.phi[n];
            }
            BoundaryCondition::Dirichlet(g) => {
                let tn = grid.tau(j + 1);
                state.phi[0] = g(grid.x(0), tn);
                state.phi[n + 1] = g(grid.x(n + 1), tn);
            }
        }
        if state.phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(j + 1));
        }
        state.b = match b_next {
            Some(b) => b,
            None => update_b(&state, grid, &cfg.alpha, &cfg.intertemporal, grid.tau(j + 1), BMode::Backward)?,
        };
    }
    if state.clamp_count > 0 {
        log::warn!("{} alpha evaluations were clamped to the table domain", state.clamp_count);
    }

    Ok(SolutionBundle {
        grid: grid.clone(),
        snapshots,
        a_path,
        b_path,
        phi_star_path,
        final_phi: state.phi,
        clamp_count: state.clamp_count,
        bounds_violations,
        v_field: None,
        psi_field: None,
        theta_field: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketModel;

    fn merton_config(a: f64, n: usize, m: usize) -> EvolveConfig {
        let grid = SolverGrid::new(-1.0, 1.0, n, 1.0, m, n / 2).unwrap();
        let model = MarketModel::from_rows(&[0.1], &[vec![0.04]], 0.0, 0.0).unwrap();
        EvolveConfig::new(grid, Alpha::single_asset(&model).unwrap(), TerminalUtility::Cara { a }, Intertemporal::None)
    }

    #[test]
    fn cara_initial_condition_is_constant() {
        let cfg = merton_config(9.0, 19, 10);
        let phi = initial_condition(&cfg.terminal, &cfg.grid, &cfg.bc).unwrap();
        assert!(phi.iter().all(|&p| p == 9.0));
        let bad = initial_condition(&TerminalUtility::Cara { a: -1.0 }, &cfg.grid, &cfg.bc);
        assert!(matches!(bad, Err(Error::NonIncreasingUtility(_))));
    }

    #[test]
    fn constant_field_is_a_fixed_point_of_one_step() {
        let cfg = merton_config(9.0, 19, 10);
        let state = SolverState::new(vec![9.0; 21], PositiveScalar::from_value(1.0).unwrap(), cfg.grid.h);
        let sys = assemble_step(&state, &cfg.grid, &cfg.alpha, &cfg.intertemporal, &cfg.bc, 0.0, SourceMode::Explicit).unwrap();
        assert!(sys.rhs.iter().all(|&r| r == 9.0));
        assert!(sys.is_diagonally_dominant());
        let x = crate::tridiag::thomas_solve(&sys.lower, &sys.diag, &sys.upper, &sys.rhs).unwrap();
        assert!(x.iter().all(|&v| (v - 9.0).abs() < 1e-12));
    }

    #[test]
    fn single_node_dirichlet_system() {
        // n = 1, D± = 1 (benchmark α′ at φ = −1 is 2, so use a crafted α)
        let grid = SolverGrid::new(0.0, 2.0, 1, 1.0, 1, 1).unwrap();
        // single asset with variance 2 gives α′ = 1, k = h² = 1
        let model = MarketModel::from_rows(&[0.0], &[vec![2.0]], 0.0, 0.0).unwrap();
        let alpha = Alpha::single_asset(&model).unwrap();
        let state = SolverState::new(vec![0.5, 0.5, 0.5], PositiveScalar::from_value(1.0).unwrap(), grid.h);
        let bc = BoundaryCondition::Dirichlet(Arc::new(|_, _| 0.5));
        let sys = assemble_step(&state, &grid, &alpha, &Intertemporal::None, &bc, 0.0, SourceMode::Explicit).unwrap();
        assert_eq!(sys.diag, vec![3.0]);
        // rhs = φ₁ + k/h² (φ₀ + φ₂) = 0.5 + 1.0
        assert!((sys.rhs[0] - 1.5).abs() < 1e-15);
        assert!((sys.rhs[0] / sys.diag[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nonlocal_vanishes_without_intertemporal_utility() {
        let cfg = merton_config(9.0, 19, 10);
        let state = SolverState::new(vec![9.0; 21], PositiveScalar::from_value(2.0).unwrap(), cfg.grid.h);
        let j = nonlocal_term(&state, &cfg.grid, &Intertemporal::Exponential { kappa: 0.0, d: 3.0, rho: 0.0 }, 0.0).unwrap();
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonlocal_at_anchor_has_unit_weight() {
        let grid = SolverGrid::new(-1.0, 1.0, 19, 1.0, 10, 7).unwrap();
        let c = Intertemporal::Exponential { kappa: 1.0, d: 2.0, rho: 0.5 };
        let phi: Vec<f64> = grid.nodes().iter().map(|x| 1.0 + x * x).collect();
        let b = 3.0;
        let state = SolverState::new(phi.clone(), PositiveScalar::from_value(b).unwrap(), grid.h);
        let j = nonlocal_term(&state, &grid, &c, 0.2).unwrap();
        let d = c.eval(grid.x_star(), 0.2);
        let expect = -grid.h * (phi[7] * d.c_x + d.c_xx) / b;
        assert!((j[7] - expect).abs() < 1e-14 * expect.abs());
    }

    #[test]
    fn linearized_source_moves_phi_cx_to_the_diagonal() {
        let grid = SolverGrid::new(-1.0, 1.0, 19, 1.0, 10, 10).unwrap();
        let model = MarketModel::from_rows(&[0.1], &[vec![0.04]], 1.0, 0.0).unwrap();
        let alpha = Alpha::single_asset(&model).unwrap();
        let c = Intertemporal::Exponential { kappa: 1.0, d: 2.0, rho: 0.0 };
        let phi: Vec<f64> = (0..21).map(|i| 3.0 + 0.1 * i as f64).collect();
        let mut state = SolverState::new(phi.clone(), PositiveScalar::from_value(1.5).unwrap(), grid.h);
        state.refresh_cumulative(grid.h);
        let bc = BoundaryCondition::Neumann;
        let ex = assemble_step(&state, &grid, &alpha, &c, &bc, 0.0, SourceMode::Explicit).unwrap();
        let li = assemble_step(&state, &grid, &alpha, &c, &bc, 0.0, SourceMode::Linearized).unwrap();
        for row in 0..19 {
            let shift = li.diag[row] - ex.diag[row];
            assert!(shift > 0.0);
            // both systems agree when evaluated at the old layer
            let lhs_gap = shift * phi[row + 1];
            assert!((lhs_gap - (li.rhs[row] - ex.rhs[row])).abs() < 1e-12 * (1.0 + lhs_gap.abs()));
        }
        assert_eq!(ex.lower, li.lower);
        assert_eq!(ex.upper, li.upper);
    }

    #[test]
    fn linearized_source_respects_bounds_for_intermediate_d() {
        let grid = SolverGrid::from_steps(-1.0, 2.0, 0.03, 0.5, 0.5 * 0.03 * 0.03, 0.0).unwrap();
        let model = MarketModel::from_rows(&[0.12, 0.3], &[vec![0.0625, 0.02], vec![0.02, 0.36]], 1.0, 0.0).unwrap();
        let table = Arc::new(crate::alpha::build_alpha_table(&model, -1.0, 15.0, 0.1).unwrap());
        let run = |mode| {
            let mut cfg = EvolveConfig::new(
                grid.clone(),
                Alpha::tabulated(table.clone(), &model),
                TerminalUtility::Cara { a: 9.0 },
                Intertemporal::Exponential { kappa: 1.0, d: 0.5, rho: 0.0 },
            );
            cfg.source_mode = mode;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            evolve_with(&cfg, |v| {
                lo = v.phi.iter().copied().fold(lo, f64::min);
                hi = v.phi.iter().copied().fold(hi, f64::max);
            })
            .map(|_| (lo, hi))
        };
        let (lo, hi) = run(SourceMode::Linearized).unwrap();
        assert!(lo >= -1.0 - 0.3 && hi <= 9.0 + 0.3, "[{lo}, {hi}]");
        let explicit = run(SourceMode::Explicit);
        assert!(explicit.map_or(true, |(lo, _)| lo < -1.3));
    }

    #[test]
    fn trapezoid_of_constant_is_exact() {
        let grid = SolverGrid::new(-1.0, 1.0, 19, 1.0, 10, 7).unwrap();
        let phi = vec![2.5; grid.n_nodes()];
        let cum = cumulative_integral(&phi, grid.h);
        for i in 0..grid.n_nodes() {
            let expect = 2.5 * (grid.x(i) - grid.x(grid.i_star));
            assert!((cum[i] - cum[grid.i_star] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn b_updates() {
        // φ ≡ 0 with no inflow gives ω = −αφ = 0
        let grid = SolverGrid::new(-1.0, 1.0, 19, 1.0, 10, 10).unwrap();
        let model = MarketModel::from_rows(&[0.1], &[vec![0.04]], 0.0, 0.0).unwrap();
        let alpha = Alpha::single_asset(&model).unwrap();
        let state = SolverState::new(vec![0.0; 21], PositiveScalar::from_value(2.0).unwrap(), grid.h);
        assert_eq!(omega(&state, &grid, &alpha, 0.0), 0.0);
        let b = update_b(&state, &grid, &alpha, &Intertemporal::None, 0.0, BMode::Explicit).unwrap();
        assert!((b.value() - 2.0).abs() < 1e-14);

        // constant ∂ₓc = g at x_* = 0: c = −κe^{−dx} with d·κ = g at x=0, ϱ = 0
        let c = Intertemporal::Exponential { kappa: 0.5, d: 1.0, rho: 0.0 };
        let g = c.eval(grid.x_star(), 0.0).c_x;
        assert!((g - 0.5).abs() < 1e-14);
        let mut st = state.clone();
        for j in 0..5 {
            st.b = update_b(&st, &grid, &alpha, &c, grid.tau(j), BMode::Implicit).unwrap();
        }
        assert!((st.b.value() - (2.0 + 5.0 * grid.k * g)).abs() < 1e-13);
    }

    #[test]
    fn b_update_rejects_collapse() {
        let grid = SolverGrid::new(-1.0, 1.0, 19, 1.0, 1, 9).unwrap();
        let model = MarketModel::from_rows(&[0.0], &[vec![0.04]], 0.0, 0.0).unwrap();
        let alpha = Alpha::single_asset(&model).unwrap();
        // a steep gradient at the anchor drives kω above 1
        let mut phi = vec![0.0; 21];
        phi[10] = 1000.0;
        phi[8] = -1000.0;
        let state = SolverState::new(phi, PositiveScalar::from_value(1.0).unwrap(), grid.h);
        assert!(omega(&state, &grid, &alpha, 0.0) > 1.0);
        let err = update_b(&state, &grid, &alpha, &Intertemporal::None, 0.0, BMode::Explicit);
        assert!(matches!(err, Err(Error::NonpositiveB(1))));
    }

    #[test]
    fn merton_fixed_point_over_full_run() {
        let cfg = merton_config(9.0, 39, 200);
        let bundle = evolve(&cfg).unwrap();
        assert!(bundle.final_phi.iter().all(|&p| (p - 9.0).abs() < 1e-10));
        assert!(bundle.b_path.iter().all(|b| b.value() > 0.0));
    }
}
