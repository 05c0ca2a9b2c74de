//! Traveling-wave test case with a known exact solution, error norms and
//! the experimental order of convergence.
//!
//! With `u = arctan`, `α(φ) = φ − 1/(φ+2)` and the forcing
//! `c(x, T−τ) = W(x − vτ)`, `W(ξ) = (−v + α(a(ξ))) u′(ξ)`, the field
//! `φ(x, τ) = a(x − vτ)`, `a(ξ) = 2ξ/(1+ξ²)`, solves the transformed equation.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::alpha::{eval_alpha_closed, fmt17, Alpha};
use crate::error::{Error, Result};
use crate::grid::SolverGrid;
use crate::pde::{evolve_with, BoundaryCondition, EvolveConfig, LayerView};
use crate::utility::{CDerivs, Intertemporal, TerminalUtility};

/// Domain used for the standard runs.
pub const WAVE_DOMAIN: (f64, f64) = (-20.0, 20.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelingWaveCase {
    pub speed_v: f64,
    pub horizon: f64,
    /// Requested anchor `x_*`; the nearest interior node is used.
    pub anchor: f64,
}

impl Default for TravelingWaveCase {
    fn default() -> Self {
        Self::new(5.0, 1.0)
    }
}

/// `a(ξ) = 2ξ/(1+ξ²)` and its first two derivatives.
fn wave_profile(xi: f64) -> (f64, f64, f64) {
    let q = 1.0 + xi * xi;
    (2.0 * xi / q, 2.0 * (1.0 - xi * xi) / (q * q), 4.0 * xi * (xi * xi - 3.0) / (q * q * q))
}

impl TravelingWaveCase {
    pub fn new(speed_v: f64, horizon: f64) -> Self {
        Self { speed_v, horizon, anchor: WAVE_DOMAIN.0 }
    }

    /// `φ_exact(x, τ) = a(x − vτ)`.
    pub fn exact(&self, x: f64, tau: f64) -> f64 {
        wave_profile(x - self.speed_v * tau).0
    }

    /// `∂ₓφ_exact(x, τ)`.
    pub fn exact_slope(&self, x: f64, tau: f64) -> f64 {
        wave_profile(x - self.speed_v * tau).1
    }

    /// `W(ξ)` and its first two derivatives.
    pub fn w(&self, xi: f64) -> CDerivs {
        let (a, a1, a2) = wave_profile(xi);
        let p = 1.0 / (1.0 + xi * xi);
        let p1 = -a * p;
        let p2 = (a * a - a1) * p;
        let (alpha, alpha1) = eval_alpha_closed(a).expect("a(ξ) stays in [−1, 1]");
        let alpha2 = -2.0 / (a + 2.0).powi(3);
        let g = -self.speed_v + alpha;
        let g1 = alpha1 * a1;
        let g2 = alpha2 * a1 * a1 + alpha1 * a2;
        CDerivs { c: g * p, c_x: g1 * p + g * p1, c_xx: g2 * p + 2.0 * g1 * p1 + g * p2 }
    }

    /// Forcing `c` and x-derivatives at `(x, τ)`.
    pub fn forcing_c(&self, x: f64, tau: f64) -> CDerivs {
        self.w(x - self.speed_v * tau)
    }

    pub fn dirichlet(&self) -> BoundaryCondition {
        let case = *self;
        BoundaryCondition::Dirichlet(Arc::new(move |x, tau| case.exact(x, tau)))
    }

    /// Configuration on `[−20, 20]` with `k = h²` and exact Dirichlet data.
    /// The default anchor is the first interior node.
    pub fn config(&self, h: f64) -> Result<EvolveConfig> {
        let grid = SolverGrid::from_steps(WAVE_DOMAIN.0, WAVE_DOMAIN.1, h, self.horizon, h * h, self.anchor)?;
        let mut cfg = EvolveConfig::new(grid, Alpha::Benchmark, TerminalUtility::Arctan, Intertemporal::TravelingWave(*self));
        cfg.bc = self.dirichlet();
        Ok(cfg)
    }
}

/// Running `max_τ ‖e(·, τ)‖` in the discrete `L₂` and `L∞` norms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorAccumulator {
    pub err_l2: f64,
    pub err_linf: f64,
}

impl ErrorAccumulator {
    pub fn observe<F: Fn(f64) -> f64>(&mut self, h: f64, xs: impl Iterator<Item = f64>, phi: &[f64], exact: F) {
        let (l2, linf) = layer_norms(h, xs.zip(phi).map(|(x, p)| p - exact(x)));
        self.err_l2 = self.err_l2.max(l2);
        self.err_linf = self.err_linf.max(linf);
    }
}

/// `(sqrt(h Σ eᵢ²), max |eᵢ|)`.
pub fn layer_norms(h: f64, errors: impl Iterator<Item = f64>) -> (f64, f64) {
    let (sq, mx) = errors.fold((0.0, 0.0f64), |(s, m), e| (s + e * e, m.max(e.abs())));
    ((h * sq).sqrt(), mx)
}

/// Space-time error norms over a set of recorded layers.
pub fn error_norms<F: Fn(f64, f64) -> f64>(snapshots: &[crate::reconstruct::Snapshot], exact: F, grid: &SolverGrid) -> (f64, f64) {
    let mut acc = ErrorAccumulator::default();
    for s in snapshots {
        acc.observe(grid.h, (0..s.phi.len()).map(|i| grid.x(i)), &s.phi, |x| exact(x, s.tau));
    }
    (acc.err_l2, acc.err_linf)
}

/// `EOC_j = ln(e_{j+1}/e_j) / ln(h_{j+1}/h_j)`.
pub fn eoc(errors: &[(f64, f64)]) -> Result<Vec<f64>> {
    if errors.iter().any(|&(_, e)| !(e > 0.0)) {
        return Err(Error::NonpositiveError);
    }
    if errors.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::Config("h must be strictly decreasing".into()));
    }
    Ok(errors.windows(2).map(|w| (w[1].1 / w[0].1).ln() / (w[1].0 / w[0].0).ln()).collect())
}

/// Error profile `φ_num − φ_exact` at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub tau: f64,
    pub error: Vec<f64>,
}

/// Result of one benchmark solve.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub h: f64,
    pub err_l2: f64,
    pub err_linf: f64,
    pub grid: SolverGrid,
    pub profiles: Vec<ErrorProfile>,
    pub clamp_count: u64,
}

impl BenchmarkRun {
    /// `x,tau,error` for every recorded profile.
    pub fn write_profiles_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,tau,error")?;
        for p in &self.profiles {
            for (i, e) in p.error.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt17(self.grid.x(i)), fmt17(p.tau), fmt17(*e))?;
            }
        }
        Ok(())
    }
}

/// Solves the case at spatial step `h` (with `k = h²`), measuring the error
/// at every layer and keeping profiles at `τ = jT/profile_count`.
pub fn run_benchmark(case: &TravelingWaveCase, h: f64, profile_count: usize) -> Result<BenchmarkRun> {
    let cfg = case.config(h)?;
    let grid = cfg.grid.clone();
    let mut profile_layers: Vec<usize> = (0..=profile_count)
        .map(|j| grid.layer_of(j as f64 * grid.horizon / profile_count.max(1) as f64))
        .collect();
    profile_layers.dedup();

    let mut acc = ErrorAccumulator::default();
    let mut profiles = Vec::new();
    let bundle = evolve_with(&cfg, |view: &LayerView| {
        acc.observe(grid.h, (0..view.phi.len()).map(|i| grid.x(i)), view.phi, |x| case.exact(x, view.tau));
        if profile_count > 0 && profile_layers.contains(&view.j) {
            let error = view.phi.iter().enumerate().map(|(i, p)| p - case.exact(grid.x(i), view.tau)).collect();
            profiles.push(ErrorProfile { tau: view.tau, error });
        }
    })?;
    Ok(BenchmarkRun { h, err_l2: acc.err_l2, err_linf: acc.err_linf, grid, profiles, clamp_count: bundle.clamp_count })
}

/// One row of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub err_l2: f64,
    pub eoc_l2: Option<f64>,
    pub err_linf: f64,
    pub eoc_linf: Option<f64>,
}

/// Runs a ladder of decreasing `h` in parallel.
pub fn run_ladder(case: &TravelingWaveCase, hs: &[f64], profile_count: usize) -> Result<(Vec<ConvergenceRow>, Vec<BenchmarkRun>)> {
    let runs: Vec<BenchmarkRun> = hs.par_iter().map(|&h| run_benchmark(case, h, profile_count)).collect::<Result<_>>()?;
    let rows = convergence_table(&runs.iter().map(|r| (r.h, r.err_l2, r.err_linf)).collect::<Vec<_>>())?;
    Ok((rows, runs))
}

/// Builds table rows from `(h, err_l2, err_linf)` triples.
pub fn convergence_table(errors: &[(f64, f64, f64)]) -> Result<Vec<ConvergenceRow>> {
    let e2 = eoc(&errors.iter().map(|&(h, e, _)| (h, e)).collect::<Vec<_>>())?;
    let ei = eoc(&errors.iter().map(|&(h, _, e)| (h, e)).collect::<Vec<_>>())?;
    Ok(errors
        .iter()
        .enumerate()
        .map(|(j, &(h, err_l2, err_linf))| ConvergenceRow {
            h,
            err_l2,
            eoc_l2: j.checked_sub(1).map(|p| e2[p]),
            err_linf,
            eoc_linf: j.checked_sub(1).map(|p| ei[p]),
        })
        .collect())
}

/// `h,errL2,eocL2,errLinf,eocLinf`; the first row leaves the EOC cells empty.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut w: W) -> Result<()> {
    writeln!(w, "h,errL2,eocL2,errLinf,eocLinf")?;
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for r in rows {
        writeln!(w, "{},{},{},{},{}", fmt17(r.h), fmt17(r.err_l2), opt(r.eoc_l2), fmt17(r.err_linf), opt(r.eoc_linf))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w_at_origin() {
        let case = TravelingWaveCase::default();
        let w = case.w(0.0);
        assert!((w.c + 5.5).abs() < 1e-15);
    }

    #[test]
    fn w_decays() {
        let case = TravelingWaveCase::default();
        assert!(case.w(1e4).c.abs() < 1e-6);
        assert!(case.w(-1e4).c.abs() < 1e-6);
    }

    #[test]
    fn derivatives_match_centered_differences() {
        let case = TravelingWaveCase::default();
        let d = 1e-4;
        for &x in &[-7.3, -2.0, -0.4, 0.0, 0.3, 1.0, 1.7320508, 4.2, 9.0] {
            for &tau in &[0.0, 0.37, 1.0] {
                let c = case.forcing_c(x, tau);
                let (cp, cm) = (case.forcing_c(x + d, tau), case.forcing_c(x - d, tau));
                assert!(((cp.c - cm.c) / (2.0 * d) - c.c_x).abs() < 1e-6, "c_x at {x}");
                assert!(((cp.c_x - cm.c_x) / (2.0 * d) - c.c_xx).abs() < 1e-6, "c_xx at {x}");
            }
        }
    }

    #[test]
    fn exact_solution_starts_at_risk_aversion() {
        let case = TravelingWaveCase::default();
        for &x in &[-3.0, 0.0, 0.5, 2.0] {
            assert_eq!(case.exact(x, 0.0), TerminalUtility::Arctan.risk_aversion(x));
        }
        assert_eq!(case.exact(5.0, 1.0), 0.0);
    }

    #[test]
    fn norms_of_constant_error() {
        let (l2, linf) = layer_norms(0.1, std::iter::repeat(-0.3).take(40));
        assert!((l2 - 0.3 * (0.1f64 * 40.0).sqrt()).abs() < 1e-15);
        assert_eq!(linf, 0.3);
        assert_eq!(layer_norms(0.1, std::iter::repeat(0.0).take(5)), (0.0, 0.0));
    }

    #[test]
    fn eoc_of_quadratic_errors_is_two() {
        let e = eoc(&[(0.1, 0.03), (0.05, 0.0075), (0.025, 0.001875)]).unwrap();
        assert!(e.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(eoc(&[(0.1, 1.0)]).unwrap().is_empty());
        assert!(matches!(eoc(&[(0.1, 1.0), (0.05, 0.0)]), Err(Error::NonpositiveError)));
    }

    #[test]
    fn eoc_of_published_pairs() {
        let e = eoc(&[(0.05, 1.1886e-01), (0.025, 3.2102e-02)]).unwrap();
        assert!((e[0] - 1.8885).abs() < 5e-5);
        let e = eoc(&[(0.0125, 8.1969e-03), (0.01, 5.2598e-03)]).unwrap();
        assert!((e[0] - 1.9882).abs() < 5e-5);
    }

    #[test]
    fn convergence_csv_layout() {
        let rows = convergence_table(&[(0.1, 0.04, 0.02), (0.05, 0.01, 0.005)]).unwrap();
        assert_eq!(rows[0].eoc_l2, None);
        let mut buf = Vec::new();
        write_convergence_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "h,errL2,eocL2,errLinf,eocLinf");
        assert!(lines[1].contains(",,"));
        assert_eq!(lines[2].split(',').count(), 5);
    }
}
