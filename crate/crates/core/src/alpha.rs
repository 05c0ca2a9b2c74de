//! The diffusion function α: tabulated from the parametric QP, or in closed form.
//!
//! For the quadratic family the dependence on the state is separable,
//! `α(x, τ, φ) = α̃(φ) − εe^{−x} − r`, so only `α̃` is tabulated. Table
//! derivatives come from the envelope identity `α̃′(φ) = ½θ̂ᵀΣθ̂` rather than
//! from differencing.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::HermiteSpline;
use crate::market::MarketModel;
use crate::qp::{solve_parametric_qp_warm, PHI_FLOOR};

/// Pole-side floor for the closed-form benchmark function `φ − 1/(φ+2)`.
pub const BENCHMARK_PHI_FLOOR: f64 = -2.0 + 1e-6;

#[derive(Debug, Clone)]
pub struct AlphaTable {
    phi_grid: Vec<f64>,
    alpha_vals: Vec<f64>,
    alpha_prime_vals: Vec<f64>,
    theta_rows: Vec<Vec<f64>>,
    phi_min_eff: f64,
    alpha_interp: HermiteSpline,
    theta_interp: Vec<HermiteSpline>,
}

/// One change of the optimal support between adjacent table nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoint {
    /// Index of the left node of the interval where the support changes.
    pub node: usize,
    pub phi_left: f64,
    pub phi_right: f64,
    pub support_left: Vec<usize>,
    pub support_right: Vec<usize>,
}

impl AlphaTable {
    /// Assembles a table from raw columns, validating the invariants.
    pub fn from_columns(
        phi_grid: Vec<f64>,
        alpha_vals: Vec<f64>,
        alpha_prime_vals: Vec<f64>,
        theta_rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = phi_grid.len();
        if n < 2 || alpha_vals.len() != n || alpha_prime_vals.len() != n || theta_rows.len() != n {
            return Err(Error::Parse("table columns must have equal length >= 2".into()));
        }
        let assets = theta_rows[0].len();
        if assets == 0 || theta_rows.iter().any(|r| r.len() != assets) {
            return Err(Error::Parse("ragged theta rows".into()));
        }
        for w in phi_grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Parse("phi grid is not strictly increasing".into()));
            }
        }
        for (i, w) in alpha_vals.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::TableMonotonicityViolation { lo: phi_grid[i], hi: phi_grid[i + 1] });
            }
        }
        if alpha_prime_vals.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Parse("alpha' must be positive".into()));
        }
        let alpha_interp = HermiteSpline::monotone(phi_grid.clone(), alpha_vals.clone(), alpha_prime_vals.clone());
        let theta_interp = (0..assets)
            .map(|a| HermiteSpline::pchip(phi_grid.clone(), theta_rows.iter().map(|r| r[a]).collect()))
            .collect();
        Ok(Self {
            phi_min_eff: phi_grid[0],
            phi_grid,
            alpha_vals,
            alpha_prime_vals,
            theta_rows,
            alpha_interp,
            theta_interp,
        })
    }

    pub fn phi_grid(&self) -> &[f64] {
        &self.phi_grid
    }

    pub fn alpha_vals(&self) -> &[f64] {
        &self.alpha_vals
    }

    pub fn alpha_prime_vals(&self) -> &[f64] {
        &self.alpha_prime_vals
    }

    pub fn theta_rows(&self) -> &[Vec<f64>] {
        &self.theta_rows
    }

    pub fn phi_min_eff(&self) -> f64 {
        self.phi_min_eff
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_grid[self.phi_grid.len() - 1]
    }

    pub fn n_assets(&self) -> usize {
        self.theta_rows[0].len()
    }

    pub fn len(&self) -> usize {
        self.phi_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_grid.is_empty()
    }

    pub fn contains(&self, phi: f64) -> bool {
        phi >= self.phi_min_eff && phi <= self.phi_max()
    }

    /// `(α̃, α̃′, clamped)` at `phi`, clamping to the table range.
    pub fn eval_tilde(&self, phi: f64) -> (f64, f64, bool) {
        let clamped = !self.contains(phi);
        let (a, d) = self.alpha_interp.eval(phi);
        (a, d, clamped)
    }

    /// Interpolated minimizer, projected back onto the simplex.
    pub fn theta_at(&self, phi: f64) -> Vec<f64> {
        let mut th: Vec<f64> = self.theta_interp.iter().map(|s| s.value(phi).max(0.0)).collect();
        let sum: f64 = th.iter().sum();
        if sum > 0.0 {
            th.iter_mut().for_each(|t| *t /= sum);
        } else {
            th = vec![1.0 / th.len() as f64; th.len()];
        }
        th
    }

    fn support(row: &[f64]) -> Vec<usize> {
        row.iter().enumerate().filter(|(_, &t)| t > 1e-12).map(|(i, _)| i).collect()
    }

    /// Intervals where the set of assets with positive weight changes.
    pub fn breakpoints(&self) -> Vec<Breakpoint> {
        let mut out = Vec::new();
        for i in 0..self.len() - 1 {
            let l = Self::support(&self.theta_rows[i]);
            let r = Self::support(&self.theta_rows[i + 1]);
            if l != r {
                out.push(Breakpoint {
                    node: i,
                    phi_left: self.phi_grid[i],
                    phi_right: self.phi_grid[i + 1],
                    support_left: l,
                    support_right: r,
                });
            }
        }
        out
    }

    /// CSV with header `phi,alpha,alpha_prime,theta_1..theta_n`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("phi,alpha,alpha_prime");
        for a in 1..=self.n_assets() {
            write!(header, ",theta_{a}").unwrap();
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            let mut line = format!(
                "{},{},{}",
                fmt17(self.phi_grid[i]),
                fmt17(self.alpha_vals[i]),
                fmt17(self.alpha_prime_vals[i])
            );
            for t in &self.theta_rows[i] {
                line.push(',');
                line.push_str(&fmt17(*t));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty table".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 4 || cols[0] != "phi" || cols[1] != "alpha" || cols[2] != "alpha_prime" {
            return Err(Error::Parse(format!("unexpected header `{header}`")));
        }
        for (k, c) in cols[3..].iter().enumerate() {
            if *c != format!("theta_{}", k + 1) {
                return Err(Error::Parse(format!("unexpected column `{c}`")));
            }
        }
        let (mut phi, mut alpha, mut prime, mut theta) = (vec![], vec![], vec![], vec![]);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .trim()
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != cols.len() {
                return Err(Error::Parse(format!("row has {} fields, expected {}", vals.len(), cols.len())));
            }
            phi.push(vals[0]);
            alpha.push(vals[1]);
            prime.push(vals[2]);
            theta.push(vals[3..].to_vec());
        }
        Self::from_columns(phi, alpha, prime, theta)
    }
}

pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Tabulates `α̃` on `[phi_lo, phi_hi]` with step `h_phi`, warm-starting
/// each QP from the previous node. A lower bound at or below the convexity
/// floor is raised to it.
pub fn build_alpha_table(model: &MarketModel, phi_lo: f64, phi_hi: f64, h_phi: f64) -> Result<AlphaTable> {
    if phi_lo < -1.0 {
        return Err(Error::PhiOutOfDomain { phi: phi_lo, floor: PHI_FLOOR });
    }
    if !(h_phi > 0.0) {
        return Err(Error::Config(format!("h_phi must be positive, got {h_phi}")));
    }
    let lo = phi_lo.max(PHI_FLOOR);
    if !(phi_hi > lo) {
        return Err(Error::Config(format!("empty phi range [{lo}, {phi_hi}]")));
    }
    let intervals = ((phi_hi - lo) / h_phi - 1e-9).ceil().max(1.0) as usize;
    let count = intervals + 1;
    let mut grid: Vec<f64> = (0..count - 1).map(|i| lo + i as f64 * h_phi).collect();
    grid.push(phi_hi);

    let mut alpha = Vec::with_capacity(count);
    let mut prime = Vec::with_capacity(count);
    let mut rows = Vec::with_capacity(count);
    let mut prev: Option<Vec<f64>> = None;
    for &phi in &grid {
        let sol = solve_parametric_qp_warm(model, phi, prev.as_deref())?;
        alpha.push(sol.value);
        prime.push(sol.half_variance(model));
        prev = Some(sol.theta.clone());
        rows.push(sol.theta);
    }
    AlphaTable::from_columns(grid, alpha, prime, rows)
}

/// Closed-form benchmark diffusion function `α(φ) = φ − 1/(φ+2)` and its derivative.
pub fn eval_alpha_closed(phi: f64) -> Result<(f64, f64)> {
    if !(phi > BENCHMARK_PHI_FLOOR) {
        return Err(Error::PhiOutOfDomain { phi, floor: BENCHMARK_PHI_FLOOR });
    }
    Ok(benchmark_alpha(phi))
}

fn benchmark_alpha(phi: f64) -> (f64, f64) {
    let r = 1.0 / (phi + 2.0);
    (phi - r, 1.0 + r * r)
}

/// Value of α and its partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEval {
    pub alpha: f64,
    pub alpha_x: f64,
    pub alpha_phi: f64,
    /// True when φ was outside the admissible domain and clamped.
    pub clamped: bool,
}

/// Evaluates the separable tabulated α for a market model.
pub fn eval_alpha(table: &AlphaTable, x: f64, _tau: f64, phi: f64, model: &MarketModel) -> AlphaEval {
    separable(table.eval_tilde(phi), x, model.epsilon(), model.rate())
}

fn separable((tilde, prime, clamped): (f64, f64, bool), x: f64, epsilon: f64, rate: f64) -> AlphaEval {
    let inflow = if epsilon != 0.0 { epsilon * (-x).exp() } else { 0.0 };
    AlphaEval { alpha: tilde - inflow - rate, alpha_x: inflow, alpha_phi: prime, clamped }
}

/// The diffusion function driving the transformed PDE.
#[derive(Debug, Clone)]
pub enum Alpha {
    /// Interpolated QP table plus `α₀(x) = −εe^{−x} − r`.
    Tabulated { table: Arc<AlphaTable>, epsilon: f64, rate: f64 },
    /// Single asset: the simplex forces θ = 1, so `α̃(φ) = −m + ((φ+1)/2)s` exactly.
    SingleAsset { mean: f64, variance: f64, epsilon: f64, rate: f64 },
    /// `α(φ) = φ − 1/(φ+2)`, no state dependence.
    Benchmark,
}

impl Alpha {
    pub fn tabulated(table: Arc<AlphaTable>, model: &MarketModel) -> Self {
        Alpha::Tabulated { table, epsilon: model.epsilon(), rate: model.rate() }
    }

    /// Exact α for a one-asset model; `None` when the model has more assets.
    pub fn single_asset(model: &MarketModel) -> Option<Self> {
        (model.n_assets() == 1).then(|| Alpha::SingleAsset {
            mean: model.mu()[0],
            variance: model.sigma_cov()[(0, 0)],
            epsilon: model.epsilon(),
            rate: model.rate(),
        })
    }

    /// Admissible φ range `(lower, upper)`.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Alpha::Tabulated { table, .. } => (table.phi_min_eff(), table.phi_max()),
            Alpha::SingleAsset { .. } => (PHI_FLOOR, f64::INFINITY),
            Alpha::Benchmark => (BENCHMARK_PHI_FLOOR, f64::INFINITY),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, _tau: f64, phi: f64) -> AlphaEval {
        match self {
            Alpha::Tabulated { table, epsilon, rate } => separable(table.eval_tilde(phi), x, *epsilon, *rate),
            Alpha::SingleAsset { mean, variance, epsilon, rate } => {
                let clamped = phi < PHI_FLOOR;
                let p = phi.max(PHI_FLOOR);
                let tilde = -mean + 0.5 * (p + 1.0) * variance;
                separable((tilde, 0.5 * variance, clamped), x, *epsilon, *rate)
            }
            Alpha::Benchmark => {
                let clamped = phi <= BENCHMARK_PHI_FLOOR;
                let (a, d) = benchmark_alpha(phi.max(BENCHMARK_PHI_FLOOR));
                AlphaEval { alpha: a, alpha_x: 0.0, alpha_phi: d, clamped }
            }
        }
    }

    /// Optimal weights at φ, when the variant carries them.
    pub fn theta(&self, phi: f64) -> Option<Vec<f64>> {
        match self {
            Alpha::Tabulated { table, .. } => Some(table.theta_at(phi)),
            Alpha::SingleAsset { .. } => Some(vec![1.0]),
            Alpha::Benchmark => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity2() -> MarketModel {
        MarketModel::from_rows(&[0.1, 0.2], &[vec![1.0, 0.0], vec![0.0, 1.0]], 0.0, 0.0).unwrap()
    }

    #[test]
    fn single_asset_table_is_affine() {
        let (m, s) = (0.08, 0.05);
        let model = MarketModel::from_rows(&[m], &[vec![s]], 0.0, 0.0).unwrap();
        let t = build_alpha_table(&model, -0.5, 3.0, 0.25).unwrap();
        for (i, &phi) in t.phi_grid().iter().enumerate() {
            assert!((t.alpha_vals()[i] - (-m + 0.5 * (phi + 1.0) * s)).abs() < 1e-15);
            assert!((t.alpha_prime_vals()[i] - s / 2.0).abs() < 1e-15);
        }
        let mid = 0.5 * (t.phi_grid()[3] + t.phi_grid()[4]);
        let (a, d, clamped) = t.eval_tilde(mid);
        assert!(!clamped);
        assert!((a - (-m + 0.5 * (mid + 1.0) * s)).abs() < 1e-12);
        assert!((d - s / 2.0).abs() < 1e-12);
    }

    #[test]
    fn node_count_matches_range() {
        let t = build_alpha_table(&identity2(), 0.0, 4.0, 0.5).unwrap();
        assert_eq!(t.len(), 9);
        let model = MarketModel::from_rows(&[0.1], &[vec![0.04]], 0.0, 0.0).unwrap();
        let wide = build_alpha_table(&model, -1.0, 15.0, 0.05).unwrap();
        assert_eq!(wide.len(), 321);
        assert_eq!(wide.phi_min_eff(), PHI_FLOOR);
        assert_eq!(wide.phi_max(), 15.0);
    }

    #[test]
    fn two_asset_table_matches_closed_form() {
        // interior KKT solution θ₁ = ½ − 0.025/c while it is feasible
        let t = build_alpha_table(&identity2(), 0.0, 4.0, 0.5).unwrap();
        for (i, &phi) in t.phi_grid().iter().enumerate() {
            let c = 0.5 * (phi + 1.0);
            let t1: f64 = 0.5 - 0.025 / c;
            let v = c * (t1 * t1 + (1.0 - t1) * (1.0 - t1)) - (0.1 * t1 + 0.2 * (1.0 - t1));
            assert!((t.alpha_vals()[i] - v).abs() < 1e-12);
        }
        assert!(t.alpha_vals().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn eval_alpha_separable_terms() {
        let model = identity2().with_inflow(1.0, 0.0).unwrap();
        let t = build_alpha_table(&model, 0.0, 4.0, 0.5).unwrap();
        let e = eval_alpha(&t, 0.0, 0.0, 1.0, &model);
        assert!((e.alpha - (t.alpha_vals()[2] - 1.0)).abs() < 1e-14);
        assert!((e.alpha_x - 1.0).abs() < 1e-15);
        assert!(e.alpha_phi > 0.0);

        let plain = eval_alpha(&t, 3.0, 0.0, 1.0, &identity2());
        assert_eq!(plain.alpha_x, 0.0);
        assert!((plain.alpha - t.alpha_vals()[2]).abs() < 1e-14);
    }

    #[test]
    fn clamps_outside_table() {
        let t = build_alpha_table(&identity2(), 0.0, 4.0, 0.5).unwrap();
        let (a, _, clamped) = t.eval_tilde(5.0);
        assert!(clamped);
        assert_eq!(a, *t.alpha_vals().last().unwrap());
    }

    #[test]
    fn closed_form_values() {
        let (a, d) = eval_alpha_closed(0.0).unwrap();
        assert_eq!((a, d), (-0.5, 1.25));
        let (a, d) = eval_alpha_closed(-1.0).unwrap();
        assert_eq!((a, d), (-2.0, 2.0));
        let (a, _) = eval_alpha_closed(1.0).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(eval_alpha_closed(-2.0), Err(Error::PhiOutOfDomain { .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let model = MarketModel::from_rows(
            &[0.05, 0.12, 0.08],
            &[vec![0.04, 0.01, 0.0], vec![0.01, 0.09, 0.02], vec![0.0, 0.02, 0.05]],
            0.0,
            0.0,
        )
        .unwrap();
        let t = build_alpha_table(&model, -1.0, 6.0, 0.1).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("phi,alpha,alpha_prime,theta_1,theta_2,theta_3\n"));
        let back = AlphaTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back.phi_grid(), t.phi_grid());
        assert_eq!(back.alpha_vals(), t.alpha_vals());
        assert_eq!(back.theta_rows(), t.theta_rows());
    }

    #[test]
    fn rejects_bad_header() {
        let err = AlphaTable::read_csv(&b"phi,a,b\n0,1,2\n"[..]);
        assert!(matches!(err, Err(Error::Parse(_))));
    }

    #[test]
    fn theta_interpolation_hits_nodes() {
        let t = build_alpha_table(&identity2(), 0.0, 4.0, 0.5).unwrap();
        let th = t.theta_at(1.0);
        assert!((th[0] - 0.475).abs() < 1e-12 && (th[1] - 0.525).abs() < 1e-12);
    }
}
