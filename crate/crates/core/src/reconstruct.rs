//! Recovery of V, ψ, a(t), b(t) and the optimal weights from a solved φ field.
//!
//! With `Φ` the trapezoid antiderivative of φ on the mesh,
//!
//! ```text
//! V(x, t) = a(t) + b(t) ∫_{x_*}^x e^{−(Φ(ξ) − Φ(x_*))} dξ,
//! ψ(x, τ) = e^{Φ(x) − Φ(x_*)} / b(t) = 1 / ∂ₓV,
//! ```
//!
//! where the outer integral is also a composite trapezoid rule.

use std::io::Write;

use crate::alpha::{fmt17, Alpha, AlphaTable};
use crate::error::{Error, Result};
use crate::grid::SolverGrid;
use crate::pde::{cumulative_integral, PositiveScalar};
use crate::utility::{Intertemporal, TerminalUtility};

/// A recorded φ profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub layer: usize,
    pub tau: f64,
    pub phi: Vec<f64>,
}

/// Output of one run: φ snapshots, per-layer scalars and derived fields.
#[derive(Debug, Clone)]
pub struct SolutionBundle {
    pub grid: SolverGrid,
    pub snapshots: Vec<Snapshot>,
    /// `a` at every layer `τ_j`, `j = 0..=m`.
    pub a_path: Vec<f64>,
    /// `b` at every layer.
    pub b_path: Vec<PositiveScalar>,
    /// φ at the anchor node at every layer.
    pub phi_star_path: Vec<f64>,
    pub final_phi: Vec<f64>,
    pub clamp_count: u64,
    pub bounds_violations: u64,
    /// One column per snapshot.
    pub v_field: Option<Vec<Vec<f64>>>,
    pub psi_field: Option<Vec<Vec<f64>>>,
    /// `[snapshot][node][asset]`.
    pub theta_field: Option<Vec<Vec<Vec<f64>>>>,
}

impl SolutionBundle {
    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

/// Re-integrates `da/dτ = −γ b + c(x_*, τ)` with forward Euler in τ,
/// starting from `a(τ=0) = u(x_*)`; `γ = α(x_*, τ, φ(x_*, τ))`.
pub fn reconstruct_a(bundle: &SolutionBundle, alpha: &Alpha, terminal: &TerminalUtility, c_util: &Intertemporal) -> Vec<f64> {
    let grid = &bundle.grid;
    let x_star = grid.x_star();
    let mut a = terminal.value(x_star);
    let mut out = Vec::with_capacity(bundle.b_path.len());
    for (j, (b, &p)) in bundle.b_path.iter().zip(&bundle.phi_star_path).enumerate() {
        out.push(a);
        let tau = grid.tau(j);
        let gamma = alpha.eval(x_star, tau, p).alpha;
        a += grid.k * (-gamma * b.value() + c_util.eval(x_star, tau).c);
    }
    out
}

/// `V` on the mesh for one φ profile with the given `a`, `b`.
pub fn value_column(phi: &[f64], grid: &SolverGrid, a: f64, b: PositiveScalar) -> Vec<f64> {
    let cum = cumulative_integral(phi, grid.h);
    let anchor = cum[grid.i_star];
    let dv: Vec<f64> = cum.iter().map(|c| (b.ln() - (c - anchor)).exp()).collect();
    let mut v = vec![0.0; phi.len()];
    v[grid.i_star] = a;
    for i in grid.i_star + 1..phi.len() {
        v[i] = v[i - 1] + 0.5 * grid.h * (dv[i - 1] + dv[i]);
    }
    for i in (0..grid.i_star).rev() {
        v[i] = v[i + 1] - 0.5 * grid.h * (dv[i] + dv[i + 1]);
    }
    v
}

/// `ψ = 1/∂ₓV` on the mesh for one φ profile.
pub fn psi_column(phi: &[f64], grid: &SolverGrid, b: PositiveScalar) -> Vec<f64> {
    let cum = cumulative_integral(phi, grid.h);
    let anchor = cum[grid.i_star];
    cum.iter().map(|c| (c - anchor - b.ln()).exp()).collect()
}

/// V for every snapshot. Fails if a column decreases in x.
pub fn reconstruct_v(bundle: &SolutionBundle) -> Result<Vec<Vec<f64>>> {
    bundle
        .snapshots
        .iter()
        .map(|s| {
            let col = value_column(&s.phi, &bundle.grid, bundle.a_path[s.layer], bundle.b_path[s.layer]);
            if col.iter().any(|v| !v.is_finite()) || col.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::MonotonicityViolation(s.tau));
            }
            Ok(col)
        })
        .collect()
}

pub fn reconstruct_psi(bundle: &SolutionBundle) -> Vec<Vec<f64>> {
    bundle.snapshots.iter().map(|s| psi_column(&s.phi, &bundle.grid, bundle.b_path[s.layer])).collect()
}

/// Interpolated optimal weights at every snapshot node.
pub fn extract_weights(bundle: &SolutionBundle, table: &AlphaTable) -> Vec<Vec<Vec<f64>>> {
    bundle
        .snapshots
        .iter()
        .map(|s| s.phi.iter().map(|&p| table.theta_at(p)).collect())
        .collect()
}

/// Fills the V, ψ and (when a table is given) θ fields.
pub fn reconstruct_all(bundle: &mut SolutionBundle, table: Option<&AlphaTable>) -> Result<()> {
    bundle.v_field = Some(reconstruct_v(bundle)?);
    bundle.psi_field = Some(reconstruct_psi(bundle));
    bundle.theta_field = table.map(|t| extract_weights(bundle, t));
    Ok(())
}

/// `x,phi` for one snapshot.
pub fn write_snapshot_csv<W: Write>(snapshot: &Snapshot, grid: &SolverGrid, mut w: W) -> Result<()> {
    writeln!(w, "x,phi")?;
    for (i, p) in snapshot.phi.iter().enumerate() {
        writeln!(w, "{},{}", fmt17(grid.x(i)), fmt17(*p))?;
    }
    Ok(())
}

/// Long-format `x,tau,<name>` table over all snapshots.
pub fn write_field_csv<W: Write>(bundle: &SolutionBundle, field: &[Vec<f64>], name: &str, mut w: W) -> Result<()> {
    writeln!(w, "x,tau,{name}")?;
    for (s, col) in bundle.snapshots.iter().zip(field) {
        for (i, v) in col.iter().enumerate() {
            writeln!(w, "{},{},{}", fmt17(bundle.grid.x(i)), fmt17(s.tau), fmt17(*v))?;
        }
    }
    Ok(())
}

/// `x,tau,theta_1..theta_n` over all snapshots.
pub fn write_theta_csv<W: Write>(bundle: &SolutionBundle, field: &[Vec<Vec<f64>>], mut w: W) -> Result<()> {
    let n = field.first().and_then(|c| c.first()).map_or(0, |r| r.len());
    let mut header = String::from("x,tau");
    for a in 1..=n {
        header.push_str(&format!(",theta_{a}"));
    }
    writeln!(w, "{header}")?;
    for (s, col) in bundle.snapshots.iter().zip(field) {
        for (i, row) in col.iter().enumerate() {
            let mut line = format!("{},{}", fmt17(bundle.grid.x(i)), fmt17(s.tau));
            for t in row {
                line.push(',');
                line.push_str(&fmt17(*t));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}
