//! Uniform space-time mesh.

use crate::error::{Error, Result};

/// Nodes `x_i = x_left + i·h` for `i = 0..=n_interior+1` and time layers
/// `τ_j = j·k` for `j = 0..=m_steps`, plus the anchor node `i_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverGrid {
    pub x_left: f64,
    pub x_right: f64,
    pub n_interior: usize,
    pub h: f64,
    pub horizon: f64,
    pub m_steps: usize,
    pub k: f64,
    pub i_star: usize,
}

impl SolverGrid {
    pub fn new(x_left: f64, x_right: f64, n_interior: usize, horizon: f64, m_steps: usize, i_star: usize) -> Result<Self> {
        if !(x_right > x_left) {
            return Err(Error::InvalidGrid(format!("x_right {x_right} <= x_left {x_left}")));
        }
        if n_interior < 1 {
            return Err(Error::InvalidGrid("need at least one interior node".into()));
        }
        if !(horizon > 0.0) || m_steps == 0 {
            return Err(Error::InvalidGrid("horizon and step count must be positive".into()));
        }
        if i_star < 1 || i_star > n_interior {
            return Err(Error::InvalidGrid(format!("anchor index {i_star} not in 1..={n_interior}")));
        }
        Ok(Self {
            x_left,
            x_right,
            n_interior,
            h: (x_right - x_left) / (n_interior + 1) as f64,
            horizon,
            m_steps,
            k: horizon / m_steps as f64,
            i_star,
        })
    }

    /// Builds a grid from step sizes, rounding to whole cell and step
    /// counts; the anchor is the interior node nearest `x_star`.
    pub fn from_steps(x_left: f64, x_right: f64, h: f64, horizon: f64, k: f64, x_star: f64) -> Result<Self> {
        if !(h > 0.0) || !(k > 0.0) {
            return Err(Error::InvalidGrid("h and k must be positive".into()));
        }
        let cells = ((x_right - x_left) / h).round() as usize;
        if cells < 2 {
            return Err(Error::InvalidGrid(format!("h = {h} leaves no interior node")));
        }
        let m = ((horizon / k).round() as usize).max(1);
        let h_eff = (x_right - x_left) / cells as f64;
        let i_star = (((x_star - x_left) / h_eff).round() as isize).clamp(1, cells as isize - 1) as usize;
        Self::new(x_left, x_right, cells - 1, horizon, m, i_star)
    }

    /// Number of nodes including the two boundary nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_interior + 2
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_left + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.x(i)).collect()
    }

    pub fn x_star(&self) -> f64 {
        self.x(self.i_star)
    }

    #[inline]
    pub fn tau(&self, j: usize) -> f64 {
        j as f64 * self.k
    }

    /// Time layer closest to `tau`, clamped to `0..=m_steps`.
    pub fn layer_of(&self, tau: f64) -> usize {
        ((tau / self.k).round().max(0.0) as usize).min(self.m_steps)
    }

    /// Same spatial mesh and time stepping (anchor may differ).
    pub fn same_mesh(&self, other: &SolverGrid) -> bool {
        self.n_interior == other.n_interior
            && self.m_steps == other.m_steps
            && (self.x_left - other.x_left).abs() < 1e-12
            && (self.x_right - other.x_right).abs() < 1e-12
            && (self.horizon - other.horizon).abs() < 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn portfolio_grid() {
        let g = SolverGrid::from_steps(-4.0, 8.0, 0.01, 1.0, 0.5e-4, -2.01).unwrap();
        assert_eq!(g.n_interior, 1199);
        assert_eq!(g.m_steps, 20_000);
        assert_eq!(g.i_star, 199);
        assert!((g.x_star() + 2.01).abs() < 1e-12);
        assert!((g.x(g.n_interior + 1) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_must_be_interior() {
        assert!(SolverGrid::new(0.0, 1.0, 3, 1.0, 10, 0).is_err());
        assert!(SolverGrid::new(0.0, 1.0, 3, 1.0, 10, 4).is_err());
        assert!(SolverGrid::new(0.0, 1.0, 3, 1.0, 10, 3).is_ok());
    }
}
