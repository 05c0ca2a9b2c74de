//! Market model: mean log-returns, covariance, inflow rate and risk-free rate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Drift/volatility data of the controlled wealth process.
///
/// A constructed model always has a symmetric positive definite covariance
/// matrix whose dimension agrees with the mean vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    mu: DVector<f64>,
    sigma_cov: DMatrix<f64>,
    epsilon: f64,
    rate: f64,
}

impl MarketModel {
    pub fn new(mu: DVector<f64>, sigma_cov: DMatrix<f64>, epsilon: f64, rate: f64) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidModel("empty asset universe".into()));
        }
        if sigma_cov.nrows() != n || sigma_cov.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "mean vector has {} entries but covariance is {}x{}",
                n,
                sigma_cov.nrows(),
                sigma_cov.ncols()
            )));
        }
        if mu.iter().chain(sigma_cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite entry".into()));
        }
        if !epsilon.is_finite() || !rate.is_finite() {
            return Err(Error::InvalidModel("non-finite inflow or rate".into()));
        }
        if rate < 0.0 {
            return Err(Error::InvalidModel(format!("risk-free rate {rate} < 0")));
        }
        let asym = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (sigma_cov[(i, j)] - sigma_cov[(j, i)]).abs())
            .fold(0.0, f64::max);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidModel(format!(
                "covariance asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}"
            )));
        }
        if sigma_cov.clone().cholesky().is_none() {
            return Err(Error::NonConvex);
        }
        Ok(Self { mu, sigma_cov, epsilon, rate })
    }

    /// Convenience constructor from row-major slices.
    pub fn from_rows(mu: &[f64], rows: &[Vec<f64>], epsilon: f64, rate: f64) -> Result<Self> {
        let n = mu.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidModel("covariance rows do not match mean vector".into()));
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(DVector::from_column_slice(mu), sigma, epsilon, rate)
    }

    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma_cov(&self) -> &DMatrix<f64> {
        &self.sigma_cov
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn with_inflow(mut self, epsilon: f64, rate: f64) -> Result<Self> {
        if !epsilon.is_finite() || !rate.is_finite() || rate < 0.0 {
            return Err(Error::InvalidModel("bad inflow or rate".into()));
        }
        self.epsilon = epsilon;
        self.rate = rate;
        Ok(self)
    }

    /// Portfolio variance `θᵀΣθ`.
    pub fn variance(&self, theta: &[f64]) -> f64 {
        let n = self.n_assets();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.sigma_cov[(i, j)] * theta[j];
            }
            acc += theta[i] * row;
        }
        acc
    }

    /// Portfolio mean `μᵀθ`.
    pub fn mean(&self, theta: &[f64]) -> f64 {
        self.mu.iter().zip(theta).map(|(m, t)| m * t).sum()
    }

    /// Drift of the log-wealth process, `μᵀθ − ½θᵀΣθ + εe^{−x} + r`.
    pub fn drift(&self, x: f64, theta: &[f64]) -> f64 {
        self.mean(theta) - 0.5 * self.variance(theta) + self.epsilon * (-x).exp() + self.rate
    }
}
