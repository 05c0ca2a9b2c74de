//! Terminal and intertemporal utility functions.

use crate::benchmark::TravelingWaveCase;

/// Terminal utility `u(x)` of log-wealth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalUtility {
    /// `u(x) = −e^{−ax}`, constant absolute risk aversion `a`.
    Cara { a: f64 },
    /// `u(x) = arctan(x)`, risk aversion `2x/(1+x²)`.
    Arctan,
}

impl TerminalUtility {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            TerminalUtility::Cara { a } => -(-a * x).exp(),
            TerminalUtility::Arctan => x.atan(),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            TerminalUtility::Cara { a } => a * (-a * x).exp(),
            TerminalUtility::Arctan => 1.0 / (1.0 + x * x),
        }
    }

    /// `ln u′(x)`; `None` where `u′(x) ≤ 0`.
    pub fn ln_deriv(&self, x: f64) -> Option<f64> {
        match *self {
            TerminalUtility::Cara { a } if a > 0.0 => Some(a.ln() - a * x),
            TerminalUtility::Cara { .. } => None,
            TerminalUtility::Arctan => Some(-(1.0 + x * x).ln()),
        }
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        match *self {
            TerminalUtility::Cara { a } => -a * a * (-a * x).exp(),
            TerminalUtility::Arctan => -2.0 * x / ((1.0 + x * x) * (1.0 + x * x)),
        }
    }

    /// Absolute risk aversion `−u″(x)/u′(x)`, evaluated analytically.
    pub fn risk_aversion(&self, x: f64) -> f64 {
        match *self {
            TerminalUtility::Cara { a } => a,
            TerminalUtility::Arctan => 2.0 * x / (1.0 + x * x),
        }
    }
}

/// `c` and its first two x-derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CDerivs {
    pub c: f64,
    pub c_x: f64,
    pub c_xx: f64,
}

/// Intertemporal utility `c(x, t)`; all methods take `τ = T − t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Intertemporal {
    None,
    /// `c(x, t) = −κ e^{−dx − ϱ(T−t)}`.
    Exponential { kappa: f64, d: f64, rho: f64 },
    /// Forcing that makes `φ(x, τ) = a(x − vτ)` an exact solution.
    TravelingWave(TravelingWaveCase),
}

impl Intertemporal {
    pub fn eval(&self, x: f64, tau: f64) -> CDerivs {
        match self {
            Intertemporal::None => CDerivs { c: 0.0, c_x: 0.0, c_xx: 0.0 },
            Intertemporal::Exponential { kappa, d, rho } => {
                let e = kappa * (-d * x - rho * tau).exp();
                CDerivs { c: -e, c_x: d * e, c_xx: -d * d * e }
            }
            Intertemporal::TravelingWave(case) => case.forcing_c(x, tau),
        }
    }

    /// Derivatives split as `e^{scale}·(c_x_unit, c_xx_unit)` so that very
    /// large exponentials can be combined in log space.
    #[inline]
    pub fn scaled_derivs(&self, x: f64, tau: f64) -> (f64, f64, f64) {
        match self {
            Intertemporal::None => (0.0, 0.0, 0.0),
            Intertemporal::Exponential { kappa, d, rho } => {
                if *kappa == 0.0 || *d == 0.0 {
                    (0.0, 0.0, 0.0)
                } else {
                    (kappa.ln() - d * x - rho * tau, *d, -d * d)
                }
            }
            Intertemporal::TravelingWave(case) => {
                let c = case.forcing_c(x, tau);
                (0.0, c.c_x, c.c_xx)
            }
        }
    }

    /// True when `∂ₓc ≡ 0`, i.e. the non-local source vanishes.
    pub fn is_flat(&self) -> bool {
        match self {
            Intertemporal::None => true,
            Intertemporal::Exponential { kappa, d, .. } => *kappa == 0.0 || *d == 0.0,
            Intertemporal::TravelingWave(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arctan_risk_aversion() {
        let u = TerminalUtility::Arctan;
        assert_eq!(u.risk_aversion(0.0), 0.0);
        assert_eq!(u.risk_aversion(1.0), 1.0);
        assert_eq!(u.risk_aversion(-1.0), -1.0);
        for &x in &[-3.0, -0.2, 0.7, 5.0] {
            assert!((u.risk_aversion(x) + u.second_deriv(x) / u.deriv(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_scaled_matches_direct() {
        let c = Intertemporal::Exponential { kappa: 1.5, d: 8.0, rho: 0.3 };
        let (s, ux, uxx) = c.scaled_derivs(-0.7, 0.4);
        let direct = c.eval(-0.7, 0.4);
        assert!((s.exp() * ux - direct.c_x).abs() < 1e-12 * direct.c_x.abs());
        assert!((s.exp() * uxx - direct.c_xx).abs() < 1e-12 * direct.c_xx.abs());
        assert!(direct.c_x > 0.0);
    }

    #[test]
    fn flat_cases() {
        assert!(Intertemporal::Exponential { kappa: 1.0, d: 0.0, rho: 0.0 }.is_flat());
        assert!(Intertemporal::Exponential { kappa: 0.0, d: 3.0, rho: 0.0 }.is_flat());
        assert!(!Intertemporal::Exponential { kappa: 1.0, d: 3.0, rho: 0.0 }.is_flat());
    }
}
