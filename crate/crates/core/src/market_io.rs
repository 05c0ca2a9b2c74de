//! Return-series ingestion, moment estimation and flat key=value scenario
//! configuration.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::SolverGrid;
use crate::market::MarketModel;
use crate::pde::{BMode, SourceMode};
use crate::utility::{Intertemporal, TerminalUtility};

/// How the values of an input series are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    /// Price levels; converted to log-returns of consecutive complete rows.
    Prices,
    LogReturns,
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prices" => Ok(InputKind::Prices),
            "log-returns" | "returns" => Ok(InputKind::LogReturns),
            other => Err(Error::Config(format!("unknown input kind '{other}' (prices | log-returns)"))),
        }
    }
}

/// Per-period log-returns, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    pub asset_names: Vec<String>,
    pub observations: DMatrix<f64>,
    pub period_per_year: f64,
    /// Input rows discarded because of missing or unparsable values.
    pub dropped_rows: usize,
}

impl ReturnsMatrix {
    pub fn new(asset_names: Vec<String>, observations: DMatrix<f64>, period_per_year: f64) -> Result<Self> {
        if asset_names.len() != observations.ncols() {
            return Err(Error::Config(format!("{} names for {} columns", asset_names.len(), observations.ncols())));
        }
        if !(period_per_year > 0.0) {
            return Err(Error::Config("periods per year must be positive".into()));
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite return".into()));
        }
        Ok(Self { asset_names, observations, period_per_year, dropped_rows: 0 })
    }

    pub fn n_assets(&self) -> usize {
        self.observations.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.observations.nrows()
    }
}

/// Reads a header row of asset names followed by one row per period.
/// Rows with an empty or unparsable cell are dropped and counted.
pub fn read_returns_csv<R: Read>(reader: R, kind: InputKind, period_per_year: f64) -> Result<ReturnsMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let n = names.len();
    if n == 0 {
        return Err(Error::Parse("missing header row".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let parsed: Option<Vec<f64>> = if rec.len() == n {
            rec.iter().map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite())).collect()
        } else {
            None
        };
        match parsed {
            Some(r) if kind == InputKind::LogReturns || r.iter().all(|&p| p > 0.0) => rows.push(r),
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} incomplete rows");
    }
    let rows = match kind {
        InputKind::LogReturns => rows,
        InputKind::Prices => rows.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a / b).ln()).collect()).collect(),
    };
    let obs = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let mut m = ReturnsMatrix::new(names, obs, period_per_year)?;
    m.dropped_rows = dropped;
    Ok(m)
}

/// Annualized sample mean and unbiased sample covariance.
pub fn sample_moments(returns: &ReturnsMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let t = returns.n_obs();
    if t < 2 {
        return Err(Error::SingularCovariance);
    }
    let x = &returns.observations;
    let mean = DVector::from_fn(returns.n_assets(), |j, _| x.column(j).sum() / t as f64);
    let n = returns.n_assets();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..t).map(|r| (x[(r, i)] - mean[i]) * (x[(r, j)] - mean[j])).sum();
            let v = s / (t - 1) as f64 * returns.period_per_year;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean * returns.period_per_year, cov))
}

/// True when Σ is numerically positive definite relative to its scale.
fn well_conditioned(sigma: &DMatrix<f64>) -> bool {
    let scale = sigma.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
    if !(scale > 0.0) {
        return false;
    }
    match sigma.clone().cholesky() {
        Some(ch) => ch.l().diagonal().iter().all(|d| d * d > 1e-12 * scale),
        None => false,
    }
}

/// Market model from a return series.
pub fn estimate_moments(returns: &ReturnsMatrix, epsilon: f64, rate: f64) -> Result<MarketModel> {
    let (mu, sigma) = sample_moments(returns)?;
    if !well_conditioned(&sigma) {
        return Err(Error::SingularCovariance);
    }
    MarketModel::new(mu, sigma, epsilon, rate)
}

/// `(1−λ)Σ + λ diag(Σ)`.
pub fn shrink_covariance(sigma: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| if i == j { sigma[(i, j)] } else { (1.0 - lambda) * sigma[(i, j)] })
}

/// Every configuration key with its default and a short description.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("mu", "", "asset mean log-returns per year, comma separated"),
    ("sigma", "", "covariance rows, entries comma separated, rows separated by ';'"),
    ("returns", "", "CSV of prices or log-returns used instead of mu/sigma"),
    ("input_kind", "log-returns", "prices | log-returns"),
    ("periods_per_year", "252", "annualization factor for the returns file"),
    ("shrinkage", "0", "covariance shrinkage towards its diagonal, in [0, 1]"),
    ("epsilon", "1", "portfolio inflow rate"),
    ("rate", "0", "risk-free rate"),
    ("utility", "cara", "terminal utility: cara | arctan"),
    ("a", "9", "CARA risk aversion"),
    ("kappa", "1", "intertemporal utility scale"),
    ("d", "0", "intertemporal utility risk aversion"),
    ("rho", "0", "intertemporal discount rate"),
    ("d_values", "0,8,11", "d sweep for the portfolio command"),
    ("x_left", "-4", "left end of the log-wealth domain"),
    ("x_right", "8", "right end of the log-wealth domain"),
    ("h", "0.01", "spatial step"),
    ("k", "", "time step; empty means 0.5*h^2"),
    ("horizon", "1", "investment horizon T"),
    ("x_star", "-2.01", "anchor point (nearest interior node)"),
    ("phi_lo", "-1", "lower end of the alpha table"),
    ("phi_hi", "15", "upper end of the alpha table"),
    ("h_phi", "0.05", "alpha table step"),
    ("b_mode", "implicit", "b update: implicit | explicit | backward"),
    ("source_mode", "explicit", "non-local source: explicit | linearized"),
    ("snapshots", "10", "number of uniform snapshot intervals in tau"),
    ("bounds_margin", "", "a-priori band margin; empty means 10*h"),
    ("wave_speed", "5", "traveling-wave speed"),
    ("wave_horizon", "1", "traveling-wave horizon"),
    ("wave_x_star", "-20", "traveling-wave anchor (nearest interior node)"),
    ("h_ladder", "0.05,0.025,0.0125", "spatial steps of the convergence study"),
    ("eoc_min", "1.80", "lower EOC acceptance bound"),
    ("eoc_max", "2.05", "upper EOC acceptance bound"),
    ("theta_source", "table", "policy source of the direct solver: table | qp"),
    ("policy_sweeps", "1", "policy/solve sweeps per time step"),
    ("policy_tol", "1e-10", "relative V change that ends extra sweeps"),
    ("crosscheck_tol", "1e-2", "relative V tolerance on the central half"),
];

/// Flat `key = value` scenario with documented defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    values: BTreeMap<String, String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { values: CONFIG_KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect() }
    }
}

impl ScenarioConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key '{key}'"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self.get(key);
        raw.parse().map_err(|_| Error::Config(format!("{key} = '{raw}' is not a number")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.get(key);
        raw.parse().map_err(|_| Error::Config(format!("{key} = '{raw}' is not a non-negative integer")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(self.get(key)).map_err(|_| Error::Config(format!("{key} = '{}' is not a number list", self.get(key))))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// The market model, from inline moments or from a returns file
    /// (resolved relative to `base_dir`).
    pub fn model(&self, base_dir: &Path) -> Result<MarketModel> {
        let eps = self.f64("epsilon")?;
        let rate = self.f64("rate")?;
        let lambda = self.f64("shrinkage")?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config("shrinkage must lie in [0, 1]".into()));
        }
        if !self.get("returns").is_empty() {
            let path = base_dir.join(self.get("returns"));
            let kind: InputKind = self.get("input_kind").parse()?;
            let ret = read_returns_csv(std::fs::File::open(&path)?, kind, self.f64("periods_per_year")?)?;
            let (mu, sigma) = sample_moments(&ret)?;
            let sigma = shrink_covariance(&sigma, lambda);
            if !well_conditioned(&sigma) {
                return Err(Error::SingularCovariance);
            }
            return MarketModel::new(mu, sigma, eps, rate);
        }
        let mu = self.list("mu")?;
        if mu.is_empty() {
            return Err(Error::Config("either mu/sigma or returns must be given".into()));
        }
        let rows = parse_matrix(self.get("sigma"))?;
        let m = MarketModel::from_rows(&mu, &rows, eps, rate)?;
        let sigma = shrink_covariance(m.sigma_cov(), lambda);
        MarketModel::new(m.mu().clone(), sigma, eps, rate)
    }

    pub fn terminal(&self) -> Result<TerminalUtility> {
        match self.get("utility") {
            "cara" => Ok(TerminalUtility::Cara { a: self.f64("a")? }),
            "arctan" => Ok(TerminalUtility::Arctan),
            other => Err(Error::Config(format!("unknown utility '{other}' (cara | arctan)"))),
        }
    }

    /// Intertemporal utility with the configured `d`.
    pub fn intertemporal(&self) -> Result<Intertemporal> {
        self.intertemporal_with(self.f64("d")?)
    }

    pub fn intertemporal_with(&self, d: f64) -> Result<Intertemporal> {
        let kappa = self.f64("kappa")?;
        if kappa < 0.0 || d < 0.0 {
            return Err(Error::Config("kappa and d must be non-negative".into()));
        }
        Ok(Intertemporal::Exponential { kappa, d, rho: self.f64("rho")? })
    }

    pub fn time_step(&self) -> Result<f64> {
        if self.get("k").is_empty() {
            let h = self.f64("h")?;
            Ok(0.5 * h * h)
        } else {
            self.f64("k")
        }
    }

    pub fn grid(&self) -> Result<SolverGrid> {
        SolverGrid::from_steps(
            self.f64("x_left")?,
            self.f64("x_right")?,
            self.f64("h")?,
            self.f64("horizon")?,
            self.time_step()?,
            self.f64("x_star")?,
        )
    }

    pub fn b_mode(&self) -> Result<BMode> {
        match self.get("b_mode") {
            "implicit" => Ok(BMode::Implicit),
            "explicit" => Ok(BMode::Explicit),
            "backward" => Ok(BMode::Backward),
            other => Err(Error::Config(format!("unknown b_mode '{other}'"))),
        }
    }

    pub fn source_mode(&self) -> Result<SourceMode> {
        match self.get("source_mode") {
            "explicit" => Ok(SourceMode::Explicit),
            "linearized" => Ok(SourceMode::Linearized),
            other => Err(Error::Config(format!("unknown source_mode '{other}'"))),
        }
    }

    pub fn bounds_margin(&self) -> Result<f64> {
        if self.get("bounds_margin").is_empty() {
            Ok(10.0 * self.f64("h")?)
        } else {
            self.f64("bounds_margin")
        }
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
}

/// Rows separated by `;`, entries by `,`.
pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| parse_list(r).map_err(|_| Error::Config(format!("bad matrix row '{r}'"))))
        .collect()
}

/// Writes `key=value` lines: the full configuration followed by `extra`.
pub fn write_manifest<W: Write>(mut w: W, cfg: &ScenarioConfig, extra: &[(String, String)]) -> Result<()> {
    for (k, v) in cfg.entries() {
        writeln!(w, "{k}={v}")?;
    }
    for (k, v) in extra {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn returns(rows: &[Vec<f64>], ppy: f64) -> ReturnsMatrix {
        let n = rows[0].len();
        let obs = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        ReturnsMatrix::new((0..n).map(|i| format!("A{i}")).collect(), obs, ppy).unwrap()
    }

    #[test]
    fn degenerate_asset_is_singular() {
        let r = returns(&[vec![0.01, 0.02], vec![0.03, 0.02], vec![0.02, 0.02]], 1.0);
        let (mu, _) = sample_moments(&r).unwrap();
        assert!((mu[0] - 0.02).abs() < 1e-15 && (mu[1] - 0.02).abs() < 1e-15);
        assert!(matches!(estimate_moments(&r, 0.0, 0.0), Err(Error::SingularCovariance)));
    }

    #[test]
    fn repeated_observation_is_singular() {
        let r = returns(&vec![vec![0.01, 0.03]; 6], 252.0);
        assert!(matches!(estimate_moments(&r, 0.0, 0.0), Err(Error::SingularCovariance)));
    }

    #[test]
    fn covariance_matches_textbook_formula() {
        let rows = vec![vec![0.01, -0.02], vec![-0.01, 0.00], vec![0.02, 0.01], vec![0.00, 0.03], vec![-0.02, -0.01]];
        let r = returns(&rows, 1.0);
        let m = estimate_moments(&r, 0.0, 0.0).unwrap();
        // two-pass oracle: Σ_ij = Σ_t (x_ti − x̄_i)(x_tj − x̄_j) / (T − 1)
        let t = rows.len() as f64;
        let mean: Vec<f64> = (0..2).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / t).collect();
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (t - 1.0);
                assert!((m.sigma_cov()[(i, j)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shrinkage_endpoints() {
        let s = DMatrix::from_row_slice(2, 2, &[0.04, 0.02, 0.02, 0.09]);
        assert_eq!(shrink_covariance(&s, 0.0), s);
        assert_eq!(shrink_covariance(&s, 1.0), DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.09]));
        assert!((shrink_covariance(&s, 0.5)[(0, 1)] - 0.01).abs() < 1e-17);
    }

    #[test]
    fn csv_prices_and_missing_rows() {
        let text = "A,B\n100,50\n110,\n121,55\n133.1,60.5\n";
        let r = read_returns_csv(text.as_bytes(), InputKind::Prices, 1.0).unwrap();
        assert_eq!(r.dropped_rows, 1);
        assert_eq!(r.n_obs(), 2);
        assert!((r.observations[(0, 0)] - 1.21f64.ln()).abs() < 1e-14);
        assert!((r.observations[(1, 1)] - 1.1f64.ln()).abs() < 1e-14);
        let r = read_returns_csv("X,Y\n0.1,0.2\nNA,0.1\n0.3,0.4\n".as_bytes(), InputKind::LogReturns, 1.0).unwrap();
        assert_eq!((r.n_obs(), r.dropped_rows), (2, 1));
        assert_eq!(r.asset_names, vec!["X", "Y"]);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let mut cfg = ScenarioConfig::parse("mu = 0.1, 0.2 # means\nsigma = 1, 0; 0, 1\n").unwrap();
        assert_eq!(cfg.f64("a").unwrap(), 9.0);
        let g = cfg.grid().unwrap();
        assert_eq!((g.n_interior, g.m_steps, g.i_star), (1199, 20_000, 199));
        cfg.apply_override("d=8").unwrap();
        assert_eq!(cfg.intertemporal().unwrap(), Intertemporal::Exponential { kappa: 1.0, d: 8.0, rho: 0.0 });
        let m = cfg.model(Path::new(".")).unwrap();
        assert_eq!(m.n_assets(), 2);
        assert_eq!(m.epsilon(), 1.0);
        assert!(cfg.apply_override("nope=1").is_err());
        assert!(ScenarioConfig::parse("just text").is_err());
        assert_eq!(cfg.list("d_values").unwrap(), vec![0.0, 8.0, 11.0]);
    }

    #[test]
    fn manifest_echoes_every_key() {
        let cfg = ScenarioConfig::default();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &cfg, &[("clamp_count".into(), "0".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), CONFIG_KEYS.len() + 1);
        assert!(text.contains("h_phi=0.05\n"));
        assert!(text.ends_with("clamp_count=0\n"));
    }

    fn sample_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-0.05f64..0.05, 3), 6..20)
    }

    proptest! {
        #[test]
        fn moments_ignore_row_order(rows in sample_rows(), seed in any::<u64>()) {
            let mut shuffled = rows.clone();
            let len = shuffled.len();
            for i in (1..len).rev() {
                let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let (m1, s1) = sample_moments(&returns(&rows, 12.0)).unwrap();
            let (m2, s2) = sample_moments(&returns(&shuffled, 12.0)).unwrap();
            prop_assert!((m1 - m2).amax() < 1e-14);
            prop_assert!((s1 - s2).amax() < 1e-14);
        }

        #[test]
        fn annualization_scales_linearly(rows in sample_rows(), c in 1.0f64..400.0) {
            let (m1, s1) = sample_moments(&returns(&rows, 1.0)).unwrap();
            let (m2, s2) = sample_moments(&returns(&rows, c)).unwrap();
            prop_assert!((m1 * c - m2).amax() <= 1e-14 * c);
            prop_assert!((s1 * c - s2).amax() <= 1e-14 * c);
        }
    }
}
