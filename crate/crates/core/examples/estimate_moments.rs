//! Estimates annualized moments from a price file and solves with them.
//!
//! ```text
//! cargo run --release --example estimate_moments [prices.csv]
//! ```

use std::fs::File;
use std::path::{Path, PathBuf};

use riccati_hjb::alpha::{build_alpha_table, Alpha};
use riccati_hjb::grid::SolverGrid;
use riccati_hjb::market_io::{estimate_moments, read_returns_csv, shrink_covariance, InputKind};
use riccati_hjb::market::MarketModel;
use riccati_hjb::pde::{evolve, EvolveConfig};
use riccati_hjb::utility::{Intertemporal, TerminalUtility};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_prices.csv"));
    let returns = read_returns_csv(File::open(&path)?, InputKind::Prices, 252.0)?;
    println!("{} assets, {} returns, {} rows dropped", returns.n_assets(), returns.n_obs(), returns.dropped_rows);

    let raw = estimate_moments(&returns, 1.0, 0.0)?;
    let model = MarketModel::new(raw.mu().clone(), shrink_covariance(raw.sigma_cov(), 0.1), 1.0, 0.0)?;
    for (i, name) in returns.asset_names.iter().enumerate() {
        println!("{name:>8}: mean {:+.4}, vol {:.4}", model.mu()[i], model.sigma_cov()[(i, i)].sqrt());
    }

    let table = std::sync::Arc::new(build_alpha_table(&model, -1.0, 15.0, 0.05)?);
    let grid = SolverGrid::from_steps(-2.0, 4.0, 0.02, 1.0, 2e-4, 0.0)?;
    let cfg = EvolveConfig::new(
        grid,
        Alpha::tabulated(table.clone(), &model),
        TerminalUtility::Cara { a: 9.0 },
        Intertemporal::Exponential { kappa: 1.0, d: 0.0, rho: 0.0 },
    );
    let bundle = evolve(&cfg)?;
    let (lo, hi) = bundle.final_phi.iter().fold((f64::MAX, f64::MIN), |(l, h), &p| (l.min(p), h.max(p)));
    println!("phi at t = 0 ranges over [{lo:.3}, {hi:.3}]");
    let x0 = bundle.grid.i_star;
    println!("weights at x = 0: {:.3?}", table.theta_at(bundle.final_phi[x0]));
    Ok(())
}
