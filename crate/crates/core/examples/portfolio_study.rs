//! Sweeps the intertemporal parameter `d` on the bundled five-asset market
//! and prints how the risk-aversion profile and the weights respond.
//!
//! ```text
//! cargo run --release --example portfolio_study
//! ```

use std::path::Path;

use riccati_hjb::cli::{run_pipeline, sweep_row};
use riccati_hjb::market_io::ScenarioConfig;
use riccati_hjb::reconstruct::reconstruct_all;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let cfg = ScenarioConfig::load(&data.join("synthetic5.conf"))?;
    for d in cfg.list("d_values")? {
        let mut run = run_pipeline(&cfg, &data, Some(d))?;
        reconstruct_all(&mut run.bundle, run.table.as_deref())?;
        let row = sweep_row(d, &run.bundle);
        println!(
            "d = {d:>4}: phi in [{:.3}, {:.3}], final range {:.3}, monotone {} ({:.1?})",
            row.phi_min, row.phi_max, row.final_range, row.monotone, run.wall
        );
        let grid = &run.bundle.grid;
        let weights = run.bundle.theta_field.as_ref().unwrap().last().unwrap();
        for x in [-2.0, 0.0, 2.0, 4.0] {
            let i = ((x - grid.x_left) / grid.h).round() as usize;
            let w: Vec<String> = weights[i].iter().map(|t| format!("{t:.3}")).collect();
            println!("    x = {x:>4}: phi = {:.3}, theta = [{}]", run.bundle.final_phi[i], w.join(", "));
        }
    }
    Ok(())
}
