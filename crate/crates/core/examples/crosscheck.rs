//! Solves the Merton configuration twice, through the Riccati pipeline and
//! with direct policy iteration on V, and compares the two.
//!
//! ```text
//! cargo run --release --example crosscheck
//! ```

use std::path::Path;

use riccati_hjb::cli::{crosscheck, run_pipeline};
use riccati_hjb::market_io::ScenarioConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for name in ["merton_crosscheck.conf", "d0_crosscheck.conf"] {
        let cfg = ScenarioConfig::load(&data.join(name))?;
        let run = run_pipeline(&cfg, &data, None)?;
        let d = crosscheck(&run, &cfg)?;
        println!("{name}: max relative V gap {:.3e}, max phi gap {:.3e}", d.v_rel, d.phi_abs);
    }
    Ok(())
}
