//! Convergence study on the traveling-wave case with `k = h²`.
//!
//! ```text
//! cargo run --release --example traveling_wave -- 0.05 0.025 0.0125
//! ```

use riccati_hjb::benchmark::{run_ladder, write_convergence_csv, TravelingWaveCase};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut hs: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    if hs.is_empty() {
        hs = vec![0.05, 0.025];
    }
    let (rows, runs) = run_ladder(&TravelingWaveCase::default(), &hs, 0)?;
    write_convergence_csv(&rows, std::io::stdout().lock())?;
    for run in &runs {
        if run.clamp_count > 0 {
            eprintln!("h = {}: {} clamped alpha evaluations", run.h, run.clamp_count);
        }
    }
    Ok(())
}
