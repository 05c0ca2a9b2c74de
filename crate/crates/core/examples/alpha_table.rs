//! Builds the α table for a two-asset market and shows the breakpoint where
//! the optimal portfolio changes support.
//!
//! ```text
//! cargo run --release --example alpha_table
//! ```

use riccati_hjb::alpha::build_alpha_table;
use riccati_hjb::market::MarketModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = MarketModel::from_rows(&[0.10, 0.25], &[vec![0.04, 0.01], vec![0.01, 0.16]], 0.0, 0.0)?;
    let table = build_alpha_table(&model, -1.0, 10.0, 0.25)?;

    println!("{:>8} {:>12} {:>12} {:>8} {:>8}", "phi", "alpha", "alpha'", "theta1", "theta2");
    for i in (0..table.len()).step_by(4) {
        let t = &table.theta_rows()[i];
        println!(
            "{:>8.3} {:>12.6} {:>12.6} {:>8.4} {:>8.4}",
            table.phi_grid()[i],
            table.alpha_vals()[i],
            table.alpha_prime_vals()[i],
            t[0],
            t[1]
        );
    }
    for bp in table.breakpoints() {
        println!(
            "support changes between phi = {:.3} and {:.3}: {:?} -> {:?}",
            bp.phi_left, bp.phi_right, bp.support_left, bp.support_right
        );
    }

    // off-grid queries go through the monotone interpolant
    let (a, da, clamped) = table.eval_tilde(3.1);
    println!("alpha(3.1) = {a:.6}, alpha'(3.1) = {da:.6}, clamped = {clamped}");
    println!("theta(3.1) = {:?}", table.theta_at(3.1));

    table.write_csv(std::fs::File::create("alpha_table_example.csv")?)?;
    println!("wrote alpha_table_example.csv");
    Ok(())
}
