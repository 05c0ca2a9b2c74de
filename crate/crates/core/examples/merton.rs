//! Merton problem: no intertemporal utility and no inflow, so φ stays at
//! the CARA coefficient and V has a closed form.
//!
//! ```text
//! cargo run --release --example merton
//! ```

use riccati_hjb::alpha::Alpha;
use riccati_hjb::grid::SolverGrid;
use riccati_hjb::market::MarketModel;
use riccati_hjb::pde::{evolve, EvolveConfig};
use riccati_hjb::qp::solve_parametric_qp;
use riccati_hjb::reconstruct::reconstruct_all;
use riccati_hjb::utility::{Intertemporal, TerminalUtility};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = 4.0;
    let model = MarketModel::from_rows(&[0.12], &[vec![0.0625]], 0.0, 0.0)?;
    let grid = SolverGrid::from_steps(-1.0, 1.0, 0.01, 1.0, 0.5e-4, 0.5)?;
    let alpha = Alpha::single_asset(&model).ok_or("expected a single asset")?;
    let cfg = EvolveConfig::new(grid.clone(), alpha, TerminalUtility::Cara { a }, Intertemporal::None).with_uniform_snapshots(4);
    let mut bundle = evolve(&cfg)?;
    reconstruct_all(&mut bundle, None)?;

    let dev = bundle.final_phi.iter().map(|p| (p - a).abs()).fold(0.0, f64::max);
    println!("max |phi - a| at tau = T: {dev:.2e}");

    // V(x, t) = −e^{−ax} e^{a α̃(a) τ}
    let growth = solve_parametric_qp(&model, a)?.value;
    let v = bundle.v_field.as_ref().unwrap().last().unwrap();
    println!("{:>6} {:>14} {:>14} {:>10}", "x", "V", "closed form", "rel err");
    for i in (0..grid.n_nodes()).step_by(25) {
        let x = grid.x(i);
        let exact = -(-a * x).exp() * (a * growth * grid.horizon).exp();
        println!("{x:>6.2} {:>14.6e} {exact:>14.6e} {:>10.2e}", v[i], (v[i] - exact) / exact);
    }
    Ok(())
}
