//! MINRES iteration counts with the exact block-diagonal norm preconditioner
//! across the robustness grid, plus dense condition-number estimates on a
//! coarse mesh.
//!
//! Usage: `cargo run --release --example preconditioner_robustness -- [n]`

use biot_hdiv::analysis::{ParamGrid, minres_sweep, write_minres_csv};
use biot_hdiv::assembly::DgConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(8);
    let grid = ParamGrid::robustness();
    let dg = DgConfig::default();

    let rows = minres_sweep(n, &grid, 1e-8, 1000, dg, false)?;
    write_minres_csv(&rows, std::io::stdout().lock())?;
    let iters: Vec<usize> = rows.iter().map(|r| r.iterations).collect();
    eprintln!(
        "n = {n}: iterations between {} and {}",
        iters.iter().min().unwrap(),
        iters.iter().max().unwrap()
    );

    let coarse = minres_sweep(2, &grid, 1e-8, 1000, dg, true)?;
    let kappa: Vec<f64> = coarse.iter().filter_map(|r| r.cond_estimate).collect();
    let lo = kappa.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = kappa.iter().copied().fold(0.0, f64::max);
    eprintln!("n = 2: condition estimates between {lo:.3} and {hi:.3}");
    Ok(())
}
