//! Discrete inf-sup constants of the BDM1/RT0/P0 discretization in the
//! parameter-dependent norms, over the full robustness grid.
//!
//! Usage: `cargo run --release --example infsup_sweep -- [n ...]`

use biot_hdiv::analysis::{NormKind, ParamGrid, infsup_sweep, write_infsup_csv};
use biot_hdiv::assembly::DgConfig;
use biot_hdiv::elements::Triple;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut n_list: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    if n_list.is_empty() {
        n_list = vec![2, 4];
    }
    let rows = infsup_sweep(Triple::STABLE, NormKind::Weighted, &n_list, &ParamGrid::robustness(), DgConfig::default())?;
    write_infsup_csv(&rows, std::io::stdout().lock())?;

    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.beta0), hi.max(r.beta0)));
    eprintln!("beta0 in [{lo:.4}, {hi:.4}] over {} configurations", rows.len());
    Ok(())
}
