//! Manufactured-solution convergence in the parameter-dependent norms for a
//! benign and a nearly incompressible, nearly impermeable parameter point.

use biot_hdiv::analysis::convergence_study;
use biot_hdiv::assembly::DgConfig;
use biot_hdiv::elements::Triple;
use biot_hdiv::params::ReducedParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_list = [4, 8, 16];
    for (lambda, rp_inv, alpha_p) in [(1.0, 1.0, 0.0), (1e8, 1e-8, 1.0)] {
        let params = ReducedParams::new(lambda, rp_inv, alpha_p)?;
        let table = convergence_study(params, &n_list, Triple::STABLE, DgConfig::default())?;
        println!("lambda = {lambda:e}, rp_inv = {rp_inv:e}, alpha_p = {alpha_p}");
        table.write_csv(std::io::stdout().lock())?;
        for row in &table.rows {
            println!("  n = {:>2}: error / best approximation = {:.4}", row.n, row.quasi_optimality());
        }
    }
    Ok(())
}
