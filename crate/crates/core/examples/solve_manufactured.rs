//! Solves the manufactured problem with block-preconditioned MINRES and
//! reports iterations, errors against the exact solution and the cellwise
//! mass balance.
//!
//! Usage: `cargo run --release --example solve_manufactured -- [n] [lambda] [rp_inv] [alpha_p]`

use biot_hdiv::analysis::{conservation_audit, error_norms, manufactured_system};
use biot_hdiv::assembly::DgConfig;
use biot_hdiv::elements::{Triple, project_qh};
use biot_hdiv::params::ReducedParams;
use biot_hdiv::solver::{build_preconditioner, minres_solve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n = args.first().map_or(8, |&x| x as usize);
    let params = ReducedParams::new(
        args.get(1).copied().unwrap_or(1.0),
        args.get(2).copied().unwrap_or(1.0),
        args.get(3).copied().unwrap_or(0.0),
    )?;

    let (system, case) = manufactured_system(n, Triple::STABLE, params, DgConfig::default())?;
    println!(
        "n = {n}: {} displacement, {} flux, {} pressure dofs",
        system.n_u(),
        system.n_v(),
        system.n_p()
    );
    let pre = build_preconditioner(&system, &system.norms())?;
    let (sol, report) = minres_solve(&system, &pre, 1e-10, 500)?;
    println!("MINRES: {} iterations, converged = {}", report.iterations, report.converged);

    let err = error_norms(&system.spaces, &sol, &case);
    println!("err_U = {:.4e}  err_V = {:.4e}  err_P = {:.4e}", err.err_u, err.err_v, err.err_p);

    let qh_g = project_qh(|x| case.g(x), system.spaces.mesh());
    let audit = conservation_audit(&system.spaces, &sol, &qh_g, &params)?;
    println!("max cell mass-balance residual = {:.3e} (max |Q_h g| = {:.3e})", audit.max_abs, audit.g_max);
    Ok(())
}
