//! Backward-Euler consolidation in physical units: a constant-in-time source
//! drives the pressure, and every step conserves mass cell by cell.


use biot_hdiv::cli::{Command, ParamSource, RunConfig, SolverKind, Source, timestep_drive};
use biot_hdiv::params::PhysicalParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::new(Command::Timestep);
    cfg.mesh_n = 8;
    cfg.source = Source::Manufactured;
    cfg.solver = SolverKind::Minres;
    cfg.tol = 1e-12;
    cfg.params = ParamSource::Physical(PhysicalParams {
        mu: 1.0,
        lambda: 10.0,
        alpha: 1.0,
        k: 1e-2,
        tau: 0.1,
        c_pp: 0.1,
    });

    println!("{:>4} {:>6} {:>14} {:>14}", "step", "iters", "max |p|", "mass residual");
    let mut state = None;
    for _ in 0..5 {
        let traj = timestep_drive(&cfg, 1, state)?;
        let s = &traj.steps[0];
        let p_max = traj.state.p_prev.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        println!(
            "{:>4} {:>6} {:>14.6e} {:>14.3e}",
            s.step, s.report.iterations, p_max, s.conservation.max_abs
        );
        state = Some(traj.state);
    }
    Ok(())
}
