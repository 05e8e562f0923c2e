//! Continuous P1 displacements with RT0/P0 measured in the natural
//! (parameter-unweighted) norms: the inf-sup constant collapses as the
//! inverse permeability grows, unlike the BDM1 pairing in the weighted norms.

use biot_hdiv::analysis::{NormKind, infsup_point};
use biot_hdiv::assembly::DgConfig;
use biot_hdiv::elements::Triple;
use biot_hdiv::params::ReducedParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let dg = DgConfig::default();
    println!("{:>10} {:>14} {:>14}", "rp_inv", "P1-RT0-P0", "BDM1-RT0-P0");
    for rp_inv in [1.0, 1e2, 1e4, 1e6] {
        let params = ReducedParams::new(1.0, rp_inv, 0.0)?;
        let natural = infsup_point(n, Triple::P1_RT0_P0, NormKind::Natural, params, dg)?;
        let weighted = infsup_point(n, Triple::STABLE, NormKind::Weighted, params, dg)?;
        println!("{rp_inv:>10.0e} {:>14.6e} {:>14.6e}", natural.beta0, weighted.beta0);
    }
    Ok(())
}
