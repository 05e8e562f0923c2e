//! Structural properties of the discretization: the commuting diagram of
//! the H(div) interpolant, coercivity of the interior-penalty form, and the
//! equivalence constants between the strain-based and broken-gradient
//! displacement norms.

use std::sync::Arc;

use biot_hdiv::analysis::korn_bounds;
use biot_hdiv::assembly::{DgConfig, coercivity_constant};
use biot_hdiv::elements::{Family, Space, interpolate_pi_div, project_qh};
use biot_hdiv::mesh::{Point, TriMesh};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let mesh = Arc::new(TriMesh::structured(n));
    let space = Space::new(mesh.clone(), Family::Bdm1, false)?;
    let u = |x: Point| [(2.0 * x[0]).sin() * x[1], (x[0] * x[1]).exp()];
    let div_u = |x: Point| 2.0 * (2.0 * x[0]).cos() * x[1] + x[0] * (x[0] * x[1]).exp();
    let full = interpolate_pi_div(u, &space);
    let free = space.restrict(&full);
    let lhs = space.cell_divergence_means(&free)?;
    let rhs = project_qh(div_u, &mesh);
    let gap = lhs.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    println!("max |div Pi u - Q_h div u| = {gap:.2e}");

    for family in [Family::Bdm1, Family::P1cVec] {
        let c = coercivity_constant(family, DgConfig::default(), n)?;
        println!("{}: coercivity constant of a_h = {c:.4}", family.name());
        for m in [2, 4, 8] {
            let (lo, hi) = korn_bounds(family, m)?;
            println!("  n = {m}: norm equivalence eigenvalues in [{lo:.4}, {hi:.4}]");
        }
    }
    Ok(())
}
