//! Composition of the continuity right-hand side of one backward-Euler step.

use std::sync::Arc;

use biot_hdiv::elements::{Family, Space};
use biot_hdiv::mesh::TriMesh;
use biot_hdiv::params::{PhysicalParams, compose_timestep_rhs};
use biot_hdiv::quadrature::projection_edge_rule;

fn phys(tau: f64, mu: f64, alpha: f64) -> PhysicalParams {
    PhysicalParams {
        mu,
        lambda: 4.0,
        alpha,
        k: 1.0,
        tau,
        c_pp: 0.3,
    }
}

fn space() -> Space {
    Space::new(Arc::new(TriMesh::structured(2)), Family::Bdm1, false).unwrap()
}

#[test]
fn zero_data_gives_zero() {
    let s = space();
    let nc = s.mesh().n_cells();
    let out = compose_timestep_rhs(&vec![0.0; nc], (&s, &vec![0.0; s.n_free()]), &vec![0.0; nc], &phys(1.0, 1.0, 1.0)).unwrap();
    assert!(out.iter().all(|&x| x == 0.0));
}

#[test]
fn constant_source_is_scaled_by_tau() {
    let s = space();
    let nc = s.mesh().n_cells();
    let out = compose_timestep_rhs(&vec![1.0; nc], (&s, &vec![0.0; s.n_free()]), &vec![0.0; nc], &phys(2.0, 0.5, 1.0)).unwrap();
    assert!(out.iter().all(|&x| x == -2.0));
}

/// `int_dK u.n` by edge quadrature of the basis values.
fn boundary_flux(s: &Space, full: &[f64], k: usize) -> f64 {
    let mesh = s.mesh();
    let rule = projection_edge_rule();
    let mut total = 0.0;
    for (i, ce) in mesh.cell_edges[k].iter().enumerate() {
        let edge = &mesh.edges[ce.edge];
        let n = mesh.outward_normal(k, i);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let x = edge.point(mesh, t);
            let v = s.eval_full(full, k, s.cell_map(k).to_reference(x)).value;
            total += w * edge.length * (v[0] * n[0] + v[1] * n[1]);
        }
    }
    total
}

#[test]
fn unit_divergence_on_one_cell() {
    let s = space();
    let mesh = s.mesh();
    let nc = mesh.n_cells();
    // A boundary-edge basis function carries flux into exactly one cell.
    let (full, cell) = (0..s.n_full())
        .find_map(|j| {
            let mut full = vec![0.0; s.n_full()];
            full[j] = 1.0;
            let fluxes: Vec<f64> = (0..nc).map(|k| boundary_flux(&s, &full, k)).collect();
            let touched: Vec<usize> = (0..nc).filter(|&k| fluxes[k].abs() > 1e-12).collect();
            (touched.len() == 1).then(|| {
                let k = touched[0];
                let scale = mesh.area(k) / fluxes[k];
                (full.iter().map(|c| c * scale).collect::<Vec<f64>>(), k)
            })
        })
        .expect("a boundary-edge dof exists");
    let out = compose_timestep_rhs(&vec![0.0; nc], (&s, &s.restrict(&full)), &vec![0.0; nc], &phys(1.0, 1.0, 1.0)).unwrap();
    for (k, &x) in out.iter().enumerate() {
        let expected = if k == cell { -1.0 } else { 0.0 };
        assert!((x - expected).abs() < 1e-13, "cell {k}: {x}");
    }
}

#[test]
fn mismatched_lengths_are_rejected() {
    let s = space();
    let err = compose_timestep_rhs(&[0.0; 3], (&s, &vec![0.0; s.n_free()]), &[0.0; 3], &phys(1.0, 1.0, 1.0)).unwrap_err();
    assert_eq!(err.kind(), "DimensionMismatch");
}
