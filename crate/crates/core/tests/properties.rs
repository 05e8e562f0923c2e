//! Property tests of the assembled operators over random parameters.

use std::sync::{Arc, OnceLock};

use biot_hdiv::analysis::manufactured_system;
use biot_hdiv::assembly::{DgConfig, Spaces, assemble_block_system};
use biot_hdiv::elements::{Family, Space, Triple, interpolate_pi_div, project_qh};
use biot_hdiv::mesh::TriMesh;
use biot_hdiv::params::ReducedParams;
use biot_hdiv::solver::{build_preconditioner, direct_solve, minres_solve};
use biot_hdiv::sparse::{dot, matvec, max_asymmetry};
use proptest::prelude::*;

fn spaces() -> &'static Spaces {
    static S: OnceLock<Spaces> = OnceLock::new();
    S.get_or_init(|| Spaces::new(Arc::new(TriMesh::structured(3)), Triple::STABLE).unwrap())
}

fn arb_params() -> impl Strategy<Value = ReducedParams> {
    (0.0f64..8.0, -8.0f64..8.0, prop_oneof![Just(0.0), 0.0f64..2.0])
        .prop_map(|(l, r, a)| ReducedParams::new(10f64.powf(l), 10f64.powf(r), a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn block_operator_is_exactly_symmetric(p in arb_params(), eta in 5.0f64..50.0) {
        let sys = assemble_block_system(spaces(), p, DgConfig::new(eta).unwrap()).unwrap();
        prop_assert_eq!(max_asymmetry(&sys.matrix()), 0.0);
    }

    #[test]
    fn minres_agrees_with_direct_solve(p in arb_params()) {
        let (sys, _) = manufactured_system(3, Triple::STABLE, p, DgConfig::default()).unwrap();
        let direct = direct_solve(&sys).unwrap();
        let pre = build_preconditioner(&sys, &sys.norms()).unwrap();
        let (iter, report) = minres_solve(&sys, &pre, 1e-12, 500).unwrap();
        prop_assert!(report.converged);
        // Relative error in the parameter-dependent product norm.
        let norms = sys.norms();
        let sq = |m, x: &[f64]| dot(x, &matvec(m, x));
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let err = sq(&norms.n_u, &diff(&direct.u, &iter.u))
            + sq(&norms.n_v, &diff(&direct.v, &iter.v))
            + sq(&norms.n_p, &diff(&direct.p, &iter.p));
        let size = sq(&norms.n_u, &direct.u) + sq(&norms.n_v, &direct.v) + sq(&norms.n_p, &direct.p);
        prop_assert!(err.sqrt() <= 1e-8 * size.sqrt(), "{} vs {}", err.sqrt(), size.sqrt());
    }

    #[test]
    fn interpolant_divergence_is_cell_mean_of_divergence(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.5f64..3.0) {
        let mesh = Arc::new(TriMesh::structured(3));
        for family in [Family::Bdm1, Family::Rt0] {
            let space = Space::new(mesh.clone(), family, false).unwrap();
            let u = |x: [f64; 2]| [a * (c * x[1]).sin() + x[0] * x[0], b * x[0] * x[1]];
            let div = |x: [f64; 2]| 2.0 * x[0] + b * x[0];
            let full = interpolate_pi_div(u, &space);
            let lhs = space.cell_divergence_means(&space.restrict(&full)).unwrap();
            for (l, r) in lhs.iter().zip(project_qh(div, &mesh)) {
                prop_assert!((l - r).abs() < 1e-12);
            }
        }
    }
}
