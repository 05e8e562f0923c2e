//! Block-preconditioned MINRES and dense direct solves.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use serde::{Deserialize, Serialize};

use crate::assembly::{BlockSystem, NormBlocks};
use crate::error::{BiotError, Result};
use crate::sparse::{self, dot};

/// Diagnostics of one iterative solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative preconditioned residual norm after each iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub cond_estimate: Option<f64>,
    pub wall_time: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `iter,resnorm` rows, iteration 0 being the initial residual.
    pub fn write_residual_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,resnorm")?;
        for (i, r) in self.residual_history.iter().enumerate() {
            writeln!(w, "{i},{r:.16e}")?;
        }
        Ok(())
    }
}

/// Solution vector together with its report.
#[derive(Clone, Debug, PartialEq)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub report: SolveReport,
}

/// Free-dof coefficients of the three fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl Solution {
    pub fn from_monolithic(system: &BlockSystem, x: &[f64]) -> Self {
        let (u, v, p) = system.split(x);
        Self {
            u: u.to_vec(),
            v: v.to_vec(),
            p: p.to_vec(),
        }
    }

    pub fn zeros(system: &BlockSystem) -> Self {
        Self {
            u: vec![0.0; system.n_u()],
            v: vec![0.0; system.n_v()],
            p: vec![0.0; system.n_p()],
        }
    }
}

/// Exact block-diagonal preconditioner
/// `diag((a_h + lambda D)^-1, (rp_inv M + gamma^-1 D)^-1, (gamma M_p)^-1)`.
pub struct BlockPreconditioner {
    inv_u: CscCholesky<f64>,
    inv_v: CscCholesky<f64>,
    p_diag: Vec<f64>,
    areas: Vec<f64>,
    n_u: usize,
    n_v: usize,
}

fn factor(m: &nalgebra_sparse::CsrMatrix<f64>, block: &'static str) -> Result<CscCholesky<f64>> {
    CscCholesky::factor(&sparse::to_csc(m)).map_err(|_| BiotError::FactorizationFailure { block })
}

pub fn build_preconditioner(system: &BlockSystem, norms: &NormBlocks) -> Result<BlockPreconditioner> {
    let p_diag: Vec<f64> = norms
        .n_p
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            row.col_indices()
                .iter()
                .zip(row.values())
                .find(|(j, _)| **j == i)
                .map_or(0.0, |(_, v)| *v)
        })
        .collect();
    if p_diag.iter().any(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(BiotError::FactorizationFailure { block: "pressure" });
    }
    Ok(BlockPreconditioner {
        inv_u: factor(&system.a_uu, "displacement")?,
        inv_v: factor(&norms.n_v, "flux")?,
        p_diag,
        areas: system.areas.clone(),
        n_u: system.n_u(),
        n_v: system.n_v(),
    })
}

impl BlockPreconditioner {
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let (ru, rest) = r.split_at(self.n_u);
        let (rv, rp) = rest.split_at(self.n_v);
        let zu = self.inv_u.solve(&DVector::from_column_slice(ru));
        let zv = self.inv_v.solve(&DVector::from_column_slice(rv));
        let mut out = Vec::with_capacity(r.len());
        out.extend(zu.iter());
        out.extend(zv.iter());
        let mut zp: Vec<f64> = rp.iter().zip(&self.p_diag).map(|(r, d)| r / d).collect();
        project_primal(&self.areas, &mut zp);
        out.extend(zp);
        out
    }
}

/// Removes the area-weighted mean of a pressure coefficient vector.
fn project_primal(areas: &[f64], p: &mut [f64]) {
    let total: f64 = areas.iter().sum();
    let mean = dot(areas, p) / total;
    p.iter_mut().for_each(|x| *x -= mean);
}

/// Removes the component of a pressure residual that pairs with constants.
fn project_dual(areas: &[f64], r: &mut [f64]) {
    let total: f64 = areas.iter().sum();
    let s: f64 = r.iter().sum::<f64>() / total;
    r.iter_mut().zip(areas).for_each(|(x, a)| *x -= s * a);
}

/// Preconditioned MINRES for a symmetric operator and SPD preconditioner.
///
/// Stops when `sqrt(r' M r) / sqrt(b' M b) <= tol`. Returns
/// [`BiotError::MaxIterExceeded`] with the last iterate when `max_iter` is
/// reached first.
pub fn minres(
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    apply_m: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<MinresOutcome> {
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = apply_m(b);
    let beta1_sq = dot(b, &y);
    if beta1_sq < 0.0 || !beta1_sq.is_finite() {
        return Err(BiotError::BreakdownDetected {
            iteration: 0,
            reason: "preconditioner is not positive definite".into(),
        });
    }
    let beta1 = beta1_sq.sqrt();
    let mut report = SolveReport {
        iterations: 0,
        residual_history: vec![1.0],
        converged: true,
        cond_estimate: None,
        wall_time: 0.0,
    };
    if beta1 == 0.0 {
        report.residual_history = vec![0.0];
        report.wall_time = start.elapsed().as_secs_f64();
        return Ok(MinresOutcome { x, report });
    }
    report.converged = false;

    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn): (f64, f64) = (-1.0, 0.0);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];

    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|yi| s * yi).collect();
        y = apply_a(&v);
        if itn >= 2 {
            let c = beta / oldb;
            y.iter_mut().zip(&r1).for_each(|(yi, ri)| *yi -= c * ri);
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        y.iter_mut().zip(&r2).for_each(|(yi, ri)| *yi -= c * ri);
        r1 = std::mem::replace(&mut r2, y);
        y = apply_m(&r2);
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 || !beta_sq.is_finite() {
            return Err(BiotError::BreakdownDetected {
                iteration: itn,
                reason: format!("r'Mr = {beta_sq:e}"),
            });
        }
        beta = beta_sq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v
            .iter()
            .zip(&w1)
            .zip(&w2)
            .map(|((vi, a), b)| (vi - oldeps * a - delta * b) * denom)
            .collect();
        x.iter_mut().zip(&w).for_each(|(xi, wi)| *xi += phi * wi);

        let rel = phibar / beta1;
        report.iterations = itn;
        report.residual_history.push(rel);
        if rel <= tol || beta == 0.0 {
            report.converged = true;
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    if !report.converged {
        let residual = *report.residual_history.last().unwrap();
        return Err(BiotError::MaxIterExceeded {
            iterations: report.iterations,
            residual,
            best: Box::new(MinresOutcome { x, report }),
        });
    }
    Ok(MinresOutcome { x, report })
}

/// MINRES on the block system with the pressure kept mean-zero.
pub fn minres_solve(
    system: &BlockSystem,
    precond: &BlockPreconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<(Solution, SolveReport)> {
    let (_, op) = system.offsets();
    let areas = &system.areas;
    let mut b = system.rhs.concat();
    project_dual(areas, &mut b[op..]);
    let apply_a = |x: &[f64]| {
        let mut y = system.apply(x);
        project_dual(areas, &mut y[op..]);
        y
    };
    let outcome = minres(apply_a, |r| precond.apply(r), &b, tol, max_iter)?;
    let mut sol = Solution::from_monolithic(system, &outcome.x);
    project_primal(areas, &mut sol.p);
    Ok((sol, outcome.report))
}

/// Dense direct solve of the block system with a Lagrange multiplier
/// enforcing `sum_K |K| p_K = 0`. The matrix is symmetrically equilibrated
/// and the solution polished by two steps of iterative refinement.
pub fn direct_solve(system: &BlockSystem) -> Result<Solution> {
    let n = system.n_total();
    let (_, op) = system.offsets();
    let a = system.matrix();
    let mut dense = DMatrix::<f64>::zeros(n + 1, n + 1);
    for (i, j, &v) in a.triplet_iter() {
        dense[(i, j)] += v;
    }
    for (k, &area) in system.areas.iter().enumerate() {
        dense[(op + k, n)] = area;
        dense[(n, op + k)] = area;
    }
    let scale: Vec<f64> = (0..=n)
        .map(|i| {
            let m = dense.row(i).amax();
            if m > 0.0 { 1.0 / m.sqrt() } else { 1.0 }
        })
        .collect();
    for j in 0..=n {
        for i in 0..=n {
            dense[(i, j)] *= scale[i] * scale[j];
        }
    }
    let lu = dense.lu();
    let mut rhs = system.rhs.concat();
    rhs.push(0.0);

    let solve = |r: &[f64]| -> Result<Vec<f64>> {
        let scaled = DVector::from_iterator(n + 1, r.iter().zip(&scale).map(|(a, s)| a * s));
        let y = lu
            .solve(&scaled)
            .ok_or(BiotError::FactorizationFailure { block: "monolithic" })?;
        Ok(y.iter().zip(&scale).map(|(a, s)| a * s).collect())
    };
    let residual = |x: &[f64]| -> Vec<f64> {
        let mut ax = sparse::matvec(&a, &x[..n]);
        for (k, &area) in system.areas.iter().enumerate() {
            ax[op + k] += area * x[n];
        }
        ax.push(dot(&system.areas, &x[op..n]));
        rhs.iter().zip(&ax).map(|(b, y)| b - y).collect()
    };
    let mut x = solve(&rhs)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(BiotError::FactorizationFailure { block: "monolithic" });
    }
    for _ in 0..2 {
        let dx = solve(&residual(&x))?;
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
    }
    x.truncate(n);
    Ok(Solution::from_monolithic(system, &x))
}

/// `kappa = max|theta| / min|theta|` over the pencil `A x = theta N x` with
/// `N = diag(A_uu, rp_inv M + gamma^-1 D, gamma M_p)`, pressure restricted
/// to mean-zero fields. Dense; intended for small meshes.
pub fn estimate_condition(system: &BlockSystem, norms: &NormBlocks) -> Result<f64> {
    let pre = NormBlocks {
        n_u: system.a_uu.clone(),
        n_v: norms.n_v.clone(),
        n_p: norms.n_p.clone(),
    };
    let theta = crate::analysis::pencil_spectrum(system, &pre)?;
    let (lo, hi) = theta
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(t.abs()), hi.max(t.abs())));
    Ok(hi / lo)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::assembly::{DgConfig, Spaces, assemble_block_system, assemble_rhs};
    use crate::elements::Triple;
    use crate::mesh::TriMesh;
    use crate::params::ReducedParams;

    fn system(n: usize, lambda: f64, rp_inv: f64, alpha_p: f64) -> BlockSystem {
        let spaces = Spaces::new(Arc::new(TriMesh::structured(n)), Triple::STABLE).unwrap();
        let p = ReducedParams::new(lambda, rp_inv, alpha_p).unwrap();
        let sys = assemble_block_system(&spaces, p, DgConfig::default()).unwrap();
        let rhs = assemble_rhs(
            &spaces,
            |x| [x[1].sin() + 1.0, x[0] * x[1]],
            |x| (3.0 * x[0]).cos() - x[1],
        );
        sys.with_rhs(rhs)
    }

    #[test]
    fn zero_rhs_takes_zero_iterations() {
        let out = minres(|x| x.to_vec(), |x| x.to_vec(), &[0.0, 0.0], 1e-8, 10).unwrap();
        assert_eq!(out.report.iterations, 0);
        assert_eq!(out.x, vec![0.0, 0.0]);
    }

    #[test]
    fn exactly_preconditioned_diagonal_converges_in_one_step() {
        let d = [2.0, 5.0];
        let out = minres(
            |x| vec![d[0] * x[0], d[1] * x[1]],
            |x| vec![x[0] / d[0], x[1] / d[1]],
            &[1.0, 1.0],
            1e-10,
            10,
        )
        .unwrap();
        assert_eq!(out.report.iterations, 1);
        assert!((out.x[0] - 0.5).abs() < 1e-15 && (out.x[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn max_iter_returns_best_iterate() {
        let d = [1.0, 2.0, 3.0, 4.0];
        let err = minres(|x| x.iter().zip(&d).map(|(a, b)| a * b).collect(), |x| x.to_vec(), &[1.0; 4], 1e-14, 2)
            .unwrap_err();
        match err {
            BiotError::MaxIterExceeded { iterations, best, .. } => {
                assert_eq!(iterations, 2);
                assert_eq!(best.x.len(), 4);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn minres_matches_direct_solve() {
        let sys = system(3, 10.0, 0.5, 0.0);
        let norms = sys.norms();
        let pre = build_preconditioner(&sys, &norms).unwrap();
        let (it, report) = minres_solve(&sys, &pre, 1e-12, 500).unwrap();
        let direct = direct_solve(&sys).unwrap();
        assert!(report.converged);
        for w in report.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        for (a, b) in it.u.iter().chain(&it.v).chain(&it.p).zip(direct.u.iter().chain(&direct.v).chain(&direct.p)) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let mean: f64 = it.p.iter().zip(&sys.areas).map(|(p, a)| p * a).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn preconditioner_blocks_match_dense_inverses() {
        let sys = system(2, 1.0, 1.0, 0.0);
        let norms = sys.norms();
        let pre = build_preconditioner(&sys, &norms).unwrap();
        let a_uu = sparse::to_dense(&sys.a_uu).try_inverse().unwrap();
        let n_v = sparse::to_dense(&norms.n_v).try_inverse().unwrap();
        let n = sys.n_total();
        for j in [0, 3, sys.n_u() + 1] {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let z = pre.apply(&e);
            let (col, off) = if j < sys.n_u() {
                (a_uu.column(j).iter().copied().collect::<Vec<_>>(), 0)
            } else {
                (n_v.column(j - sys.n_u()).iter().copied().collect(), sys.n_u())
            };
            for (i, c) in col.iter().enumerate() {
                assert!((z[off + i] - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pressure_block_scales_with_gamma() {
        let sys = system(2, 1.0, 1.0, 1e6);
        let norms = sys.norms();
        let pre = build_preconditioner(&sys, &norms).unwrap();
        let (_, op) = sys.offsets();
        let mut r = vec![0.0; sys.n_total()];
        r[op] = sys.areas[0];
        r[op + 1] = -sys.areas[1];
        let z = pre.apply(&r);
        assert!((z[op] - 1e-6).abs() < 1e-18 && (z[op + 1] + 1e-6).abs() < 1e-18);
    }

    #[test]
    fn report_serialization() {
        let r = SolveReport {
            iterations: 2,
            residual_history: vec![1.0, 0.1, 1e-9],
            converged: true,
            cond_estimate: Some(3.5),
            wall_time: 0.25,
        };
        let back: SolveReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let mut csv = Vec::new();
        r.write_residual_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next(), Some("iter,resnorm"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn direct_solve_of_homogeneous_problem_is_zero() {
        let spaces = Spaces::new(Arc::new(TriMesh::structured(2)), Triple::STABLE).unwrap();
        let sys = assemble_block_system(&spaces, ReducedParams::default(), DgConfig::default()).unwrap();
        let sol = direct_solve(&sys).unwrap();
        assert!(sol.u.iter().chain(&sol.v).chain(&sol.p).all(|&x| x == 0.0));
    }
}
