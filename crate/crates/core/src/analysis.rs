//! Inf-sup constants, manufactured solutions, error norms, conservation
//! audits, convergence studies and parameter sweeps.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    BlockSystem, DgConfig, NormBlocks, Spaces, assemble_block_system, assemble_rhs, broken_h1_gram, strain_gram,
};
use crate::elements::{Family, Space, Triple, interpolate_pi_div, project_qh, remove_mean};
use crate::error::{BiotError, Result};
use crate::mesh::{Point, TriMesh};
use crate::params::ReducedParams;
use crate::quadrature::{accurate_rule, edge_rule, projection_edge_rule};
use crate::solver::{BlockPreconditioner, Solution, build_preconditioner, direct_solve, estimate_condition, minres_solve};
use crate::sparse;

// ---------------------------------------------------------------------------
// Dense generalized eigenproblems

/// Eigenvalues of the symmetric pencil `A x = theta N x`, `N` SPD, sorted
/// ascending.
pub fn generalized_symmetric_eigenvalues(a: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.shape() != n.shape() || !a.is_square() {
        return Err(BiotError::DimensionMismatch(format!(
            "pencil shapes {:?} and {:?}",
            a.shape(),
            n.shape()
        )));
    }
    let chol = Cholesky::new(n.clone())
        .ok_or_else(|| BiotError::SingularNormMatrix(format!("Cholesky failed on {}x{} matrix", n.nrows(), n.ncols())))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(a)
        .ok_or_else(|| BiotError::SingularNormMatrix("zero pivot".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| BiotError::SingularNormMatrix("zero pivot".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 10_000)
        .ok_or_else(|| BiotError::EigFailure("symmetric QR iteration did not converge".into()))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Basis of mean-zero cell fields: columns `e_i - (|K_i| / |K_last|) e_last`.
fn mean_zero_basis(areas: &[f64]) -> DMatrix<f64> {
    let n = areas.len();
    let last = areas[n - 1];
    DMatrix::from_fn(n, n - 1, |i, j| {
        if i == j {
            1.0
        } else if i == n - 1 {
            -areas[j] / last
        } else {
            0.0
        }
    })
}

/// Restricts the pressure block of a dense monolithic matrix to mean-zero
/// fields: returns `T' M T` with `T = diag(I, I, Z)`.
fn reduce_pressure(m: &DMatrix<f64>, op: usize, areas: &[f64]) -> DMatrix<f64> {
    let n = m.nrows();
    let np = n - op;
    let z = mean_zero_basis(areas);
    let mut t = DMatrix::<f64>::zeros(n, n - 1);
    for i in 0..op {
        t[(i, i)] = 1.0;
    }
    t.view_mut((op, op), (np, np - 1)).copy_from(&z);
    t.transpose() * m * t
}

fn block_diagonal(system: &BlockSystem, norms: &NormBlocks) -> DMatrix<f64> {
    let n = system.n_total();
    let (ov, op) = system.offsets();
    let mut d = DMatrix::zeros(n, n);
    for (blk, off) in [(&norms.n_u, 0), (&norms.n_v, ov), (&norms.n_p, op)] {
        for (i, j, &v) in blk.triplet_iter() {
            d[(off + i, off + j)] += v;
        }
    }
    d
}

/// Spectrum of the pencil `(A, diag(N_U, N_V, N_P))` on mean-zero pressures.
pub fn pencil_spectrum(system: &BlockSystem, norms: &NormBlocks) -> Result<Vec<f64>> {
    let (_, op) = system.offsets();
    let a = reduce_pressure(&sparse::to_dense(&system.matrix()), op, &system.areas);
    let n = reduce_pressure(&block_diagonal(system, norms), op, &system.areas);
    generalized_symmetric_eigenvalues(&a, &n)
}

// ---------------------------------------------------------------------------
// Inf-sup constants

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    /// Parameter-dependent norms with `gamma = max(1/rho, alpha_p)`;
    /// selected as `paper` on the command line.
    #[serde(rename = "paper")]
    Weighted,
    /// `||eps u||^2 + lambda ||div u||^2`, `rp_inv (||v||^2 + ||div v||^2)`,
    /// `||p||^2`.
    #[serde(rename = "natural")]
    Natural,
}

impl NormKind {
    pub fn name(self) -> &'static str {
        match self {
            NormKind::Weighted => "paper",
            NormKind::Natural => "natural",
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = BiotError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(NormKind::Weighted),
            "natural" => Ok(NormKind::Natural),
            other => Err(BiotError::ConfigError(format!("unknown norms `{other}` (paper|natural)"))),
        }
    }
}

/// Gram matrices of the natural norms. For discontinuous displacement
/// families the strain part carries the `h_e^-1` tangential jump term so the
/// norm stays definite.
pub fn natural_norm_blocks(system: &BlockSystem) -> NormBlocks {
    let p = &system.params;
    let strain = strain_gram(&system.spaces.u);
    NormBlocks {
        n_u: sparse::linear_combination(1.0, &strain, p.lambda(), &system.div_u),
        n_v: sparse::linear_combination(p.rp_inv(), &system.mass_v, p.rp_inv(), &system.div_v),
        n_p: sparse::diagonal(&system.areas),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfSupResult {
    pub beta0: f64,
    pub theta_spectrum: Option<Vec<f64>>,
    pub mesh_n: usize,
    pub params: ReducedParams,
    pub triple: Triple,
    pub norms: NormKind,
}

/// `beta0 = min |theta|` of `A x = theta N x`. Since `A` is symmetric this is
/// the two-sided inf-sup constant of the discrete form in the `N` norm.
pub fn infsup_constant(system: &BlockSystem, norms: &NormBlocks, mesh_n: usize, kind: NormKind) -> Result<InfSupResult> {
    let theta = pencil_spectrum(system, norms)?;
    let beta0 = theta.iter().map(|t| t.abs()).fold(f64::INFINITY, f64::min);
    Ok(InfSupResult {
        beta0,
        theta_spectrum: Some(theta),
        mesh_n,
        params: system.params,
        triple: system.spaces.triple,
        norms: kind,
    })
}

/// Assembles and evaluates the inf-sup constant for one configuration.
pub fn infsup_point(n: usize, triple: Triple, kind: NormKind, params: ReducedParams, dg: DgConfig) -> Result<InfSupResult> {
    let spaces = Spaces::new(Arc::new(TriMesh::structured(n)), triple)?;
    let system = assemble_block_system(&spaces, params, dg)?;
    let norms = match kind {
        NormKind::Weighted => system.norms(),
        NormKind::Natural => natural_norm_blocks(&system),
    };
    let mut r = infsup_constant(&system, &norms, n, kind)?;
    r.theta_spectrum = None;
    Ok(r)
}

// ---------------------------------------------------------------------------
// Manufactured solution

/// `u = (s, s)` with `s = sin(pi x) sin(pi y)`, `p = cos(pi x) cos(pi y)`,
/// `v = -R_p grad p`, and the sources `f`, `g` that make them exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedCase {
    pub params: ReducedParams,
}

impl ManufacturedCase {
    pub fn new(params: ReducedParams) -> Self {
        Self { params }
    }

    pub fn u(&self, x: Point) -> [f64; 2] {
        let s = (PI * x[0]).sin() * (PI * x[1]).sin();
        [s, s]
    }

    /// `grad[i][j] = d u_i / d x_j`.
    pub fn grad_u(&self, x: Point) -> [[f64; 2]; 2] {
        let gx = PI * (PI * x[0]).cos() * (PI * x[1]).sin();
        let gy = PI * (PI * x[0]).sin() * (PI * x[1]).cos();
        [[gx, gy], [gx, gy]]
    }

    /// `hess[i][j][k]`, identical for both components.
    pub fn hess_u(&self, x: Point) -> [[[f64; 2]; 2]; 2] {
        let s = (PI * x[0]).sin() * (PI * x[1]).sin();
        let c = (PI * x[0]).cos() * (PI * x[1]).cos();
        let h = [[-PI * PI * s, PI * PI * c], [PI * PI * c, -PI * PI * s]];
        [h, h]
    }

    pub fn div_u(&self, x: Point) -> f64 {
        let g = self.grad_u(x);
        g[0][0] + g[1][1]
    }

    pub fn p(&self, x: Point) -> f64 {
        (PI * x[0]).cos() * (PI * x[1]).cos()
    }

    pub fn v(&self, x: Point) -> [f64; 2] {
        let rp = self.params.rp();
        [
            rp * PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
            rp * PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
        ]
    }

    pub fn div_v(&self, x: Point) -> f64 {
        2.0 * PI * PI * self.params.rp() * self.p(x)
    }

    /// `f = -div eps(u) - lambda grad div u + grad p`.
    pub fn f(&self, x: Point) -> [f64; 2] {
        let s = (PI * x[0]).sin() * (PI * x[1]).sin();
        let c = (PI * x[0]).cos() * (PI * x[1]).cos();
        let pi2 = PI * PI;
        let div_eps = 0.5 * pi2 * (c - 3.0 * s);
        let grad_div = pi2 * (c - s);
        let lambda = self.params.lambda();
        [
            -div_eps - lambda * grad_div - PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
            -div_eps - lambda * grad_div - PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
        ]
    }

    /// `g = -div u - div v - alpha_p p`.
    pub fn g(&self, x: Point) -> f64 {
        -self.div_u(x) - self.div_v(x) - self.params.alpha_p() * self.p(x)
    }
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub err_u: f64,
    pub err_v: f64,
    pub err_p: f64,
}

impl ErrorNorms {
    pub fn total(&self) -> f64 {
        self.err_u + self.err_v + self.err_p
    }
}

/// Errors in `||.||_U = (||.||_DG^2 + lambda ||div .||^2)^1/2`,
/// `||.||_V = (rp_inv ||.||^2 + gamma^-1 ||div .||^2)^1/2` and
/// `||.||_P = gamma^1/2 ||.||`, with degree-8 quadrature.
pub fn error_norms(spaces: &Spaces, sol: &Solution, case: &ManufacturedCase) -> ErrorNorms {
    let params = &case.params;
    let mesh = spaces.mesh();
    let rule = accurate_rule();
    let uf = spaces.u.expand(&sol.u);
    let vf = spaces.v.expand(&sol.v);
    let (mut grad2, mut hess2, mut divu2, mut v2, mut divv2, mut p2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..mesh.n_cells() {
        let map = spaces.u.cell_map(k);
        let jac = map.det.abs();
        let h = mesh.cell_diameter(k);
        for (xi, w) in rule.iter() {
            let x = map.to_physical(xi);
            let wj = w * jac;
            let eu = spaces.u.eval_full(&uf, k, xi);
            let gu = case.grad_u(x);
            let hu = case.hess_u(x);
            for i in 0..2 {
                for j in 0..2 {
                    grad2 += wj * (gu[i][j] - eu.grad[i][j]).powi(2);
                    for l in 0..2 {
                        hess2 += wj * h * h * (hu[i][j][l] - eu.hess[i][j][l]).powi(2);
                    }
                }
            }
            divu2 += wj * (case.div_u(x) - eu.div).powi(2);
            let ev = spaces.v.eval_full(&vf, k, xi);
            let vx = case.v(x);
            v2 += wj * ((vx[0] - ev.value[0]).powi(2) + (vx[1] - ev.value[1]).powi(2));
            divv2 += wj * (case.div_v(x) - ev.div).powi(2);
            p2 += wj * (case.p(x) - sol.p[k]).powi(2);
        }
    }
    // The exact displacement is continuous and vanishes on the boundary, so
    // the tangential jump of the error is minus that of u_h.
    let mut jump2 = 0.0;
    let erule = edge_rule();
    for edge in &mesh.edges {
        let n = edge.normal;
        let mut sides = vec![(edge.cells.0, 1.0)];
        if let Some(k2) = edge.cells.1 {
            sides.push((k2, -1.0));
        }
        for (&s, &w) in erule.points.iter().zip(&erule.weights) {
            let x = edge.point(mesh, s);
            let mut jt = [0.0; 2];
            for &(k, sign) in &sides {
                let val = spaces.u.eval_full(&uf, k, spaces.u.cell_map(k).to_reference(x)).value;
                let vn = val[0] * n[0] + val[1] * n[1];
                jt[0] += sign * (val[0] - vn * n[0]);
                jt[1] += sign * (val[1] - vn * n[1]);
            }
            jump2 += w * (jt[0] * jt[0] + jt[1] * jt[1]);
        }
    }
    let dg2 = grad2 + jump2 + hess2;
    ErrorNorms {
        err_u: (dg2 + params.lambda() * divu2).sqrt(),
        err_v: (params.rp_inv() * v2 + divv2 / params.gamma()).sqrt(),
        err_p: (params.gamma() * p2).sqrt(),
    }
}

/// Canonical interpolants `Pi u`, `Pi v` and the mean-zero `Q_h p`.
pub fn interpolant(spaces: &Spaces, case: &ManufacturedCase) -> Solution {
    let mut p = project_qh(|x| case.p(x), spaces.mesh());
    remove_mean(spaces.mesh(), &mut p);
    Solution {
        u: spaces.u.restrict(&interpolate_pi_div(|x| case.u(x), &spaces.u)),
        v: spaces.v.restrict(&interpolate_pi_div(|x| case.v(x), &spaces.v)),
        p,
    }
}

/// Interpolation errors, used as the best-approximation reference.
pub fn best_approximation(spaces: &Spaces, case: &ManufacturedCase) -> ErrorNorms {
    error_norms(spaces, &interpolant(spaces, case), case)
}

// ---------------------------------------------------------------------------
// Conservation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationAudit {
    /// `r_K = -div u_h - div v_h - alpha_p p_h - Q_h g` per cell.
    pub residuals: Vec<f64>,
    pub max_abs: f64,
    /// `max_K |Q_h g|`.
    pub g_max: f64,
}

/// Cellwise residual of the mass balance, given the cell means of `g`.
pub fn conservation_audit(spaces: &Spaces, sol: &Solution, qh_g: &[f64], params: &ReducedParams) -> Result<ConservationAudit> {
    let du = spaces.u.cell_divergence_means(&sol.u)?;
    let dv = spaces.v.cell_divergence_means(&sol.v)?;
    if qh_g.len() != du.len() || sol.p.len() != du.len() {
        return Err(BiotError::DimensionMismatch("cell field lengths differ from the mesh".into()));
    }
    let residuals: Vec<f64> = (0..du.len())
        .map(|k| -du[k] - dv[k] - params.alpha_p() * sol.p[k] - qh_g[k])
        .collect();
    Ok(ConservationAudit {
        max_abs: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        g_max: qh_g.iter().fold(0.0, |m, r| m.max(r.abs())),
        residuals,
    })
}

// ---------------------------------------------------------------------------
// Manufactured solves and convergence

/// Result of one direct solve of the manufactured problem.
pub struct ManufacturedRun {
    pub system: BlockSystem,
    pub solution: Solution,
    pub case: ManufacturedCase,
}

impl ManufacturedRun {
    pub fn errors(&self) -> ErrorNorms {
        error_norms(&self.system.spaces, &self.solution, &self.case)
    }

    pub fn best(&self) -> ErrorNorms {
        best_approximation(&self.system.spaces, &self.case)
    }

    pub fn conservation(&self) -> Result<ConservationAudit> {
        let qh_g = project_qh(|x| self.case.g(x), self.system.spaces.mesh());
        conservation_audit(&self.system.spaces, &self.solution, &qh_g, &self.case.params)
    }
}

/// Assembles the manufactured problem on an `n x n` mesh.
pub fn manufactured_system(n: usize, triple: Triple, params: ReducedParams, dg: DgConfig) -> Result<(BlockSystem, ManufacturedCase)> {
    let spaces = Spaces::new(Arc::new(TriMesh::structured(n)), triple)?;
    let case = ManufacturedCase::new(params);
    let rhs = assemble_rhs(&spaces, |x| case.f(x), |x| case.g(x));
    Ok((assemble_block_system(&spaces, params, dg)?.with_rhs(rhs), case))
}

pub fn solve_manufactured(n: usize, triple: Triple, params: ReducedParams, dg: DgConfig) -> Result<ManufacturedRun> {
    let (system, case) = manufactured_system(n, triple, params, dg)?;
    let solution = direct_solve(&system)?;
    Ok(ManufacturedRun { system, solution, case })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub errors: ErrorNorms,
    pub best: ErrorNorms,
    pub order_u: Option<f64>,
    pub order_v: Option<f64>,
    pub order_p: Option<f64>,
}

impl ConvergenceRow {
    /// `(err_U + err_V + err_P) / (best_U + best_V + best_P)`.
    pub fn quasi_optimality(&self) -> f64 {
        self.errors.total() / self.best.total()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub params: ReducedParams,
    pub triple: Triple,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn finest_orders(&self) -> Option<[f64; 3]> {
        let r = self.rows.last()?;
        Some([r.order_u?, r.order_v?, r.order_p?])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,h,err_U,err_V,err_P,order_U,order_V,order_P")?;
        let opt = |o: Option<f64>| o.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.n,
                fmt_f64(r.h),
                fmt_f64(r.errors.err_u),
                fmt_f64(r.errors.err_v),
                fmt_f64(r.errors.err_p),
                opt(r.order_u),
                opt(r.order_v),
                opt(r.order_p)
            )?;
        }
        Ok(())
    }
}

/// Observed order between successive meshes,
/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)` (`log2` for halving).
fn order(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

pub fn convergence_study(params: ReducedParams, n_list: &[usize], triple: Triple, dg: DgConfig) -> Result<ConvergenceTable> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(BiotError::ConfigError("n-list must be positive and strictly increasing".into()));
    }
    let runs: Vec<(ErrorNorms, ErrorNorms, f64)> = n_list
        .par_iter()
        .map(|&n| {
            let run = solve_manufactured(n, triple, params, dg)?;
            Ok((run.errors(), run.best(), run.system.spaces.mesh().h_max))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n_list.len());
    for (i, (&n, (errors, best, h))) in n_list.iter().zip(&runs).enumerate() {
        let orders = (i > 0).then(|| {
            let (e0, _, h0) = &runs[i - 1];
            (
                order(e0.err_u, errors.err_u, *h0, *h),
                order(e0.err_v, errors.err_v, *h0, *h),
                order(e0.err_p, errors.err_p, *h0, *h),
            )
        });
        rows.push(ConvergenceRow {
            n,
            h: *h,
            errors: *errors,
            best: *best,
            order_u: orders.map(|o| o.0),
            order_v: orders.map(|o| o.1),
            order_p: orders.map(|o| o.2),
        });
    }
    Ok(ConvergenceTable { params, triple, rows })
}

// ---------------------------------------------------------------------------
// Sweeps

/// Explicit parameter lists; points are enumerated with `lambda` outermost
/// and `alpha_p` innermost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub lambdas: Vec<f64>,
    pub rp_invs: Vec<f64>,
    pub alpha_ps: Vec<f64>,
}

impl ParamGrid {
    /// `lambda in {1,1e2,1e4,1e8}`, `rp_inv in {1e-8,1e-4,1,1e4,1e8}`,
    /// `alpha_p in {0,1}`.
    pub fn robustness() -> Self {
        Self {
            lambdas: vec![1.0, 1e2, 1e4, 1e8],
            rp_invs: vec![1e-8, 1e-4, 1.0, 1e4, 1e8],
            alpha_ps: vec![0.0, 1.0],
        }
    }

    pub fn points(&self) -> Result<Vec<ReducedParams>> {
        let mut out = Vec::new();
        for &l in &self.lambdas {
            for &r in &self.rp_invs {
                for &a in &self.alpha_ps {
                    out.push(ReducedParams::new(l, r, a)?);
                }
            }
        }
        Ok(out)
    }
}

/// Inf-sup constants over `n_list x grid`, in that order.
pub fn infsup_sweep(triple: Triple, kind: NormKind, n_list: &[usize], grid: &ParamGrid, dg: DgConfig) -> Result<Vec<InfSupResult>> {
    let points = grid.points()?;
    let jobs: Vec<(usize, ReducedParams)> = n_list.iter().flat_map(|&n| points.iter().map(move |&p| (n, p))).collect();
    jobs.par_iter()
        .map(|&(n, p)| infsup_point(n, triple, kind, p, dg))
        .collect()
}

pub fn write_infsup_csv<W: Write>(rows: &[InfSupResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "triple,norms,n,lambda,rp_inv,alpha_p,beta0")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.triple.tag(),
            r.norms.name(),
            r.mesh_n,
            fmt_f64(r.params.lambda()),
            fmt_f64(r.params.rp_inv()),
            fmt_f64(r.params.alpha_p()),
            fmt_f64(r.beta0)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinresRow {
    pub n: usize,
    pub params: ReducedParams,
    pub iterations: usize,
    pub converged: bool,
    pub cond_estimate: Option<f64>,
}

/// Preconditioned MINRES on the manufactured problem at one parameter point.
pub fn minres_point(
    n: usize,
    params: ReducedParams,
    tol: f64,
    max_iter: usize,
    dg: DgConfig,
    with_condition: bool,
) -> Result<(MinresRow, crate::solver::SolveReport, Solution)> {
    let (system, _) = manufactured_system(n, Triple::STABLE, params, dg)?;
    let norms = system.norms();
    let pre: BlockPreconditioner = build_preconditioner(&system, &norms)?;
    let (sol, mut report) = minres_solve(&system, &pre, tol, max_iter)?;
    if with_condition {
        report.cond_estimate = Some(estimate_condition(&system, &norms)?);
    }
    Ok((
        MinresRow {
            n,
            params,
            iterations: report.iterations,
            converged: report.converged,
            cond_estimate: report.cond_estimate,
        },
        report,
        sol,
    ))
}

pub fn minres_sweep(n: usize, grid: &ParamGrid, tol: f64, max_iter: usize, dg: DgConfig, with_condition: bool) -> Result<Vec<MinresRow>> {
    grid.points()?
        .par_iter()
        .map(|&p| minres_point(n, p, tol, max_iter, dg, with_condition).map(|r| r.0))
        .collect()
}

pub fn write_minres_csv<W: Write>(rows: &[MinresRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,lambda,rp_inv,alpha_p,iters,cond_estimate")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n,
            fmt_f64(r.params.lambda()),
            fmt_f64(r.params.rp_inv()),
            fmt_f64(r.params.alpha_p()),
            r.iterations,
            r.cond_estimate.map(fmt_f64).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Round-trip float formatting (17 significant digits).
/// Negative zero prints as `0`.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

// ---------------------------------------------------------------------------
// Structural checks

/// Both sides of `sum_K int_dK (v.n_K) q = sum_e int_e {v} [q]` for an
/// H(div)-conforming `v` (full coefficients) and a broken scalar `q(cell, x)`.
pub fn trace_identity_scalar(space: &Space, v_full: &[f64], q: impl Fn(usize, Point) -> f64) -> (f64, f64) {
    let mesh = space.mesh();
    let rule = projection_edge_rule();
    let eval = |k: usize, x: Point| space.eval_full(v_full, k, space.cell_map(k).to_reference(x)).value;
    let mut lhs = 0.0;
    for k in 0..mesh.n_cells() {
        for (i, ce) in mesh.cell_edges[k].iter().enumerate() {
            let edge = &mesh.edges[ce.edge];
            let n = mesh.outward_normal(k, i);
            for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                let x = edge.point(mesh, s);
                let v = eval(k, x);
                lhs += w * edge.length * (v[0] * n[0] + v[1] * n[1]) * q(k, x);
            }
        }
    }
    let frames = mesh.jump_average_frames();
    let mut rhs = 0.0;
    for f in &frames {
        let edge = &mesh.edges[f.edge];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let x = edge.point(mesh, s);
            let (v1, q1) = (eval(f.k1, x), q(f.k1, x));
            let (v2, q2) = match f.k2 {
                Some(k2) => (eval(k2, x), q(k2, x)),
                None => ([0.0; 2], 0.0),
            };
            rhs += w * edge.length * f.normal_average(v1, v2) * f.jump(q1, q2);
        }
    }
    (lhs, rhs)
}

/// Both sides of `sum_K int_dK (tau n_K).v = sum_e int_e {tau}.[v]` for a
/// continuous tensor field `tau` and a broken vector field `v` given by full
/// coefficients on `space`.
pub fn trace_identity_tensor(space: &Space, v_full: &[f64], tau: impl Fn(Point) -> [[f64; 2]; 2]) -> (f64, f64) {
    let mesh = space.mesh();
    let rule = projection_edge_rule();
    let eval = |k: usize, x: Point| space.eval_full(v_full, k, space.cell_map(k).to_reference(x)).value;
    let mut lhs = 0.0;
    for k in 0..mesh.n_cells() {
        for (i, ce) in mesh.cell_edges[k].iter().enumerate() {
            let edge = &mesh.edges[ce.edge];
            let n = mesh.outward_normal(k, i);
            for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                let x = edge.point(mesh, s);
                let t = tau(x);
                let v = eval(k, x);
                let tn = [t[0][0] * n[0] + t[0][1] * n[1], t[1][0] * n[0] + t[1][1] * n[1]];
                lhs += w * edge.length * (tn[0] * v[0] + tn[1] * v[1]);
            }
        }
    }
    let mut rhs = 0.0;
    for f in mesh.jump_average_frames() {
        let edge = &mesh.edges[f.edge];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let x = edge.point(mesh, s);
            let t = tau(x);
            let avg = f.tensor_average(t, t);
            let v1 = eval(f.k1, x);
            let v2 = f.k2.map_or([0.0; 2], |k2| eval(k2, x));
            let jump = [f.jump(v1[0], v2[0]), f.jump(v1[1], v2[1])];
            rhs += w * edge.length * (avg[0] * jump[0] + avg[1] * jump[1]);
        }
    }
    (lhs, rhs)
}

/// Extreme eigenvalues of the pencil `(||.||_h Gram, ||.||_{1,h} Gram)` on
/// the constrained displacement space of an `n x n` mesh.
pub fn korn_bounds(family: Family, n: usize) -> Result<(f64, f64)> {
    let space = Space::new(Arc::new(TriMesh::structured(n)), family, true)?;
    let gh = sparse::to_dense(&strain_gram(&space));
    let g1 = sparse::to_dense(&broken_h1_gram(&space));
    let eig = generalized_symmetric_eigenvalues(&gh, &g1)?;
    Ok((eig[0], eig[eig.len() - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(l: f64, r: f64, a: f64) -> ReducedParams {
        ReducedParams::new(l, r, a).unwrap()
    }

    #[test]
    fn identity_pencil_has_unit_spectrum() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let eig = generalized_symmetric_eigenvalues(&a, &a).unwrap();
        assert!(eig.iter().all(|t| (t - 1.0).abs() < 1e-13));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            generalized_symmetric_eigenvalues(&a.view((0, 0), (2, 2)).into(), &indefinite),
            Err(BiotError::SingularNormMatrix(_))
        ));
    }

    #[test]
    fn mean_zero_basis_is_orthogonal_to_areas() {
        let areas = [0.1, 0.2, 0.3, 0.4];
        let z = mean_zero_basis(&areas);
        for j in 0..3 {
            let s: f64 = (0..4).map(|i| areas[i] * z[(i, j)]).sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn manufactured_boundary_values() {
        let case = ManufacturedCase::new(params(1.0, 1.0, 0.0));
        for y in [0.0, 0.3, 0.77, 1.0] {
            for x in [[0.0, y], [1.0, y], [y, 0.0], [y, 1.0]] {
                let u = case.u(x);
                assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
            }
            assert!(case.v([0.0, y])[0].abs() < 1e-15);
            assert!(case.v([1.0, y])[0].abs() < 1e-15);
            assert!(case.v([y, 0.0])[1].abs() < 1e-15);
        }
    }

    /// Central differences of the strong operators applied to the closed-form
    /// fields.
    fn fd_sources(case: &ManufacturedCase, x: Point) -> ([f64; 2], f64) {
        let h = 1e-4;
        let shift = |d: [f64; 2]| [x[0] + d[0], x[1] + d[1]];
        let lambda = case.params.lambda();
        let second = |f: &dyn Fn(Point) -> f64, a: usize, b: usize| {
            let mut ea = [0.0; 2];
            ea[a] = h;
            let mut eb = [0.0; 2];
            eb[b] = h;
            (f(shift([ea[0] + eb[0], ea[1] + eb[1]])) - f(shift([ea[0] - eb[0], ea[1] - eb[1]]))
                - f(shift([eb[0] - ea[0], eb[1] - ea[1]]))
                + f(shift([-ea[0] - eb[0], -ea[1] - eb[1]])))
                / (4.0 * h * h)
        };
        let u0 = |p: Point| case.u(p)[0];
        let u1 = |p: Point| case.u(p)[1];
        let dp = |a: usize| {
            let mut e = [0.0; 2];
            e[a] = h;
            (case.p(shift(e)) - case.p(shift([-e[0], -e[1]]))) / (2.0 * h)
        };
        // div eps(u)_i = sum_j 1/2 (d_j d_j u_i + d_i d_j u_j)
        let lap0 = second(&u0, 0, 0) + second(&u0, 1, 1);
        let lap1 = second(&u1, 0, 0) + second(&u1, 1, 1);
        let gd0 = second(&u0, 0, 0) + second(&u1, 0, 1);
        let gd1 = second(&u0, 0, 1) + second(&u1, 1, 1);
        let f = [
            -0.5 * (lap0 + gd0) - lambda * gd0 + dp(0),
            -0.5 * (lap1 + gd1) - lambda * gd1 + dp(1),
        ];
        let v0 = |p: Point| case.v(p)[0];
        let v1 = |p: Point| case.v(p)[1];
        let d = |fun: &dyn Fn(Point) -> f64, a: usize| {
            let mut e = [0.0; 2];
            e[a] = h;
            (fun(shift(e)) - fun(shift([-e[0], -e[1]]))) / (2.0 * h)
        };
        let div_u = d(&u0, 0) + d(&u1, 1);
        let div_v = d(&v0, 0) + d(&v1, 1);
        (f, -div_u - div_v - case.params.alpha_p() * case.p(x))
    }

    #[test]
    fn sources_match_finite_differences() {
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            0.05 + 0.9 * ((rng_state >> 11) as f64 / (1u64 << 53) as f64)
        };
        let case = ManufacturedCase::new(params(1.0, 1.0, 0.0));
        let pts: Vec<Point> = std::iter::once([0.25, 0.25]).chain((0..100).map(|_| [next(), next()])).collect();
        for x in pts {
            let (f, g) = fd_sources(&case, x);
            let (fe, ge) = (case.f(x), case.g(x));
            assert!((f[0] - fe[0]).abs() < 1e-6 && (f[1] - fe[1]).abs() < 1e-6, "{x:?}: {f:?} vs {fe:?}");
            assert!((g - ge).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn sources_match_finite_differences_for_other_params(
            x in 0.05f64..0.95, y in 0.05f64..0.95,
            lambda in 1.0f64..50.0, rp_inv in 0.1f64..10.0, alpha_p in 0.0f64..5.0,
        ) {
            let case = ManufacturedCase::new(params(lambda, rp_inv, alpha_p));
            let (f, g) = fd_sources(&case, [x, y]);
            let (fe, ge) = (case.f([x, y]), case.g([x, y]));
            let scale = lambda.max(1.0 / rp_inv);
            prop_assert!((f[0] - fe[0]).abs() < 1e-6 * scale && (f[1] - fe[1]).abs() < 1e-6 * scale);
            prop_assert!((g - ge).abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn zero_solution_pressure_error() {
        let p = params(1.0, 0.5, 0.0);
        let spaces = Spaces::new(Arc::new(TriMesh::structured(4)), Triple::STABLE).unwrap();
        let sol = Solution {
            u: vec![0.0; spaces.n_u()],
            v: vec![0.0; spaces.n_v()],
            p: vec![0.0; spaces.n_p()],
        };
        let e = error_norms(&spaces, &sol, &ManufacturedCase::new(p));
        assert!((e.err_p - p.gamma().sqrt() * 0.5).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_conservation_is_zero() {
        let spaces = Spaces::new(Arc::new(TriMesh::structured(2)), Triple::STABLE).unwrap();
        let sol = Solution {
            u: vec![0.0; spaces.n_u()],
            v: vec![0.0; spaces.n_v()],
            p: vec![0.0; spaces.n_p()],
        };
        let a = conservation_audit(&spaces, &sol, &[0.0; 8], &ReducedParams::default()).unwrap();
        assert_eq!(a.max_abs, 0.0);
    }

    #[test]
    fn direct_solve_conserves_mass() {
        let run = solve_manufactured(3, Triple::STABLE, params(1e4, 1e-4, 1.0), DgConfig::default()).unwrap();
        let audit = run.conservation().unwrap();
        assert!(audit.max_abs <= 1e-10 * (audit.g_max + 1.0), "{}", audit.max_abs);
    }

    #[test]
    fn natural_norms_coincide_with_weighted_norms_at_unit_parameters() {
        let (sys, _) = manufactured_system(2, Triple::STABLE, params(1.0, 1.0, 0.0), DgConfig::default()).unwrap();
        let a = sparse::to_dense(&natural_norm_blocks(&sys).n_v);
        let b = sparse::to_dense(&sys.norms().n_v);
        assert!((a - b).amax() < 1e-15);

        let (sys, _) = manufactured_system(2, Triple::STABLE, params(1.0, 1e6, 0.0), DgConfig::default()).unwrap();
        let a = sparse::to_dense(&natural_norm_blocks(&sys).n_v);
        let b = sparse::to_dense(&sys.norms().n_v);
        assert!((a - b).norm() > 0.0);
        let np = sparse::to_dense(&natural_norm_blocks(&sys).n_p);
        for k in 0..sys.n_p() {
            assert_eq!(np[(k, k)], sys.areas[k]);
        }
    }

    #[test]
    fn single_mesh_convergence_table_has_no_orders() {
        let t = convergence_study(ReducedParams::default(), &[2], Triple::STABLE, DgConfig::default()).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].order_u.is_none());
        assert!(t.finest_orders().is_none());
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,,"));
    }

    #[test]
    fn interpolant_errors_are_small_but_nonzero() {
        let spaces = Spaces::new(Arc::new(TriMesh::structured(4)), Triple::STABLE).unwrap();
        let case = ManufacturedCase::new(ReducedParams::default());
        let b4 = best_approximation(&spaces, &case);
        let spaces8 = Spaces::new(Arc::new(TriMesh::structured(8)), Triple::STABLE).unwrap();
        let b8 = best_approximation(&spaces8, &case);
        for (a, b) in [(b4.err_u, b8.err_u), (b4.err_v, b8.err_v), (b4.err_p, b8.err_p)] {
            assert!(a > b && (a / b).log2() > 0.8, "{a} -> {b}");
        }
    }

    #[test]
    fn infsup_positive_on_small_mesh() {
        let r = infsup_point(2, Triple::STABLE, NormKind::Weighted, ReducedParams::default(), DgConfig::default()).unwrap();
        assert!(r.beta0 > 0.0);
    }
}
