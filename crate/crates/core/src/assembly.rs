//! Assembly of the three-field block operator, right-hand sides and norm
//! Gram matrices.
//!
//! Unknowns are ordered `[u (free dofs), v (free dofs), p (one per cell)]`.
//! The pressure block keeps all cell values; the mean-zero condition is left
//! to the solvers (Lagrange multiplier or Krylov projection).

use std::sync::Arc;

use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::elements::{BasisEval, Family, Space, Triple, check_div_compatible, project_qh};
use crate::error::{BiotError, Result};
use crate::mesh::{Point, TriMesh};
use crate::params::ReducedParams;
use crate::quadrature::{accurate_rule, edge_rule, stiffness_rule};
use crate::sparse::{self, TripletBuilder};

/// Interior-penalty settings of the displacement form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgConfig {
    pub eta: f64,
}

impl Default for DgConfig {
    fn default() -> Self {
        Self { eta: 10.0 }
    }
}

impl DgConfig {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(BiotError::RangeViolation {
                name: "eta",
                value: eta,
                reason: "penalty must be positive",
            });
        }
        Ok(Self { eta })
    }
}

/// Weights of the terms making up a displacement bilinear form.
#[derive(Clone, Copy, Debug, Default)]
struct DisplacementForm {
    strain: f64,
    gradient: f64,
    hessian: f64,
    /// Multiplies `-{eps(u)}.[w_t] - {eps(w)}.[u_t]`.
    consistency: f64,
    /// Multiplies `h_e^-1 [u_t].[w_t]`.
    penalty: f64,
}

fn double_dot(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Pushes a symmetric local matrix given by its upper triangle.
fn push_symmetric(b: &mut TripletBuilder, dofs: &[Option<usize>], mut entry: impl FnMut(usize, usize) -> f64) {
    for i in 0..dofs.len() {
        let Some(gi) = dofs[i] else { continue };
        for j in i..dofs.len() {
            let Some(gj) = dofs[j] else { continue };
            let v = entry(i, j);
            if v == 0.0 {
                continue;
            }
            b.push(gi, gj, v);
            if i != j {
                b.push(gj, gi, v);
            }
        }
    }
}

/// Cellwise symmetric form `sum_K int_K k(phi_i, phi_j)`.
fn volume_form(space: &Space, kernel: impl Fn(&BasisEval, &BasisEval, usize) -> f64) -> CsrMatrix<f64> {
    let n = space.n_free();
    let mut b = TripletBuilder::new(n, n);
    let rule = stiffness_rule();
    for k in 0..space.mesh().n_cells() {
        let dofs = space.cell_free_dofs(k);
        let jac = space.cell_map(k).det.abs();
        let evals: Vec<(Vec<BasisEval>, f64)> = rule.iter().map(|(xi, w)| (space.eval_cell(k, xi), w * jac)).collect();
        push_symmetric(&mut b, &dofs, |i, j| {
            evals.iter().map(|(e, w)| w * kernel(&e[i], &e[j], k)).sum()
        });
    }
    b.build()
}

/// Traces of the basis functions of both neighbours of an edge at the edge
/// quadrature points: tangential jump contribution and `{eps(phi)}` average.
struct EdgeTraces {
    dofs: Vec<Option<usize>>,
    jump_t: Vec<Vec<[f64; 2]>>,
    avg_strain_n: Vec<Vec<[f64; 2]>>,
}

fn edge_traces(space: &Space, e: usize, points: &[f64]) -> EdgeTraces {
    let mesh = space.mesh();
    let edge = &mesh.edges[e];
    let n = edge.normal;
    let mut sides = vec![(edge.cells.0, 1.0)];
    if let Some(k2) = edge.cells.1 {
        sides.push((k2, -1.0));
    }
    let avg_weight = if sides.len() == 2 { 0.5 } else { 1.0 };
    let mut out = EdgeTraces {
        dofs: Vec::new(),
        jump_t: Vec::new(),
        avg_strain_n: Vec::new(),
    };
    for (k, jump_sign) in sides {
        let map = space.cell_map(k);
        let evals: Vec<Vec<BasisEval>> = points
            .iter()
            .map(|&s| space.eval_cell(k, map.to_reference(edge.point(mesh, s))))
            .collect();
        for (local, dof) in space.cell_free_dofs(k).into_iter().enumerate() {
            out.dofs.push(dof);
            let mut jt = Vec::with_capacity(points.len());
            let mut av = Vec::with_capacity(points.len());
            for ev in &evals {
                let b = &ev[local];
                let vn = dot2(b.value, n);
                jt.push([
                    jump_sign * (b.value[0] - vn * n[0]),
                    jump_sign * (b.value[1] - vn * n[1]),
                ]);
                let eps = b.strain();
                av.push([
                    avg_weight * (eps[0][0] * n[0] + eps[0][1] * n[1]),
                    avg_weight * (eps[1][0] * n[0] + eps[1][1] * n[1]),
                ]);
            }
            out.jump_t.push(jt);
            out.avg_strain_n.push(av);
        }
    }
    out
}

fn displacement_form(space: &Space, form: DisplacementForm) -> CsrMatrix<f64> {
    let mesh = space.mesh();
    let n = space.n_free();
    let volume = volume_form(space, |a, b, k| {
        let mut v = 0.0;
        if form.strain != 0.0 {
            v += form.strain * double_dot(&a.strain(), &b.strain());
        }
        if form.gradient != 0.0 {
            v += form.gradient * double_dot(&a.grad, &b.grad);
        }
        if form.hessian != 0.0 {
            let h = mesh.cell_diameter(k);
            let mut hh = 0.0;
            for i in 0..2 {
                hh += double_dot(&a.hess[i], &b.hess[i]);
            }
            v += form.hessian * h * h * hh;
        }
        v
    });
    if form.consistency == 0.0 && form.penalty == 0.0 {
        return volume;
    }
    let rule = edge_rule();
    let mut b = TripletBuilder::new(n, n);
    b.push_block(&volume, 0, 0, false);
    for (e, edge) in mesh.edges.iter().enumerate() {
        let tr = edge_traces(space, e, &rule.points);
        let len = edge.length;
        push_symmetric(&mut b, &tr.dofs, |i, j| {
            let mut v = 0.0;
            for (q, &w) in rule.weights.iter().enumerate() {
                let (ji, jj) = (tr.jump_t[i][q], tr.jump_t[j][q]);
                let cons = -dot2(tr.avg_strain_n[j][q], ji) - dot2(tr.avg_strain_n[i][q], jj);
                v += w * len * (form.consistency * cons + form.penalty / len * dot2(ji, jj));
            }
            v
        });
    }
    b.build()
}

/// The interior-penalty elasticity form
/// `sum_K (eps u, eps w) - sum_e ({eps u}, [w_t]) - sum_e ({eps w}, [u_t])
///  + sum_e eta/h_e ([u_t], [w_t])`, with boundary edges included.
pub fn assemble_ah(space: &Space, cfg: DgConfig) -> CsrMatrix<f64> {
    displacement_form(
        space,
        DisplacementForm {
            strain: 1.0,
            consistency: 1.0,
            penalty: cfg.eta,
            ..Default::default()
        },
    )
}

/// Gram matrix of
/// `||u||_DG^2 = sum ||grad u||^2 + sum h_e^-1 ||[u_t]||^2 + sum h_K^2 |u|_2^2`.
/// The second-derivative term is skipped for
/// piecewise-affine families where it vanishes identically.
pub fn dg_gram(space: &Space) -> CsrMatrix<f64> {
    let hessian = if space.family() == Family::Rt1 { 1.0 } else { 0.0 };
    displacement_form(
        space,
        DisplacementForm {
            gradient: 1.0,
            hessian,
            penalty: 1.0,
            ..Default::default()
        },
    )
}

/// Gram matrix of `||u||_h^2 = sum ||eps u||^2 + sum h_e^-1 ||[u_t]||^2`.
pub fn strain_gram(space: &Space) -> CsrMatrix<f64> {
    displacement_form(
        space,
        DisplacementForm {
            strain: 1.0,
            penalty: 1.0,
            ..Default::default()
        },
    )
}

/// Gram matrix of `||u||_{1,h}^2 = sum ||grad u||^2 + sum h_e^-1 ||[u_t]||^2`.
pub fn broken_h1_gram(space: &Space) -> CsrMatrix<f64> {
    displacement_form(
        space,
        DisplacementForm {
            gradient: 1.0,
            penalty: 1.0,
            ..Default::default()
        },
    )
}

/// `(div phi_i, div phi_j)`.
pub fn div_div(space: &Space) -> CsrMatrix<f64> {
    volume_form(space, |a, b, _| a.div * b.div)
}

/// Vector mass matrix `(phi_i, phi_j)`.
pub fn vector_mass(space: &Space) -> CsrMatrix<f64> {
    volume_form(space, |a, b, _| dot2(a.value, b.value))
}

/// `-(q_k, div phi_j)` with rows over cells.
pub fn divergence_coupling(space: &Space) -> CsrMatrix<f64> {
    let mesh = space.mesh();
    let mut b = TripletBuilder::new(mesh.n_cells(), space.n_free());
    let rule = stiffness_rule();
    for k in 0..mesh.n_cells() {
        let jac = space.cell_map(k).det.abs();
        let mut local = vec![0.0; space.cell_full_dofs(k).len()];
        for (xi, w) in rule.iter() {
            for (l, ev) in space.eval_cell(k, xi).iter().enumerate() {
                local[l] -= w * jac * ev.div;
            }
        }
        for (dof, v) in space.cell_free_dofs(k).into_iter().zip(local) {
            if let Some(j) = dof
                && v != 0.0
            {
                b.push(k, j, v);
            }
        }
    }
    b.build()
}

pub fn cell_areas(mesh: &TriMesh) -> Vec<f64> {
    (0..mesh.n_cells()).map(|k| mesh.area(k)).collect()
}

/// The displacement, flux and pressure spaces of one discretization.
#[derive(Clone, Debug)]
pub struct Spaces {
    pub triple: Triple,
    pub u: Space,
    pub v: Space,
    pub p: Space,
}

impl Spaces {
    /// Builds the spaces with `u.n = 0`, `v.n = 0` imposed by elimination.
    /// For continuous P1 displacements all boundary vertex values are
    /// eliminated.
    pub fn new(mesh: Arc<TriMesh>, triple: Triple) -> Result<Self> {
        check_div_compatible(triple.displacement, triple.pressure)?;
        check_div_compatible(triple.flux, triple.pressure)?;
        if !triple.flux.is_hdiv() {
            return Err(BiotError::IncompatibleSpaces(format!(
                "flux space {} is not H(div)-conforming",
                triple.flux.name()
            )));
        }
        Ok(Self {
            triple,
            u: Space::new(mesh.clone(), triple.displacement, true)?,
            v: Space::new(mesh.clone(), triple.flux, true)?,
            p: Space::new(mesh, triple.pressure, false)?,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.u.mesh()
    }

    pub fn n_u(&self) -> usize {
        self.u.n_free()
    }
    pub fn n_v(&self) -> usize {
        self.v.n_free()
    }
    pub fn n_p(&self) -> usize {
        self.p.n_free()
    }
    pub fn n_total(&self) -> usize {
        self.n_u() + self.n_v() + self.n_p()
    }
}

/// Discrete right-hand sides `(f, w)`, `0`, `(g, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rhs {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl Rhs {
    pub fn zeros(spaces: &Spaces) -> Self {
        Self {
            u: vec![0.0; spaces.n_u()],
            v: vec![0.0; spaces.n_v()],
            p: vec![0.0; spaces.n_p()],
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.u.len() + self.v.len() + self.p.len());
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.p);
        out
    }
}

/// Load vectors for body force `f` (degree-8 quadrature) and source `g`.
/// The pressure entries are `int_K g`, unshifted.
pub fn assemble_rhs(spaces: &Spaces, f: impl Fn(Point) -> [f64; 2], g: impl Fn(Point) -> f64) -> Rhs {
    let mesh = spaces.mesh();
    let rule = accurate_rule();
    let mut rhs = Rhs::zeros(spaces);
    for k in 0..mesh.n_cells() {
        let map = spaces.u.cell_map(k);
        let jac = map.det.abs();
        let dofs = spaces.u.cell_free_dofs(k);
        for (xi, w) in rule.iter() {
            let x = map.to_physical(xi);
            let fx = f(x);
            for (dof, ev) in dofs.iter().zip(spaces.u.eval_cell(k, xi)) {
                if let Some(i) = dof {
                    rhs.u[*i] += w * jac * dot2(fx, ev.value);
                }
            }
        }
    }
    // Same rule as `project_qh`, so that `rhs_p / |K|` is exactly `Q_h g`.
    rhs.p = project_qh(g, mesh).iter().zip(cell_areas(mesh)).map(|(q, a)| q * a).collect();
    rhs
}

/// The assembled block operator
///
/// ```text
/// [ A_uu   0     B_up^T ]
/// [ 0      A_vv  B_vp^T ]
/// [ B_up   B_vp  C_pp   ]
/// ```
///
/// with `A_uu = a_h + lambda D_u`, `A_vv = rp_inv M_v`, `B = -(q, div .)`,
/// `C_pp = -alpha_p M_p`.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub spaces: Spaces,
    pub params: ReducedParams,
    pub dg: DgConfig,
    pub a_h: CsrMatrix<f64>,
    pub div_u: CsrMatrix<f64>,
    pub a_uu: CsrMatrix<f64>,
    pub a_vv: CsrMatrix<f64>,
    pub mass_v: CsrMatrix<f64>,
    pub div_v: CsrMatrix<f64>,
    pub b_up: CsrMatrix<f64>,
    pub b_vp: CsrMatrix<f64>,
    pub c_pp: CsrMatrix<f64>,
    pub areas: Vec<f64>,
    pub rhs: Rhs,
}

pub fn assemble_block_system(spaces: &Spaces, params: ReducedParams, dg: DgConfig) -> Result<BlockSystem> {
    #[cfg(debug_assertions)]
    debug_check_coercivity(spaces.triple.displacement, dg);

    let a_h = assemble_ah(&spaces.u, dg);
    let div_u = div_div(&spaces.u);
    let a_uu = sparse::linear_combination(1.0, &a_h, params.lambda(), &div_u);
    let mass_v = vector_mass(&spaces.v);
    let div_v = div_div(&spaces.v);
    let a_vv = sparse::linear_combination(params.rp_inv(), &mass_v, 0.0, &sparse::zeros(spaces.n_v(), spaces.n_v()));
    let areas = cell_areas(spaces.mesh());
    let c_pp = sparse::diagonal(&areas.iter().map(|a| -params.alpha_p() * a).collect::<Vec<_>>());
    Ok(BlockSystem {
        spaces: spaces.clone(),
        params,
        dg,
        a_h,
        div_u,
        a_uu,
        a_vv,
        mass_v,
        div_v,
        b_up: divergence_coupling(&spaces.u),
        b_vp: divergence_coupling(&spaces.v),
        c_pp,
        areas,
        rhs: Rhs::zeros(spaces),
    })
}

impl BlockSystem {
    pub fn with_rhs(mut self, rhs: Rhs) -> Self {
        self.rhs = rhs;
        self
    }

    pub fn n_u(&self) -> usize {
        self.spaces.n_u()
    }
    pub fn n_v(&self) -> usize {
        self.spaces.n_v()
    }
    pub fn n_p(&self) -> usize {
        self.spaces.n_p()
    }
    pub fn n_total(&self) -> usize {
        self.spaces.n_total()
    }

    /// Offsets of the v and p blocks in the monolithic vector.
    pub fn offsets(&self) -> (usize, usize) {
        (self.n_u(), self.n_u() + self.n_v())
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (ov, op) = self.offsets();
        (&x[..ov], &x[ov..op], &x[op..])
    }

    /// Monolithic symmetric matrix.
    pub fn matrix(&self) -> CsrMatrix<f64> {
        let n = self.n_total();
        let (ov, op) = self.offsets();
        let mut b = TripletBuilder::new(n, n);
        b.push_block(&self.a_uu, 0, 0, false);
        b.push_block(&self.a_vv, ov, ov, false);
        b.push_block(&self.c_pp, op, op, false);
        for (i, j, &v) in self.b_up.triplet_iter() {
            b.push(op + i, j, v);
            b.push(j, op + i, v);
        }
        for (i, j, &v) in self.b_vp.triplet_iter() {
            b.push(op + i, ov + j, v);
            b.push(ov + j, op + i, v);
        }
        b.build()
    }

    /// `A x` blockwise.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (u, v, p) = self.split(x);
        let mut yu = sparse::matvec(&self.a_uu, u);
        let mut yv = sparse::matvec(&self.a_vv, v);
        let mut yp = sparse::matvec(&self.c_pp, p);
        let bu = sparse::matvec(&self.b_up, u);
        let bv = sparse::matvec(&self.b_vp, v);
        for ((y, a), b) in yp.iter_mut().zip(&bu).zip(&bv) {
            *y += a + b;
        }
        for (i, j, &val) in self.b_up.triplet_iter() {
            yu[j] += val * p[i];
        }
        for (i, j, &val) in self.b_vp.triplet_iter() {
            yv[j] += val * p[i];
        }
        yu.extend(yv);
        yu.extend(yp);
        yu
    }

    pub fn norms(&self) -> NormBlocks {
        assemble_norms(self)
    }
}

/// Gram matrices of the parameter-dependent norms
/// `||u||_U^2 = ||u||_DG^2 + lambda ||div u||^2`,
/// `||v||_V^2 = rp_inv ||v||^2 + gamma^-1 ||div v||^2`,
/// `||p||_P^2 = gamma ||p||^2`.
#[derive(Clone, Debug)]
pub struct NormBlocks {
    pub n_u: CsrMatrix<f64>,
    pub n_v: CsrMatrix<f64>,
    pub n_p: CsrMatrix<f64>,
}

pub fn assemble_norms(system: &BlockSystem) -> NormBlocks {
    let params = &system.params;
    let gamma = params.gamma();
    let dg = dg_gram(&system.spaces.u);
    NormBlocks {
        n_u: sparse::linear_combination(1.0, &dg, params.lambda(), &system.div_u),
        n_v: sparse::linear_combination(params.rp_inv(), &system.mass_v, 1.0 / gamma, &system.div_v),
        n_p: sparse::diagonal(&system.areas.iter().map(|a| gamma * a).collect::<Vec<_>>()),
    }
}

/// Smallest eigenvalue of the pencil `(a_h, ||.||_h Gram)` on a small
/// structured mesh. A positive value confirms the penalty is large enough.
pub fn coercivity_constant(family: Family, dg: DgConfig, n: usize) -> Result<f64> {
    let space = Space::new(Arc::new(TriMesh::structured(n)), family, true)?;
    let a = sparse::to_dense(&assemble_ah(&space, dg));
    let g = sparse::to_dense(&strain_gram(&space));
    let eig = crate::analysis::generalized_symmetric_eigenvalues(&a, &g)?;
    Ok(eig.iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(debug_assertions)]
fn debug_check_coercivity(family: Family, dg: DgConfig) {
    use std::collections::HashSet;
    use std::sync::{Mutex, OnceLock};

    static CHECKED: OnceLock<Mutex<HashSet<(Family, u64)>>> = OnceLock::new();
    let key = (family, dg.eta.to_bits());
    let set = CHECKED.get_or_init(|| Mutex::new(HashSet::new()));
    if set.lock().unwrap().contains(&key) {
        return;
    }
    let c = coercivity_constant(family, dg, 2).expect("coercivity check");
    debug_assert!(c > 0.0, "a_h is not coercive for {family:?} with eta = {}", dg.eta);
    set.lock().unwrap().insert(key);
}
