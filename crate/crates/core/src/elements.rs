//! Finite element families, Piola-mapped bases and interpolation operators.
//!
//! H(div) bases (RT0, BDM1, RT1) are built on the reference triangle as the
//! dual basis of their degrees of freedom: normal moments against `{1, 2s-1}`
//! on each edge (`s` runs from the lower to the higher local vertex) and, for
//! RT1, the two interior moments `int v_j`. Physical basis functions are the
//! contravariant Piola images `J v / det J`, multiplied by `±1` so that edge
//! moments refer to the global edge normal and global edge direction.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{BiotError, Result};
use crate::mesh::{LOCAL_EDGES, Point, TriMesh};
use crate::quadrature::{accurate_rule, edge_rule, projection_edge_rule, projection_rule, stiffness_rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Bdm1,
    Rt0,
    Rt1,
    P0,
    /// Continuous vector-valued P1 (nodal).
    P1cVec,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bdm1 => "bdm1",
            Family::Rt0 => "rt0",
            Family::Rt1 => "rt1",
            Family::P0 => "p0",
            Family::P1cVec => "p1c",
        }
    }

    pub fn is_hdiv(self) -> bool {
        matches!(self, Family::Bdm1 | Family::Rt0 | Family::Rt1)
    }

    pub fn dofs_per_cell(self) -> usize {
        match self {
            Family::Bdm1 => 6,
            Family::Rt0 => 3,
            Family::Rt1 => 8,
            Family::P0 => 1,
            Family::P1cVec => 6,
        }
    }

    /// Number of normal moments per edge for H(div) families.
    fn edge_moments(self) -> usize {
        match self {
            Family::Rt0 => 1,
            Family::Bdm1 | Family::Rt1 => 2,
            _ => 0,
        }
    }

    fn interior_moments(self) -> usize {
        if self == Family::Rt1 { 2 } else { 0 }
    }
}

impl std::str::FromStr for Family {
    type Err = BiotError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bdm1" => Ok(Family::Bdm1),
            "rt0" => Ok(Family::Rt0),
            "rt1" => Ok(Family::Rt1),
            "p0" => Ok(Family::P0),
            "p1c" | "p1cvec" | "p1" => Ok(Family::P1cVec),
            other => Err(BiotError::ConfigError(format!("unknown element family `{other}`"))),
        }
    }
}

/// Displacement / flux / pressure element choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub displacement: Family,
    pub flux: Family,
    pub pressure: Family,
}

impl Triple {
    /// BDM1 / RT0 / P0.
    pub const STABLE: Triple = Triple {
        displacement: Family::Bdm1,
        flux: Family::Rt0,
        pressure: Family::P0,
    };
    /// Continuous P1 / RT0 / P0, not uniformly stable.
    pub const P1_RT0_P0: Triple = Triple {
        displacement: Family::P1cVec,
        flux: Family::Rt0,
        pressure: Family::P0,
    };

    pub fn tag(&self) -> String {
        format!("{}-{}-{}", self.displacement.name(), self.flux.name(), self.pressure.name())
    }
}

impl std::str::FromStr for Triple {
    type Err = BiotError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 {
            return Err(BiotError::ConfigError(format!(
                "triple `{s}` must look like `bdm1-rt0-p0`"
            )));
        }
        Ok(Triple {
            displacement: parts[0].parse()?,
            flux: parts[1].parse()?,
            pressure: parts[2].parse()?,
        })
    }
}

impl std::fmt::Display for Triple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.tag())
    }
}

// ---------------------------------------------------------------------------
// Reference polynomials

const N_MONO: usize = 6; // 1, x, y, x², xy, y²

fn monomials(p: [f64; 2]) -> [f64; N_MONO] {
    let [x, y] = p;
    [1.0, x, y, x * x, x * y, y * y]
}

fn monomial_grads(p: [f64; 2]) -> [[f64; 2]; N_MONO] {
    let [x, y] = p;
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0 * x, 0.0], [y, x], [0.0, 2.0 * y]]
}

const MONOMIAL_HESS: [[[f64; 2]; 2]; N_MONO] = [
    [[0.0, 0.0], [0.0, 0.0]],
    [[0.0, 0.0], [0.0, 0.0]],
    [[0.0, 0.0], [0.0, 0.0]],
    [[2.0, 0.0], [0.0, 0.0]],
    [[0.0, 1.0], [1.0, 0.0]],
    [[0.0, 0.0], [0.0, 2.0]],
];

/// Vector polynomial of degree <= 2, coefficients per component over
/// `{1, x, y, x², xy, y²}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VecPoly(pub [[f64; N_MONO]; 2]);

impl VecPoly {
    fn unit(component: usize, mono: usize) -> Self {
        let mut c = [[0.0; N_MONO]; 2];
        c[component][mono] = 1.0;
        Self(c)
    }

    pub fn value(&self, p: [f64; 2]) -> [f64; 2] {
        let m = monomials(p);
        [dot6(&self.0[0], &m), dot6(&self.0[1], &m)]
    }

    /// `grad[i][a] = d v_i / d x_a`.
    pub fn grad(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let g = monomial_grads(p);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for (c, gm) in self.0[i].iter().zip(&g) {
                out[i][0] += c * gm[0];
                out[i][1] += c * gm[1];
            }
        }
        out
    }

    pub fn div(&self, p: [f64; 2]) -> f64 {
        let g = self.grad(p);
        g[0][0] + g[1][1]
    }

    /// `hess[i][a][b] = d² v_i / dx_a dx_b` (constant).
    pub fn hess(&self) -> [[[f64; 2]; 2]; 2] {
        let mut out = [[[0.0; 2]; 2]; 2];
        for i in 0..2 {
            for (c, h) in self.0[i].iter().zip(&MONOMIAL_HESS) {
                for a in 0..2 {
                    for b in 0..2 {
                        out[i][a][b] += c * h[a][b];
                    }
                }
            }
        }
        out
    }

    /// Divergence as coefficients over `{1, x, y}`.
    fn div_coefficients(&self) -> [f64; 3] {
        let [u, v] = self.0;
        // d/dx of u: u1 + 2 u3 x + u4 y ; d/dy of v: v2 + v4 x + 2 v5 y
        [u[1] + v[2], 2.0 * u[3] + v[4], u[4] + 2.0 * v[5]]
    }

    fn combine(polys: &[VecPoly], coeffs: impl Iterator<Item = f64>) -> VecPoly {
        let mut out = [[0.0; N_MONO]; 2];
        for (p, c) in polys.iter().zip(coeffs) {
            for i in 0..2 {
                for m in 0..N_MONO {
                    out[i][m] += c * p.0[i][m];
                }
            }
        }
        VecPoly(out)
    }
}

fn dot6(a: &[f64; N_MONO], b: &[f64; N_MONO]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub const REF_VERTICES: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Unit outward normal and length of reference edge `i`.
fn reference_edge(i: usize) -> (Point, f64) {
    let [a, b] = LOCAL_EDGES[i];
    let (pa, pb) = (REF_VERTICES[a], REF_VERTICES[b]);
    let t = [pb[0] - pa[0], pb[1] - pa[1]];
    let len = t[0].hypot(t[1]);
    let mut n = [t[1] / len, -t[0] / len];
    let opp = REF_VERTICES[i];
    if n[0] * (opp[0] - pa[0]) + n[1] * (opp[1] - pa[1]) > 0.0 {
        n = [-n[0], -n[1]];
    }
    (n, len)
}

/// Edge weight functions `L_0 = 1`, `L_1 = 2s - 1`.
fn edge_weight(k: usize, s: f64) -> f64 {
    if k == 0 { 1.0 } else { 2.0 * s - 1.0 }
}

/// Reference-element basis of one family.
///
/// P0 stores its constant scalar basis function in the first component.
#[derive(Clone, Debug)]
pub struct RefBasis {
    pub family: Family,
    pub dofs_per_cell: usize,
    pub polys: Vec<VecPoly>,
}

impl RefBasis {
    pub fn get(family: Family) -> &'static RefBasis {
        static CACHE: [OnceLock<RefBasis>; 5] = [const { OnceLock::new() }; 5];
        let slot = match family {
            Family::Bdm1 => 0,
            Family::Rt0 => 1,
            Family::Rt1 => 2,
            Family::P0 => 3,
            Family::P1cVec => 4,
        };
        CACHE[slot].get_or_init(|| RefBasis::build(family))
    }

    fn build(family: Family) -> RefBasis {
        let polys = match family {
            Family::P0 => vec![VecPoly::unit(0, 0)],
            Family::P1cVec => {
                // lambda_a e_c ordered as (vertex, component)
                let bary = [
                    [1.0, -1.0, -1.0, 0.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                ];
                let mut out = Vec::with_capacity(6);
                for b in bary {
                    for c in 0..2 {
                        let mut coeffs = [[0.0; N_MONO]; 2];
                        coeffs[c] = b;
                        out.push(VecPoly(coeffs));
                    }
                }
                out
            }
            _ => {
                let span = hdiv_span(family);
                let n = span.len();
                let mut dual = DMatrix::<f64>::zeros(n, n);
                for (j, p) in span.iter().enumerate() {
                    let dofs = reference_dofs(family, |x| p.value(x));
                    for (i, d) in dofs.into_iter().enumerate() {
                        dual[(i, j)] = d;
                    }
                }
                let inv = dual.try_inverse().expect("reference dual matrix is invertible");
                (0..n)
                    .map(|k| VecPoly::combine(&span, (0..n).map(|j| inv[(j, k)])))
                    .collect()
            }
        };
        RefBasis {
            family,
            dofs_per_cell: polys.len(),
            polys,
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> Vec<[f64; 2]> {
        self.polys.iter().map(|q| q.value(p)).collect()
    }

    pub fn div_eval(&self, p: [f64; 2]) -> Vec<f64> {
        self.polys.iter().map(|q| q.div(p)).collect()
    }

    pub fn grad_eval(&self, p: [f64; 2]) -> Vec<[[f64; 2]; 2]> {
        self.polys.iter().map(|q| q.grad(p)).collect()
    }

    /// Dimension of `span{div phi}` and whether it lies in the constants.
    fn divergence_rank(&self) -> (usize, bool) {
        let rows: Vec<[f64; 3]> = self.polys.iter().map(|p| p.div_coefficients()).collect();
        let m = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
        let rank = m.rank(1e-10);
        let constant_only = rows.iter().all(|r| r[1].abs() < 1e-12 && r[2].abs() < 1e-12);
        (rank, constant_only)
    }
}

fn hdiv_span(family: Family) -> Vec<VecPoly> {
    let mut span = Vec::new();
    match family {
        Family::Rt0 => {
            span.push(VecPoly::unit(0, 0));
            span.push(VecPoly::unit(1, 0));
            let mut xv = VecPoly::default();
            xv.0[0][1] = 1.0;
            xv.0[1][2] = 1.0;
            span.push(xv);
        }
        Family::Bdm1 | Family::Rt1 => {
            for c in 0..2 {
                for m in 0..3 {
                    span.push(VecPoly::unit(c, m));
                }
            }
            if family == Family::Rt1 {
                // (x, y) times homogeneous linears x and y
                let mut a = VecPoly::default();
                a.0[0][3] = 1.0;
                a.0[1][4] = 1.0;
                let mut b = VecPoly::default();
                b.0[0][4] = 1.0;
                b.0[1][5] = 1.0;
                span.push(a);
                span.push(b);
            }
        }
        _ => unreachable!("not an H(div) family"),
    }
    span
}

/// Degrees of freedom of a reference field (local ordering: edge-major, then
/// interior moments).
fn reference_dofs(family: Family, v: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let nk = family.edge_moments();
    let mut out = Vec::with_capacity(family.dofs_per_cell());
    let rule = edge_rule();
    for i in 0..3 {
        let (n, len) = reference_edge(i);
        let [a, b] = LOCAL_EDGES[i];
        let (pa, pb) = (REF_VERTICES[a], REF_VERTICES[b]);
        for k in 0..nk {
            let mut m = 0.0;
            for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let val = v(x);
                m += w * len * (val[0] * n[0] + val[1] * n[1]) * edge_weight(k, s);
            }
            out.push(m);
        }
    }
    if family.interior_moments() > 0 {
        let rule = accurate_rule();
        let mut m = [0.0; 2];
        for (x, w) in rule.iter() {
            let val = v(x);
            m[0] += w * val[0];
            m[1] += w * val[1];
        }
        out.extend(m);
    }
    out
}

/// Checks the local compatibility condition `div U(K) = Q(K)` by a rank test.
pub fn check_div_compatible(vector: Family, pressure: Family) -> Result<()> {
    if pressure != Family::P0 {
        return Err(BiotError::IncompatibleSpaces(format!(
            "pressure space {} is not supported (only P0)",
            pressure.name()
        )));
    }
    if !(vector.is_hdiv() || vector == Family::P1cVec) {
        return Err(BiotError::IncompatibleSpaces(format!(
            "{} is not a vector family",
            vector.name()
        )));
    }
    let (rank, constant_only) = RefBasis::get(vector).divergence_rank();
    if rank != 1 || !constant_only {
        return Err(BiotError::IncompatibleSpaces(format!(
            "div {}(K) has dimension {rank}{} but Q(K) = P0",
            vector.name(),
            if constant_only { "" } else { " and is not piecewise constant" }
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cell geometry and Piola map

/// Affine map `x = v0 + J xi` of a cell.
#[derive(Clone, Copy, Debug)]
pub struct CellMap {
    pub origin: Point,
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub inv: [[f64; 2]; 2],
}

impl CellMap {
    pub fn from_vertices(cell: usize, v: [Point; 3]) -> Result<Self> {
        let jac = [[v[1][0] - v[0][0], v[2][0] - v[0][0]], [v[1][1] - v[0][1], v[2][1] - v[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let d2 = |p: Point, q: Point| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        let h2 = d2(v[0], v[1]).max(d2(v[1], v[2])).max(d2(v[0], v[2]));
        if det.abs() <= 1e-14 * h2 {
            return Err(BiotError::DegenerateCell { cell, det });
        }
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        Ok(Self {
            origin: v[0],
            jac,
            det,
            inv,
        })
    }

    pub fn of(mesh: &TriMesh, cell: usize) -> Result<Self> {
        Self::from_vertices(cell, mesh.cell_vertices(cell))
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> Point {
        let j = &self.jac;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: Point) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let m = &self.inv;
        [m[0][0] * d[0] + m[0][1] * d[1], m[1][0] * d[0] + m[1][1] * d[1]]
    }

    fn piola_value(&self, v: [f64; 2]) -> [f64; 2] {
        let j = &self.jac;
        [
            (j[0][0] * v[0] + j[0][1] * v[1]) / self.det,
            (j[1][0] * v[0] + j[1][1] * v[1]) / self.det,
        ]
    }

    /// Inverse Piola pull-back `det J J^-1 v`.
    fn piola_pullback(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.inv;
        [
            self.det * (m[0][0] * v[0] + m[0][1] * v[1]),
            self.det * (m[1][0] * v[0] + m[1][1] * v[1]),
        ]
    }
}

/// Contravariant Piola transform of reference values and divergences:
/// `v = J v_ref / det J`, `div v = div_ref / det J`.
pub fn piola_map(map: &CellMap, ref_values: &[[f64; 2]], ref_divs: &[f64]) -> (Vec<[f64; 2]>, Vec<f64>) {
    (
        ref_values.iter().map(|&v| map.piola_value(v)).collect(),
        ref_divs.iter().map(|d| d / map.det).collect(),
    )
}

/// A basis function (or finite element function) evaluated at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasisEval {
    pub value: [f64; 2],
    /// `grad[i][j] = d v_i / d x_j`.
    pub grad: [[f64; 2]; 2],
    pub div: f64,
    /// `hess[i][j][k] = d² v_i / dx_j dx_k`.
    pub hess: [[[f64; 2]; 2]; 2],
}

impl BasisEval {
    pub fn strain(&self) -> [[f64; 2]; 2] {
        let g = &self.grad;
        let off = 0.5 * (g[0][1] + g[1][0]);
        [[g[0][0], off], [off, g[1][1]]]
    }

    fn scaled(mut self, s: f64) -> Self {
        self.value = [s * self.value[0], s * self.value[1]];
        for i in 0..2 {
            for j in 0..2 {
                self.grad[i][j] *= s;
                for k in 0..2 {
                    self.hess[i][j][k] *= s;
                }
            }
        }
        self.div *= s;
        self
    }

    fn add_scaled(&mut self, other: &BasisEval, s: f64) {
        for i in 0..2 {
            self.value[i] += s * other.value[i];
            for j in 0..2 {
                self.grad[i][j] += s * other.grad[i][j];
                for k in 0..2 {
                    self.hess[i][j][k] += s * other.hess[i][j][k];
                }
            }
        }
        self.div += s * other.div;
    }
}

fn map_eval(family: Family, map: &CellMap, poly: &VecPoly, xi: [f64; 2]) -> BasisEval {
    let vr = poly.value(xi);
    let gr = poly.grad(xi);
    let hr = poly.hess();
    let inv = &map.inv;
    match family {
        Family::P0 => BasisEval {
            value: [vr[0], 0.0],
            ..Default::default()
        },
        Family::P1cVec => {
            let mut grad = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    grad[i][j] = gr[i][0] * inv[0][j] + gr[i][1] * inv[1][j];
                }
            }
            BasisEval {
                value: vr,
                grad,
                div: grad[0][0] + grad[1][1],
                hess: [[[0.0; 2]; 2]; 2],
            }
        }
        _ => {
            let j = &map.jac;
            let d = map.det;
            let mut grad = [[0.0; 2]; 2];
            let mut hess = [[[0.0; 2]; 2]; 2];
            for i in 0..2 {
                for m in 0..2 {
                    let jm = j[i][m] / d;
                    for a in 0..2 {
                        for x in 0..2 {
                            grad[i][x] += jm * gr[m][a] * inv[a][x];
                            for b in 0..2 {
                                for y in 0..2 {
                                    hess[i][x][y] += jm * hr[m][a][b] * inv[a][x] * inv[b][y];
                                }
                            }
                        }
                    }
                }
            }
            BasisEval {
                value: map.piola_value(vr),
                grad,
                div: poly.div(xi) / d,
                hess,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Global spaces

/// A global finite element space on a mesh, with essential boundary dofs
/// optionally removed. Coefficient vectors handed around the crate are
/// indexed by *free* dofs unless stated otherwise.
#[derive(Clone, Debug)]
pub struct Space {
    family: Family,
    mesh: Arc<TriMesh>,
    maps: Vec<CellMap>,
    n_full: usize,
    cell_dofs: Vec<Vec<usize>>,
    cell_signs: Vec<Vec<f64>>,
    free_index: Vec<Option<usize>>,
    free_to_full: Vec<usize>,
}

impl Space {
    /// `essential`: remove normal moments on the boundary (H(div) families)
    /// or boundary vertex values (P1cVec). Ignored for P0.
    pub fn new(mesh: Arc<TriMesh>, family: Family, essential: bool) -> Result<Self> {
        let maps = (0..mesh.n_cells()).map(|k| CellMap::of(&mesh, k)).collect::<Result<Vec<_>>>()?;
        let nk = family.edge_moments();
        let ni = family.interior_moments();
        let mut cell_dofs = Vec::with_capacity(mesh.n_cells());
        let mut cell_signs = Vec::with_capacity(mesh.n_cells());
        let (n_full, constrained): (usize, Vec<bool>) = match family {
            Family::P0 => (mesh.n_cells(), vec![false; mesh.n_cells()]),
            Family::P1cVec => {
                let c = (0..2 * mesh.n_vertices())
                    .map(|d| essential && mesh.is_boundary_vertex(d / 2))
                    .collect();
                (2 * mesh.n_vertices(), c)
            }
            _ => {
                let n = nk * mesh.n_edges() + ni * mesh.n_cells();
                let mut c = vec![false; n];
                if essential {
                    for (e, edge) in mesh.edges.iter().enumerate() {
                        if edge.is_boundary() {
                            for k in 0..nk {
                                c[nk * e + k] = true;
                            }
                        }
                    }
                }
                (n, c)
            }
        };
        for k in 0..mesh.n_cells() {
            let (dofs, signs) = match family {
                Family::P0 => (vec![k], vec![1.0]),
                Family::P1cVec => {
                    let mut d = Vec::with_capacity(6);
                    for &v in &mesh.cells[k] {
                        d.push(2 * v);
                        d.push(2 * v + 1);
                    }
                    (d, vec![1.0; 6])
                }
                _ => {
                    let mut d = Vec::with_capacity(family.dofs_per_cell());
                    let mut s = Vec::with_capacity(family.dofs_per_cell());
                    for ce in &mesh.cell_edges[k] {
                        for m in 0..nk {
                            d.push(nk * ce.edge + m);
                            let dir = if m == 1 { ce.direction_sign as f64 } else { 1.0 };
                            s.push(ce.normal_sign as f64 * dir);
                        }
                    }
                    for m in 0..ni {
                        d.push(nk * mesh.n_edges() + ni * k + m);
                        s.push(1.0);
                    }
                    (d, s)
                }
            };
            cell_dofs.push(dofs);
            cell_signs.push(signs);
        }
        let mut free_index = vec![None; n_full];
        let mut free_to_full = Vec::new();
        for (d, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[d] = Some(free_to_full.len());
                free_to_full.push(d);
            }
        }
        Ok(Self {
            family,
            mesh,
            maps,
            n_full,
            cell_dofs,
            cell_signs,
            free_index,
            free_to_full,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }
    pub fn mesh_arc(&self) -> &Arc<TriMesh> {
        &self.mesh
    }
    pub fn n_full(&self) -> usize {
        self.n_full
    }
    pub fn n_free(&self) -> usize {
        self.free_to_full.len()
    }
    pub fn cell_map(&self, k: usize) -> &CellMap {
        &self.maps[k]
    }

    /// Free index of each local dof of cell `k` (`None` if constrained).
    pub fn cell_free_dofs(&self, k: usize) -> Vec<Option<usize>> {
        self.cell_dofs[k].iter().map(|&d| self.free_index[d]).collect()
    }

    pub fn cell_full_dofs(&self, k: usize) -> &[usize] {
        &self.cell_dofs[k]
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        self.free_index[full]
    }

    /// Full-length vector with zeros in constrained slots.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_full];
        for (i, &d) in self.free_to_full.iter().enumerate() {
            out[d] = free[i];
        }
        out
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_to_full.iter().map(|&d| full[d]).collect()
    }

    /// Global basis functions of cell `k` at reference point `xi`, in the
    /// order of [`Space::cell_full_dofs`].
    pub fn eval_cell(&self, k: usize, xi: [f64; 2]) -> Vec<BasisEval> {
        let basis = RefBasis::get(self.family);
        let map = &self.maps[k];
        basis
            .polys
            .iter()
            .zip(&self.cell_signs[k])
            .map(|(p, &s)| map_eval(self.family, map, p, xi).scaled(s))
            .collect()
    }

    /// Evaluates a full-length coefficient vector on cell `k`.
    pub fn eval_full(&self, full: &[f64], k: usize, xi: [f64; 2]) -> BasisEval {
        let mut out = BasisEval::default();
        for (b, &d) in self.eval_cell(k, xi).iter().zip(&self.cell_dofs[k]) {
            out.add_scaled(b, full[d]);
        }
        out
    }

    /// Cell means of the divergence of a free-dof coefficient vector.
    pub fn cell_divergence_means(&self, free: &[f64]) -> Result<Vec<f64>> {
        if free.len() != self.n_free() {
            return Err(BiotError::DimensionMismatch(format!(
                "coefficient vector has {} entries, space has {} free dofs",
                free.len(),
                self.n_free()
            )));
        }
        let full = self.expand(free);
        let rule = stiffness_rule();
        Ok((0..self.mesh.n_cells())
            .map(|k| {
                let area = self.mesh.area(k);
                rule.iter()
                    .map(|(xi, w)| w * self.maps[k].det.abs() * self.eval_full(&full, k, xi).div)
                    .sum::<f64>()
                    / area
            })
            .collect())
    }
}

/// Canonical interpolation into a vector space: edge normal moments against
/// the global normal and direction, interior moments of the Piola pull-back
/// (RT1), or vertex values (P1cVec). Returns a full-length vector.
pub fn interpolate_pi_div(u: impl Fn(Point) -> [f64; 2], space: &Space) -> Vec<f64> {
    let mesh = space.mesh();
    let family = space.family();
    let mut out = vec![0.0; space.n_full()];
    match family {
        Family::P1cVec => {
            for (v, p) in mesh.vertices.iter().enumerate() {
                let val = u(*p);
                out[2 * v] = val[0];
                out[2 * v + 1] = val[1];
            }
        }
        Family::P0 => panic!("interpolate_pi_div needs a vector family"),
        _ => {
            let nk = family.edge_moments();
            let rule = projection_edge_rule();
            for (e, edge) in mesh.edges.iter().enumerate() {
                let n = edge.normal;
                for k in 0..nk {
                    out[nk * e + k] = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(&s, &w)| {
                            let val = u(edge.point(mesh, s));
                            w * edge.length * (val[0] * n[0] + val[1] * n[1]) * edge_weight(k, s)
                        })
                        .sum();
                }
            }
            if family.interior_moments() > 0 {
                let rule = projection_rule();
                for k in 0..mesh.n_cells() {
                    let map = space.cell_map(k);
                    let mut m = [0.0; 2];
                    for (xi, w) in rule.iter() {
                        let vr = map.piola_pullback(u(map.to_physical(xi)));
                        m[0] += w * vr[0];
                        m[1] += w * vr[1];
                    }
                    let base = nk * mesh.n_edges() + 2 * k;
                    out[base] = m[0];
                    out[base + 1] = m[1];
                }
            }
        }
    }
    out
}

/// L2 projection onto piecewise constants (cell means).
pub fn project_qh(p: impl Fn(Point) -> f64, mesh: &TriMesh) -> Vec<f64> {
    let rule = projection_rule();
    (0..mesh.n_cells())
        .map(|k| {
            let map = CellMap::of(mesh, k).expect("valid mesh");
            rule.iter().map(|(xi, w)| 2.0 * w * p(map.to_physical(xi))).sum()
        })
        .collect()
}

/// Area-weighted mean of a cell field.
pub fn cell_mean(mesh: &TriMesh, q: &[f64]) -> f64 {
    let total: f64 = (0..mesh.n_cells()).map(|k| mesh.area(k)).sum();
    (0..mesh.n_cells()).map(|k| mesh.area(k) * q[k]).sum::<f64>() / total
}

/// Shifts a cell field to zero mean.
pub fn remove_mean(mesh: &TriMesh, q: &mut [f64]) {
    let m = cell_mean(mesh, q);
    q.iter_mut().for_each(|x| *x -= m);
}
