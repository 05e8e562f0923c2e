//! Structured triangulations of the unit square with edge connectivity.
//!
//! Every edge stores a single unit normal `n` which is the outward normal of
//! its first cell `K1` (the lower cell index). Jumps and averages follow
//! from that choice: `[q] = q|K1 - q|K2`, `{tau} = 1/2 (tau|K1 + tau|K2) n`,
//! and on boundary edges `[q] = q`, `{tau} = tau n`.

use std::collections::HashMap;
use std::io::Write;

pub type Point = [f64; 2];

#[derive(Clone, Debug)]
pub struct Edge {
    /// Vertex indices, lower index first. This is also the global
    /// orientation used for higher-order edge moments.
    pub endpoints: [usize; 2],
    /// `K1` and, for interior edges, `K2`.
    pub cells: (usize, Option<usize>),
    /// Unit normal pointing out of `K1`.
    pub normal: Point,
    /// Normal rotated by +90 degrees.
    pub tangent: Point,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }

    /// Point on the edge at parameter `s` in `[0, 1]`, measured from the
    /// lower-index endpoint.
    pub fn point(&self, mesh: &TriMesh, s: f64) -> Point {
        let a = mesh.vertices[self.endpoints[0]];
        let b = mesh.vertices[self.endpoints[1]];
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }
}

/// Reference to one of the three edges of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellEdge {
    pub edge: usize,
    /// `+1` if the cell is `K1` of the edge (its outward normal equals the
    /// stored normal), `-1` otherwise.
    pub normal_sign: i8,
    /// `+1` if the cell-local direction (lower local vertex to higher) agrees
    /// with the global edge direction.
    pub direction_sign: i8,
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub cells: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Local edge `i` is opposite local vertex `i`, i.e. local vertex pairs
    /// `(1,2)`, `(0,2)`, `(0,1)`.
    pub cell_edges: Vec<[CellEdge; 3]>,
    pub h_max: f64,
    boundary_vertex: Vec<bool>,
}

/// Local vertex pairs of the three local edges.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];

/// Evaluation frame for jumps and averages on one edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeFrame {
    pub edge: usize,
    pub k1: usize,
    pub k2: Option<usize>,
    pub normal: Point,
    pub tangent: Point,
}

impl EdgeFrame {
    /// `[q] = q1 - q2`, or `q1` on the boundary.
    pub fn jump(&self, q1: f64, q2: f64) -> f64 {
        match self.k2 {
            Some(_) => q1 - q2,
            None => q1,
        }
    }

    /// Normal average `{v}` of a vector field.
    pub fn normal_average(&self, v1: Point, v2: Point) -> f64 {
        let n = self.normal;
        match self.k2 {
            // 1/2 (v1.n1 - v2.n2) with n2 = -n
            Some(_) => 0.5 * ((v1[0] + v2[0]) * n[0] + (v1[1] + v2[1]) * n[1]),
            None => v1[0] * n[0] + v1[1] * n[1],
        }
    }

    /// `{tau} = 1/2 (tau1 n1 - tau2 n2)` with `n1 = n`, `n2 = -n`.
    pub fn tensor_average(&self, t1: [[f64; 2]; 2], t2: [[f64; 2]; 2]) -> Point {
        let n = self.normal;
        let tn = |t: [[f64; 2]; 2]| [t[0][0] * n[0] + t[0][1] * n[1], t[1][0] * n[0] + t[1][1] * n[1]];
        match self.k2 {
            Some(_) => {
                let a = tn(t1);
                let b = tn(t2);
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            }
            None => tn(t1),
        }
    }

    /// Tangential part `v - (v.n) n`.
    pub fn tangential(&self, v: Point) -> Point {
        let n = self.normal;
        let vn = v[0] * n[0] + v[1] * n[1];
        [v[0] - vn * n[0], v[1] - vn * n[1]]
    }
}

impl TriMesh {
    /// Uniform `n x n` grid of squares on the unit square, each split along
    /// the lower-left to upper-right diagonal.
    pub fn structured(n: usize) -> Self {
        assert!(n >= 1, "structured mesh needs n >= 1");
        let np = n + 1;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let a = j * np + i;
                let b = a + 1;
                let c = a + np + 1;
                let d = a + np;
                cells.push([a, b, c]);
                cells.push([a, c, d]);
            }
        }
        Self::from_cells(vertices, cells)
    }

    /// Builds edge connectivity for counterclockwise cells.
    pub fn from_cells(vertices: Vec<Point>, cells: Vec<[usize; 3]>) -> Self {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            let mut local = [CellEdge {
                edge: 0,
                normal_sign: 1,
                direction_sign: 1,
            }; 3];
            for (i, [la, lb]) in LOCAL_EDGES.iter().enumerate() {
                let (ga, gb) = (cell[*la], cell[*lb]);
                let key = (ga.min(gb), ga.max(gb));
                let direction_sign = if ga < gb { 1 } else { -1 };
                let (edge, normal_sign) = match lookup.get(&key) {
                    Some(&e) => {
                        edges[e].cells.1 = Some(k);
                        (e, -1)
                    }
                    None => {
                        let e = edges.len();
                        let opposite = vertices[cell[i]];
                        let (p, q) = (vertices[key.0], vertices[key.1]);
                        let length = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
                        let mut normal = [(q[1] - p[1]) / length, -(q[0] - p[0]) / length];
                        // orient away from the opposite vertex of K1
                        let to_opp = [opposite[0] - p[0], opposite[1] - p[1]];
                        if normal[0] * to_opp[0] + normal[1] * to_opp[1] > 0.0 {
                            normal = [-normal[0], -normal[1]];
                        }
                        edges.push(Edge {
                            endpoints: [key.0, key.1],
                            cells: (k, None),
                            normal,
                            tangent: [-normal[1], normal[0]],
                            length,
                        });
                        lookup.insert(key, e);
                        (e, 1)
                    }
                };
                local[i] = CellEdge {
                    edge,
                    normal_sign,
                    direction_sign,
                };
            }
            cell_edges.push(local);
        }
        let mut boundary_vertex = vec![false; vertices.len()];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            boundary_vertex[e.endpoints[0]] = true;
            boundary_vertex[e.endpoints[1]] = true;
        }
        let mut mesh = Self {
            vertices,
            cells,
            edges,
            cell_edges,
            h_max: 0.0,
            boundary_vertex,
        };
        mesh.h_max = (0..mesh.n_cells()).map(|k| mesh.cell_diameter(k)).fold(0.0, f64::max);
        mesh
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn cell_vertices(&self, k: usize) -> [Point; 3] {
        let c = self.cells[k];
        [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]]
    }

    /// Signed area (positive for counterclockwise cells).
    pub fn signed_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(k);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn area(&self, k: usize) -> f64 {
        self.signed_area(k).abs()
    }

    pub fn centroid(&self, k: usize) -> Point {
        let [a, b, c] = self.cell_vertices(k);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Circumdiameter `h_K`.
    pub fn cell_diameter(&self, k: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(k);
        let d = |p: Point, q: Point| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let (la, lb, lc) = (d(b, c), d(a, c), d(a, b));
        // R = abc / (4 area)
        la * lb * lc / (2.0 * self.area(k))
    }

    /// Per-edge `(K1, K2, n, t)` frames.
    pub fn jump_average_frames(&self) -> Vec<EdgeFrame> {
        self.edges
            .iter()
            .enumerate()
            .map(|(e, edge)| EdgeFrame {
                edge: e,
                k1: edge.cells.0,
                k2: edge.cells.1,
                normal: edge.normal,
                tangent: edge.tangent,
            })
            .collect()
    }

    /// Outward unit normal of cell `k` on its local edge `i`.
    pub fn outward_normal(&self, k: usize, i: usize) -> Point {
        let ce = self.cell_edges[k][i];
        let n = self.edges[ce.edge].normal;
        let s = ce.normal_sign as f64;
        [s * n[0], s * n[1]]
    }

    /// Plain-text dump: a `vertices` block (`index x y`), a `cells` block
    /// (`index v0 v1 v2`) and an `edges` block
    /// (`index v0 v1 k1 k2 nx ny length`, `k2 = -1` on the boundary).
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vertices {}", self.n_vertices())?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {:.16e} {:.16e}", p[0], p[1])?;
        }
        writeln!(w, "cells {}", self.n_cells())?;
        for (k, c) in self.cells.iter().enumerate() {
            writeln!(w, "{k} {} {} {}", c[0], c[1], c[2])?;
        }
        writeln!(w, "edges {}", self.n_edges())?;
        for (e, edge) in self.edges.iter().enumerate() {
            let k2 = edge.cells.1.map(|k| k as i64).unwrap_or(-1);
            writeln!(
                w,
                "{e} {} {} {} {k2} {:.16e} {:.16e} {:.16e}",
                edge.endpoints[0], edge.endpoints[1], edge.cells.0, edge.normal[0], edge.normal[1], edge.length
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_square() {
        let m = TriMesh::structured(1);
        assert_eq!((m.n_vertices(), m.n_cells(), m.n_edges()), (4, 2, 5));
        assert_eq!(m.edges.iter().filter(|e| e.is_boundary()).count(), 4);
    }

    #[test]
    fn counts_n2() {
        let m = TriMesh::structured(2);
        assert_eq!((m.n_vertices(), m.n_cells(), m.n_edges()), (9, 8, 16));
        let boundary = m.edges.iter().filter(|e| e.is_boundary()).count();
        assert_eq!((boundary, m.n_edges() - boundary), (8, 8));
    }

    #[test]
    fn h_max_is_square_diagonal() {
        let m = TriMesh::structured(4);
        assert!((m.h_max - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn structural_invariants() {
        for n in [1, 2, 3, 5, 8] {
            let m = TriMesh::structured(n);
            assert_eq!(m.n_vertices() as i64 - m.n_edges() as i64 + m.n_cells() as i64, 1);
            assert_eq!(m.n_cells(), 2 * n * n);
            for k in 0..m.n_cells() {
                assert!(m.signed_area(k) > 0.0);
            }
            let mut incidence = vec![0; m.n_edges()];
            for ce in m.cell_edges.iter().flatten() {
                incidence[ce.edge] += 1;
            }
            for (e, edge) in m.edges.iter().enumerate() {
                assert_eq!(incidence[e], if edge.is_boundary() { 1 } else { 2 });
                let (n, t) = (edge.normal, edge.tangent);
                assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-14);
                assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-14);
                assert!((n[0] * t[0] + n[1] * t[1]).abs() < 1e-14);
                // normal points away from K1's centroid
                let c = m.centroid(edge.cells.0);
                let p = edge.point(&m, 0.5);
                assert!((p[0] - c[0]) * n[0] + (p[1] - c[1]) * n[1] > 0.0);
            }
        }
    }

    #[test]
    fn boundary_normals_point_outward() {
        let m = TriMesh::structured(3);
        for edge in m.edges.iter().filter(|e| e.is_boundary()) {
            let p = edge.point(&m, 0.5);
            let n = edge.normal;
            let expected = if p[0] < 1e-12 {
                [-1.0, 0.0]
            } else if p[0] > 1.0 - 1e-12 {
                [1.0, 0.0]
            } else if p[1] < 1e-12 {
                [0.0, -1.0]
            } else {
                [0.0, 1.0]
            };
            assert!((n[0] - expected[0]).abs() < 1e-14 && (n[1] - expected[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn piecewise_constant_jump() {
        let m = TriMesh::structured(2);
        let frame = m.jump_average_frames().into_iter().find(|f| f.k2.is_some()).unwrap();
        assert_eq!(frame.jump(1.0, 3.0), -2.0);
    }

    #[test]
    fn continuous_linear_has_zero_jump() {
        let m = TriMesh::structured(3);
        let q = |p: Point| 2.0 * p[0] - 0.5 * p[1] + 0.25;
        for f in m.jump_average_frames().iter().filter(|f| f.k2.is_some()) {
            for s in [0.0, 0.3, 1.0] {
                let p = m.edges[f.edge].point(&m, s);
                assert_eq!(f.jump(q(p), q(p)), 0.0);
            }
        }
    }

    #[test]
    fn local_edge_signs_consistent() {
        let m = TriMesh::structured(3);
        for (k, ces) in m.cell_edges.iter().enumerate() {
            for (i, ce) in ces.iter().enumerate() {
                let edge = &m.edges[ce.edge];
                assert_eq!(ce.normal_sign == 1, edge.cells.0 == k);
                let [la, lb] = LOCAL_EDGES[i];
                let (ga, gb) = (m.cells[k][la], m.cells[k][lb]);
                assert_eq!(ce.direction_sign == 1, ga == edge.endpoints[0] && gb == edge.endpoints[1]);
            }
        }
    }

    #[test]
    fn dump_lists_all_entities() {
        let m = TriMesh::structured(2);
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("vertices 9\n"));
        assert!(text.contains("cells 8\n"));
        assert!(text.contains("edges 16\n"));
        assert_eq!(text.lines().count(), 3 + 9 + 8 + 16);
    }
}
