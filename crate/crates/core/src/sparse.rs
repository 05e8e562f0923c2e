//! Deterministic sparse assembly and small dense/sparse helpers.

use std::io::Write;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

/// Collects `(row, col, value)` contributions and compresses them.
///
/// Duplicates are summed in insertion order after a stable sort by
/// `(row, col)`, so entries pushed as transposed pairs in the same loop
/// produce bitwise symmetric results.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Adds a whole block with row/column offsets.
    pub fn push_block(&mut self, m: &CsrMatrix<f64>, row_off: usize, col_off: usize, transpose: bool) {
        for (i, j, &v) in m.triplet_iter() {
            if transpose {
                self.push(j + row_off, i + col_off, v);
            } else {
                self.push(i + row_off, j + col_off, v);
            }
        }
    }

    pub fn build(mut self) -> CsrMatrix<f64> {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut rows = Vec::with_capacity(self.entries.len());
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let coo = CooMatrix::try_from_triplets(self.nrows, self.ncols, rows, cols, vals)
            .expect("indices within bounds");
        CsrMatrix::from(&coo)
    }
}

pub fn matvec(a: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for (i, row) in a.row_iter().enumerate() {
        y[i] = row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum();
    }
    y
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, &v) in a.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

pub fn to_csc(a: &CsrMatrix<f64>) -> CscMatrix<f64> {
    CscMatrix::from(a)
}

/// Zero matrix of the given shape.
pub fn zeros(nrows: usize, ncols: usize) -> CsrMatrix<f64> {
    CsrMatrix::zeros(nrows, ncols)
}

/// Diagonal matrix.
pub fn diagonal(d: &[f64]) -> CsrMatrix<f64> {
    let mut b = TripletBuilder::new(d.len(), d.len());
    for (i, &v) in d.iter().enumerate() {
        b.push(i, i, v);
    }
    b.build()
}

/// `alpha A + beta B`, entries combined deterministically.
pub fn linear_combination(alpha: f64, a: &CsrMatrix<f64>, beta: f64, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut t = TripletBuilder::new(a.nrows(), a.ncols());
    for (i, j, &v) in a.triplet_iter() {
        t.push(i, j, alpha * v);
    }
    for (i, j, &v) in b.triplet_iter() {
        t.push(i, j, beta * v);
    }
    t.build()
}

/// `max |A_ij - A_ji|`.
pub fn max_asymmetry(a: &CsrMatrix<f64>) -> f64 {
    let t = a.transpose();
    let mut worst: f64 = 0.0;
    for (row_a, row_t) in a.row_iter().zip(t.row_iter()) {
        let mut lookup = std::collections::BTreeMap::new();
        for (&j, &v) in row_t.col_indices().iter().zip(row_t.values()) {
            lookup.insert(j, v);
        }
        for (&j, &v) in row_a.col_indices().iter().zip(row_a.values()) {
            let w = lookup.remove(&j).unwrap_or(0.0);
            worst = worst.max((v - w).abs());
        }
        for (_, w) in lookup {
            worst = worst.max(w.abs());
        }
    }
    worst
}

/// Writes a matrix in Matrix Market coordinate format (1-based indices).
pub fn write_matrix_market<W: Write>(a: &CsrMatrix<f64>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplet_iter() {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(1, 0, 2.0);
        b.push(0, 1, 0.5);
        let m = b.build();
        assert_eq!(m.nnz(), 2);
        let d = to_dense(&m);
        assert_eq!(d[(0, 1)], 1.5);
        assert_eq!(d[(1, 0)], 2.0);
        assert_eq!(max_asymmetry(&m), 0.5);
    }

    #[test]
    fn transposed_pairs_are_exactly_symmetric() {
        let mut b = TripletBuilder::new(3, 3);
        let vals = [0.1, 1.0 / 3.0, 1e-17, 7.25, -2.0 / 7.0];
        for (k, &v) in vals.iter().enumerate() {
            b.push(k % 3, (k + 1) % 3, v);
            b.push((k + 1) % 3, k % 3, v);
        }
        assert_eq!(max_asymmetry(&b.build()), 0.0);
    }

    #[test]
    fn matrix_market_output() {
        let m = diagonal(&[2.0, 0.5]);
        let mut out = Vec::new();
        write_matrix_market(&m, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "2 2 2");
        assert_eq!(lines[2], "1 1 2.0000000000000000e0");
        assert_eq!(matvec(&m, &[1.0, 4.0]), vec![2.0, 2.0]);
    }
}
