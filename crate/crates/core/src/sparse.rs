//! Symmetric sparse matrices in compressed-row form.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::video::{Dims, VoxelIndex};

/// Symmetric weight matrix without diagonal, rows sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from per-row `(column, weight)` lists. Rows are sorted here;
    /// symmetry, positivity and the absence of self loops are checked.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::DimensionMismatch(format!(
                        "duplicate entry ({i}, {})",
                        w[0].0
                    )));
                }
            }
            for (j, v) in row {
                if j >= n || j == i || !(v.is_finite() && v > 0.0) {
                    return Err(Error::DimensionMismatch(format!(
                        "invalid entry ({i}, {j}) = {v}"
                    )));
                }
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        let m = Self {
            n,
            row_ptr,
            cols,
            vals,
        };
        m.check_symmetric()?;
        Ok(m)
    }

    /// Builds from unordered pairs `(i, j, w)`; each pair is stored in both directions.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, w) in pairs {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!("pair ({i}, {j}) outside n={n}")));
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        Self::from_rows(rows)
    }

    fn check_symmetric(&self) -> Result<()> {
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if self.get(j, i).map(f64::to_bits) != Some(v.to_bits()) {
                    return Err(Error::DimensionMismatch(format!(
                        "entry ({i}, {j}) has no identical transpose"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b]
            .binary_search(&j)
            .ok()
            .map(|k| self.vals[a + k])
    }

    /// Weighted degree `d_i = sum_j w_ij`.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Sum of all stored weights (each undirected edge counted twice).
    pub fn total_weight(&self) -> f64 {
        self.vals.iter().sum()
    }

    /// `y = W x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// The principal submatrix on the contiguous node range `[start, end)`.
    pub fn restrict(&self, start: usize, end: usize) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in start..end {
            for (j, v) in self.row(i) {
                if j >= start && j < end {
                    cols.push(j - start);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n: end - start,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Text dump: header line `n <n> nnz <nnz>`, then `i j weight` per stored entry.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n {} nnz {}", self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(out, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(input: R) -> Result<Self> {
        let bad = |msg: String| Error::DimensionMismatch(format!("triplet file: {msg}"));
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let n: usize = match fields.as_slice() {
            ["n", n, ..] => n.parse().map_err(|_| bad(format!("bad header `{header}`")))?,
            _ => return Err(bad(format!("bad header `{header}`"))),
        };
        let mut rows = vec![Vec::new(); n];
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            let [i, j, v] = parts.as_slice() else {
                return Err(bad(format!("bad line `{line}`")));
            };
            let i: usize = i.parse().map_err(|_| bad(format!("bad line `{line}`")))?;
            let j: usize = j.parse().map_err(|_| bad(format!("bad line `{line}`")))?;
            let v: f64 = v.parse().map_err(|_| bad(format!("bad line `{line}`")))?;
            if i >= n {
                return Err(bad(format!("row {i} >= n")));
            }
            rows[i].push((j, v));
        }
        Self::from_rows(rows)
    }
}

/// Bijection between voxels of one scale and graph node ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeMap {
    dims: Dims,
}

impl NodeMap {
    pub fn new(dims: Dims) -> Self {
        Self { dims }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    #[inline]
    pub fn node(&self, v: VoxelIndex) -> usize {
        self.dims.index(v.t, v.y, v.x)
    }

    #[inline]
    pub fn voxel(&self, node: usize) -> VoxelIndex {
        self.dims.voxel(node)
    }

    /// Node range `[start, end)` covering frames `[first, end_frame)`.
    pub fn frame_range(&self, first: usize, end_frame: usize) -> (usize, usize) {
        let n = self.dims.frame_len();
        (first * n, end_frame * n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetry_and_self_loops() {
        assert!(SparseSymMatrix::from_rows(vec![vec![(1, 1.0)], vec![]]).is_err());
        assert!(SparseSymMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 2.0)]]).is_err());
        assert!(SparseSymMatrix::from_rows(vec![vec![(0, 1.0)]]).is_err());
        assert!(SparseSymMatrix::from_rows(vec![vec![(1, 0.0)], vec![(0, 0.0)]]).is_err());
    }

    #[test]
    fn triplet_round_trip_and_restrict() {
        let m = SparseSymMatrix::from_pairs(4, &[(0, 1, 0.5), (1, 2, 1.25), (2, 3, 3.0), (0, 3, 1e-3)])
            .unwrap();
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        let back = SparseSymMatrix::read_triplets(&buf[..]).unwrap();
        assert_eq!(back, m);
        let sub = m.restrict(1, 3);
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.get(0, 1), Some(1.25));
        for (d, e) in m.degrees().iter().zip([0.501, 1.75, 4.25, 3.001]) {
            assert!((d - e).abs() < 1e-15);
        }
    }
}
