use crate::error::{Error, Result};
use crate::sparse::{NodeMap, SparseSymMatrix};

/// Matrix-free `L_sym = I - D^{-1/2} (W + S) D^{-1/2}`.
///
/// `S` is an optional diagonal of self-loop weights; reduced graphs carry the
/// collapsed intra-group weight there so that group volumes are preserved.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian<'a> {
    weights: &'a SparseSymMatrix,
    self_loops: Option<&'a [f64]>,
    degrees: Vec<f64>,
    inv_sqrt_degrees: Vec<f64>,
}

impl<'a> NormalizedLaplacian<'a> {
    pub fn new(weights: &'a SparseSymMatrix) -> Result<Self> {
        Self::build(weights, None, None)
    }

    pub fn with_self_loops(weights: &'a SparseSymMatrix, self_loops: &'a [f64]) -> Result<Self> {
        Self::build(weights, Some(self_loops), None)
    }

    /// Like [`NormalizedLaplacian::new`], reporting isolated nodes with voxel coordinates.
    pub fn build(
        weights: &'a SparseSymMatrix,
        self_loops: Option<&'a [f64]>,
        nodes: Option<&NodeMap>,
    ) -> Result<Self> {
        if let Some(s) = self_loops {
            if s.len() != weights.n() {
                return Err(Error::DimensionMismatch(format!(
                    "{} self-loop weights for {} nodes",
                    s.len(),
                    weights.n()
                )));
            }
        }
        let mut degrees = weights.degrees();
        if let Some(s) = self_loops {
            for (d, &x) in degrees.iter_mut().zip(s) {
                *d += x;
            }
        }
        if let Some(node) = degrees.iter().position(|&d| !(d > 0.0)) {
            let v = nodes.map(|m| m.voxel(node));
            return Err(Error::IsolatedNode {
                node,
                t: v.map_or(0, |v| v.t),
                y: v.map_or(0, |v| v.y),
                x: v.map_or(0, |v| v.x),
            });
        }
        let inv_sqrt_degrees = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        Ok(Self {
            weights,
            self_loops,
            degrees,
            inv_sqrt_degrees,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn inv_sqrt_degrees(&self) -> &[f64] {
        &self.inv_sqrt_degrees
    }

    /// `y = D^{-1/2} (W + S) D^{-1/2} x`, the normalised adjacency.
    pub fn apply_adjacency(&self, x: &[f64], y: &mut [f64]) {
        let s = &self.inv_sqrt_degrees;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc: f64 = self.weights.row(i).map(|(j, w)| w * s[j] * x[j]).sum();
            if let Some(loops) = self.self_loops {
                acc += loops[i] * s[i] * x[i];
            }
            *yi = s[i] * acc;
        }
    }

    /// `y = L_sym x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_adjacency(x, y);
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
    }

    /// Dense copy of `L_sym`, for small problems and oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for i in 0..n {
                out[i][j] = col[i];
            }
            e[j] = 0.0;
        }
        out
    }
}

/// `NCut(A, B) = cut/vol(A) + cut/vol(B)` for the bipartition `in_a`.
///
/// Volumes include the optional self-loop weights. Returns `None` when one
/// side is empty.
pub fn ncut(weights: &SparseSymMatrix, self_loops: Option<&[f64]>, in_a: &[bool]) -> Option<f64> {
    let (mut cut, mut vol_a, mut vol_b) = (0.0, 0.0, 0.0);
    for i in 0..weights.n() {
        let mut d: f64 = 0.0;
        for (j, w) in weights.row(i) {
            d += w;
            if in_a[i] && !in_a[j] {
                cut += w;
            }
        }
        if let Some(s) = self_loops {
            d += s[i];
        }
        if in_a[i] {
            vol_a += d;
        } else {
            vol_b += d;
        }
    }
    if vol_a == 0.0 || vol_b == 0.0 || !in_a.iter().any(|&a| a) || in_a.iter().all(|&a| a) {
        return None;
    }
    Some(cut / vol_a + cut / vol_b)
}
