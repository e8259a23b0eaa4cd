//! Restarted block Krylov eigensolver for the smallest eigenpairs of `L_sym`.
//!
//! The solver works on the normalised adjacency `N = I - L_sym`, whose largest
//! eigenvalues correspond to the smallest of `L_sym`. Each cycle grows a block
//! Krylov basis `[X, N X, N^2 X, ...]` from the current Ritz block `X`, fully
//! reorthogonalised, and performs a Rayleigh-Ritz projection. The block is
//! wider than `k`, so eigenvalues of multiplicity up to the block width are
//! resolved.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::laplacian::NormalizedLaplacian;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenParams {
    pub k: usize,
    /// Required residual `||L v - lambda v||` of every returned pair.
    pub tol: f64,
    /// Budget of single-vector operator applications.
    pub max_applications: usize,
    pub seed: u64,
}

impl Default for EigenParams {
    fn default() -> Self {
        Self {
            k: 20,
            tol: 1e-6,
            max_applications: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unit-norm, mutually orthogonal.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub applications: usize,
    pub cycles: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthonormalises `v` against `basis` and returns it, or `None` if it vanishes.
fn orthonormalize_against(basis: &[Vec<f64>], mut v: Vec<f64>) -> Option<Vec<f64>> {
    let start = norm(&v);
    if start == 0.0 {
        return None;
    }
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.par_iter().map(|q| dot(q, &v)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            axpy(-c, q, &mut v);
        }
    }
    let nv = norm(&v);
    if nv <= 1e-10 * start {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= nv);
    Some(v)
}

struct Operator<'a, 'b> {
    lap: &'a NormalizedLaplacian<'b>,
    applications: usize,
}

impl Operator<'_, '_> {
    fn apply_block(&mut self, block: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.applications += block.len();
        let n = self.lap.n();
        block
            .par_iter()
            .map(|x| {
                let mut y = vec![0.0; n];
                self.lap.apply_adjacency(x, &mut y);
                y
            })
            .collect()
    }
}

/// Smallest `k` eigenpairs of `L_sym`.
pub fn solve_smallest_k(lap: &NormalizedLaplacian, params: &EigenParams) -> Result<EigenPairs> {
    block_krylov(lap, params, Vec::new(), None)
}

/// Improves approximate eigenvectors `start` of `L_sym` with at most `cycles`
/// restart cycles, filling the block with random vectors.
///
/// Stops early once every residual is below `params.tol`; unlike
/// [`solve_smallest_k`] an unconverged result is returned, not an error.
pub fn refine_smallest_k(
    lap: &NormalizedLaplacian,
    params: &EigenParams,
    start: Vec<Vec<f64>>,
    cycles: usize,
) -> Result<EigenPairs> {
    block_krylov(lap, params, start, Some(cycles.max(1)))
}

fn block_krylov(
    lap: &NormalizedLaplacian,
    params: &EigenParams,
    start: Vec<Vec<f64>>,
    cycle_limit: Option<usize>,
) -> Result<EigenPairs> {
    let n = lap.n();
    let k = params.k;
    if k == 0 || n < k {
        return Err(Error::TooFewNodes { n, k });
    }
    let block = n.min(k + (k / 2).max(4));
    let max_basis = n.min((4 * block).max(80));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    };
    let mut op = Operator {
        lap,
        applications: 0,
    };

    // current Ritz block and its image under N
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(block);
    for v in start.into_iter().take(block) {
        if v.len() == n {
            if let Some(v) = orthonormalize_against(&x, v) {
                x.push(v);
            }
        }
    }
    while x.len() < block {
        if let Some(v) = orthonormalize_against(&x, random_vec(&mut rng)) {
            x.push(v);
        }
    }
    let mut ax: Option<Vec<Vec<f64>>> = None;
    let mut cycles = 0;
    loop {
        cycles += 1;
        let mut q: Vec<Vec<f64>> = x.clone();
        let mut aq: Vec<Vec<f64>> = match ax.take() {
            Some(images) => images,
            None => op.apply_block(&x),
        };
        let mut last_start = 0;
        while q.len() < max_basis {
            let mut added = 0;
            let seeds: Vec<Vec<f64>> = aq[last_start..].to_vec();
            let new_start = q.len();
            for s in seeds {
                if q.len() >= max_basis {
                    break;
                }
                if let Some(v) = orthonormalize_against(&q, s) {
                    q.push(v);
                    added += 1;
                }
            }
            // invariant subspace reached: continue with random directions
            while added == 0 && q.len() < max_basis {
                if let Some(v) = orthonormalize_against(&q, random_vec(&mut rng)) {
                    q.push(v);
                    added += 1;
                }
            }
            let images = op.apply_block(&q[new_start..]);
            aq.extend(images);
            last_start = new_start;
        }

        let m = q.len();
        let cols: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| (0..m).map(|i| dot(&q[i], &aq[j])).collect())
            .collect();
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let keep = block.min(m);
        let combine = |basis: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (i, bv) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(i, col)], bv, &mut out);
            }
            out
        };
        let ritz: Vec<(Vec<f64>, Vec<f64>, f64)> = order[..keep]
            .par_iter()
            .map(|&c| (combine(&q, c), combine(&aq, c), eig.eigenvalues[c]))
            .collect();
        let residuals: Vec<f64> = ritz[..k]
            .iter()
            .map(|(v, av, theta)| {
                av.iter()
                    .zip(v)
                    .map(|(a, b)| (a - theta * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        log::trace!("eigensolver cycle {cycles}: basis {m}, worst residual {worst:.3e}");
        if worst <= params.tol || m == n || cycle_limit.is_some_and(|c| cycles >= c) {
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            for (v, _, theta) in ritz.into_iter().take(k) {
                let nv = norm(&v);
                vectors.push(v.into_iter().map(|e| e / nv).collect());
                values.push(1.0 - theta);
            }
            return Ok(EigenPairs {
                values,
                vectors,
                residuals,
                applications: op.applications,
                cycles,
            });
        }
        if op.applications >= params.max_applications {
            return Err(Error::NoConvergence {
                operator_applications: op.applications,
                worst_residual: worst,
                tol: params.tol,
                residuals,
            });
        }
        // restart from the Ritz block, re-orthonormalised with images kept in step
        let mut next_x: Vec<Vec<f64>> = Vec::with_capacity(keep);
        let mut next_ax: Vec<Vec<f64>> = Vec::with_capacity(keep);
        for (mut v, mut av, _) in ritz {
            for _ in 0..2 {
                for (qv, qa) in next_x.iter().zip(&next_ax) {
                    let c = dot(qv, &v);
                    axpy(-c, qv, &mut v);
                    axpy(-c, qa, &mut av);
                }
            }
            let nv = norm(&v);
            if nv < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|e| *e /= nv);
            av.iter_mut().for_each(|e| *e /= nv);
            next_x.push(v);
            next_ax.push(av);
        }
        x = next_x;
        ax = Some(next_ax);
    }
}

/// Dense reference: all eigenpairs of a symmetric matrix, ascending.
pub fn dense_eigenpairs(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (matrix[i][j] + matrix[j][i]));
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = order
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect();
    (values, vectors)
}
