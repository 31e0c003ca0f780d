//! Dense linear-algebra helpers on top of `nalgebra`.
//!
//! The one non-trivial routine is [`top_eigen_sym`], the truncated
//! eigendecomposition behind the spectral embedding. Small or nearly full-rank
//! requests go straight to the dense symmetric solver; large graphs use block
//! subspace iteration with Rayleigh-Ritz extraction, falling back to the dense
//! solver if the iteration stalls.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::rng::rng_from_seed;

const OVERSAMPLE: usize = 10;
const DENSE_CUTOFF: usize = 256;
const MAX_SUBSPACE_ITERS: usize = 400;
const RESIDUAL_TOL: f64 = 1e-12;
const START_SEED: u64 = 0x5EED_A5E0;

/// Eigenpairs of a symmetric matrix, ordered by decreasing |eigenvalue|.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Columns are unit eigenvectors matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Full eigendecomposition, sorted by decreasing magnitude.
pub fn sym_eigen_by_magnitude(a: &DMatrix<f64>) -> EigenPairs {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .abs()
            .total_cmp(&eig.eigenvalues[i].abs())
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    EigenPairs { values, vectors }
}

/// The `k` eigenpairs of largest magnitude of the symmetric matrix `a`.
pub fn top_eigen_sym(a: &DMatrix<f64>, k: usize) -> EigenPairs {
    let n = a.nrows();
    assert!(k >= 1 && k <= n, "top_eigen_sym: need 1 <= k <= n");
    if n <= DENSE_CUTOFF || 3 * (k + OVERSAMPLE) >= n {
        return truncate(sym_eigen_by_magnitude(a), k);
    }
    match subspace_iteration(a, k) {
        Some(p) => p,
        None => truncate(sym_eigen_by_magnitude(a), k),
    }
}

fn truncate(p: EigenPairs, k: usize) -> EigenPairs {
    EigenPairs {
        values: p.values[..k].to_vec(),
        vectors: p.vectors.columns(0, k).into_owned(),
    }
}

fn orthonormalize(z: DMatrix<f64>) -> DMatrix<f64> {
    z.qr().q()
}

fn subspace_iteration(a: &DMatrix<f64>, k: usize) -> Option<EigenPairs> {
    let n = a.nrows();
    let b = (k + OVERSAMPLE).min(n);
    let mut rng = rng_from_seed(START_SEED);
    let start = DMatrix::from_fn(n, b, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(start);
    let scale = a.norm().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SUBSPACE_ITERS {
        let z = a * &q;
        let t = q.transpose() * &z;
        let t = (&t + t.transpose()) * 0.5;
        let ritz = sym_eigen_by_magnitude(&t);
        let mut converged = true;
        for c in 0..k {
            let y = ritz.vectors.column(c);
            let r: DVector<f64> = &z * y - (&q * y) * ritz.values[c];
            if r.norm() > RESIDUAL_TOL * scale {
                converged = false;
                break;
            }
        }
        if converged {
            let vectors = &q * ritz.vectors.columns(0, k);
            return Some(EigenPairs { values: ritz.values[..k].to_vec(), vectors });
        }
        q = orthonormalize(z);
    }
    None
}

/// Ratio of largest to smallest eigenvalue magnitude of a symmetric matrix.
/// Returns infinity when the smallest magnitude is zero.
pub fn condition_number_sym(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Orthogonal `R` minimising `‖from·R − to‖_F` (both n×d).
pub fn procrustes(from: &DMatrix<f64>, to: &DMatrix<f64>) -> DMatrix<f64> {
    let m = from.transpose() * to;
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Inverse of a symmetric positive definite matrix, or `None` if Cholesky fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
