//! Small dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Largest singular value, by power iteration on `MᵀM` from a fixed start.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    // Start from the largest column of the Gram matrix: never orthogonal to
    // the dominant eigenvector unless the matrix is zero.
    let mut best = 0;
    for j in 1..n {
        if gram.column(j).norm() > gram.column(best).norm() {
            best = j;
        }
    }
    let start = gram.column(best).into_owned();
    let norm0 = start.norm();
    if norm0 == 0.0 {
        return 0.0;
    }
    let mut v = start / norm0;
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let next = &gram * &v;
        let next_lambda = v.dot(&next);
        let nn = next.norm();
        if nn == 0.0 {
            return 0.0;
        }
        v = next / nn;
        if (next_lambda - lambda).abs() <= 1e-12 * next_lambda.abs() {
            lambda = next_lambda;
            break;
        }
        lambda = next_lambda;
    }
    // Power iteration converges slowly for clustered singular values; the
    // symmetric eigensolver gives the answer directly for the sizes used here.
    let eig = gram.symmetric_eigenvalues();
    let top = eig.iter().cloned().fold(0.0, f64::max);
    lambda.max(top).max(0.0).sqrt()
}

/// Random orthogonal matrix: QR of a Gaussian matrix with `diag(R) > 0`.
pub fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `‖MᵀM − I‖_max`.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Unit-norm copy of `v`.
pub fn normalized(v: &DVector<f64>) -> DVector<f64> {
    v / v.norm()
}
