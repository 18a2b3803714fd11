//! Small dense symmetric linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here works on symmetric positive-semidefinite blocks: the
//! conditioning covariances of the Gaussian model and Gram matrices of
//! regression designs. Singular blocks are handled with a spectral
//! pseudoinverse instead of failing.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff used by every pseudoinverse in the crate.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Averages `m` with its transpose.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry, 0 for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Eigendecomposition of a symmetric matrix. Empty matrices are supported.
pub fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(m.clone())
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_radius(eigenvalues: &DVector<f64>) -> f64 {
    eigenvalues.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Computes `cᵀ G⁺ c` for symmetric PSD `G`, dropping eigen-directions
/// below `rel_cutoff` times the largest eigenvalue.
pub fn pinv_quadratic_form(g: &DMatrix<f64>, c: &DVector<f64>, rel_cutoff: f64) -> f64 {
    if g.nrows() == 0 {
        return 0.0;
    }
    let eig = eigen(g);
    let cutoff = rel_cutoff * spectral_radius(&eig.eigenvalues);
    let mut acc = 0.0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            let proj = eig.eigenvectors.column(k).dot(c);
            acc += proj * proj / lambda;
        }
    }
    acc
}

/// Solves `G x = b` for symmetric PSD `G`. Uses Cholesky when the system is
/// well conditioned and falls back to the minimum-norm pseudoinverse solution.
pub fn solve_psd(g: &DMatrix<f64>, b: &DVector<f64>, rel_cutoff: f64) -> DVector<f64> {
    let n = g.nrows();
    if n == 0 {
        return DVector::zeros(0);
    }
    let eig = eigen(g);
    let top = spectral_radius(&eig.eigenvalues);
    let bottom = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x));
    if top > 0.0 && bottom > rel_cutoff * top {
        if let Some(chol) = g.clone().cholesky() {
            return chol.solve(b);
        }
    }
    pinv_solve_from_eigen(&eig, b, rel_cutoff * top)
}

fn pinv_solve_from_eigen(
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    b: &DVector<f64>,
    cutoff: f64,
) -> DVector<f64> {
    let mut x = DVector::zeros(b.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            let q = eig.eigenvectors.column(k);
            let coef = q.dot(b) / lambda;
            x.axpy(coef, &q, 1.0);
        }
    }
    x
}

/// Returns `L` with `L Lᵀ = C` for PSD `C`, built from the eigendecomposition
/// so singular covariances are accepted. Eigenvalues in `[-slack, 0)` are
/// treated as zero; anything more negative yields `None`.
pub fn psd_factor(c: &DMatrix<f64>, rel_slack: f64) -> Option<DMatrix<f64>> {
    let eig = eigen(&symmetrize(c));
    let slack = rel_slack * spectral_radius(&eig.eigenvalues);
    let n = c.nrows();
    let mut factor = eig.eigenvectors.clone();
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        if lambda < -slack {
            return None;
        }
        let root = lambda.max(0.0).sqrt();
        factor.column_mut(k).scale_mut(root);
    }
    Some(factor)
}

/// Principal submatrix with the given row/column indices.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Row `row` of `m` restricted to columns `idx`.
pub fn subrow(m: &DMatrix<f64>, row: usize, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&j| m[(row, j)]))
}
