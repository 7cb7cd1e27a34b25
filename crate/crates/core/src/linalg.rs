//! Small dense linear-algebra helpers shared by the filter and the tests.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Returns `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry of `A - Aᵀ`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

/// Cholesky factorization of a symmetric matrix, `None` if it is not
/// numerically positive definite.
pub fn cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if a.nrows() != a.ncols() || a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(symmetrize(a))
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, symmetrized.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    cholesky(a).map(|c| symmetrize(&c.inverse()))
}

pub fn is_spd(a: &DMatrix<f64>) -> bool {
    cholesky(a).is_some()
}

/// Central-difference Jacobian of `f` at `x` with absolute step `h`.
///
/// `diff` maps `(f(x + h e_j), f(x - h e_j))` to their difference, so callers
/// with angular outputs can wrap it.
pub fn central_jacobian<F, D>(x: &DVector<f64>, h: f64, mut f: F, diff: D) -> DMatrix<f64>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
    D: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let xj = x[j];
        xp[j] = xj + h;
        let fp = f(&xp);
        xp[j] = xj - h;
        let fm = f(&xp);
        xp[j] = xj;
        let col = diff(&fp, &fm) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Plain vector difference, the default for [`central_jacobian`].
pub fn plain_diff(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    a - b
}

/// Relative error between two matrices: `max|A - B| / max(1, max|B|)`.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Block-diagonal stacking of square matrices.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for b in blocks {
        out.view_mut((k, k), (b.nrows(), b.ncols())).copy_from(b);
        k += b.nrows();
    }
    out
}

/// Vertical stacking of matrices with equal column counts.
pub fn vstack(blocks: &[DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, ncols);
    let mut k = 0;
    for b in blocks {
        out.view_mut((k, 0), (b.nrows(), ncols)).copy_from(b);
        k += b.nrows();
    }
    out
}

pub fn vstack_vec(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_inverse_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_inverse(&a).is_none());
        let b = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&b).unwrap();
        assert!(((&b * inv) - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn central_jacobian_of_quadratic() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let jac = central_jacobian(
            &x,
            1e-5,
            |v| DVector::from_vec(vec![v[0] * v[0], v[0] * v[1]]),
            plain_diff,
        );
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, -2.0, 1.0]);
        assert!((jac - expected).amax() < 1e-9);
    }

    #[test]
    fn block_diag_and_stack_shapes() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_element(1, 1, 3.0);
        let d = block_diag(&[a.clone(), b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(2, 2)], 3.0);
        assert_eq!(vstack(&[a.clone(), a], 2).shape(), (4, 2));
    }
}
