//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest absolute asymmetry `|m_ij - m_ji|` relative to the largest entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut scale = 0.0_f64;
    let mut diff = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(m[(i, j)].abs());
            if i < j {
                diff = diff.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Fail unless `m` is square and symmetric within `tol` (relative).
pub fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let asym = relative_asymmetry(m);
    if asym > tol || !asym.is_finite() {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigen();
    eig.eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(*v))
        .max(0.0)
        .sqrt()
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Numerical(
            "matrix is not positive definite".to_string(),
        ));
    }
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| 1.0 / v.sqrt()),
    );
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Relative Frobenius error `sqrt(p⁻¹ ‖Σ^{-1/2} (est − Σ) Σ^{-1/2}‖²_F)` against the
/// reference matrix `truth = Σ`.
pub fn relative_frobenius(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    let p = truth.nrows() as f64;
    let w = inv_sqrt_spd(truth)?;
    let scaled = &w * (est - truth) * &w;
    Ok((scaled.norm_squared() / p).sqrt())
}

/// `wᵀ M w`.
pub fn quad_form(w: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (w.transpose() * m * w)[(0, 0)]
}

/// Principal sub-matrix on the given index set.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Columns of `m` on the given index set.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn norms_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -4.0]));
        assert_relative_eq!(frobenius_norm(&m), 5.0, epsilon = 1e-12);
        assert_relative_eq!(spectral_norm(&m), 4.0, epsilon = 1e-12);
        assert_relative_eq!(max_norm(&m), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn relative_frobenius_of_scaled_identity() {
        let truth = DMatrix::<f64>::identity(4, 4) * 2.0;
        let est = DMatrix::<f64>::identity(4, 4) * 3.0;
        // Σ^{-1/2} Δ Σ^{-1/2} = 0.5 I, so p⁻¹‖·‖² = 0.25.
        assert_relative_eq!(relative_frobenius(&est, &truth).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn asymmetry_detected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(check_symmetric(&m, 1e-10).is_err());
        let mut s = m.clone();
        symmetrize(&mut s);
        assert!(check_symmetric(&s, 0.0).is_ok());
    }
}
