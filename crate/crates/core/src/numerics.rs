//! Small dense-matrix helpers shared by every filter.
//!
//! Everything here is dimension-generic over `DMatrix<f64>`; the yield/return
//! model only ever instantiates 2x2 problems. Covariance-producing routines
//! elsewhere in the crate route their results through [`symmetrize`].

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest diagonal jitter [`cholesky_psd`] is allowed to add.
pub const JITTER_CAP: f64 = 1e-4;

/// Relative asymmetry tolerated on input to the symmetric routines.
const SYMMETRY_TOL: f64 = 1e-10;

fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Returns true when `|M - M^T|` is within `tol * (1 + max|M|)` entrywise.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let bound = tol * (1.0 + max_abs(m));
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= bound))
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "symmetrize")?;
    let mut out = m.clone();
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// True iff every eigenvalue of the symmetric matrix is `>= -tol`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    min_eigenvalue(m) >= -tol
}

/// Cholesky that accepts zero pivots (positive semidefinite input).
///
/// A pivot within `PIVOT_TOL * scale` of zero zeroes its column, provided the
/// remaining entries of that column are themselves negligible, which is
/// what semidefiniteness forces.
fn semidefinite_cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    const PIVOT_TOL: f64 = 1e-12;
    const COLUMN_TOL: f64 = 1e-9;

    let n = m.nrows();
    let scale = (0..n).fold(1.0_f64, |acc, i| acc.max(m[(i, i)].abs()));
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > PIVOT_TOL * scale {
            let pivot = d.sqrt();
            l[(j, j)] = pivot;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / pivot;
            }
        } else if d >= -PIVOT_TOL * scale {
            l[(j, j)] = d.max(0.0).sqrt();
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > COLUMN_TOL * scale {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

/// Lower-triangular `L` with `L L^T ~ M + j I`.
///
/// `j` is the first entry of the ladder `0, jitter, 10 jitter, ...` (never
/// above [`JITTER_CAP`]) for which the factorization goes through. Zero and
/// other singular PSD matrices factor at `j = 0`.
pub fn cholesky_psd(m: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    ensure_square(m, "cholesky_psd")?;
    if jitter < 0.0 || !jitter.is_finite() {
        return Err(Error::Numerical(format!(
            "jitter must be finite and >= 0, got {jitter}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("cholesky_psd: non-finite entry".into()));
    }
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::Numerical(
            "cholesky_psd: input is not symmetric".into(),
        ));
    }

    if let Some(l) = semidefinite_cholesky(m) {
        return Ok(l);
    }
    let n = m.nrows();
    let mut j = jitter;
    while j > 0.0 && j <= JITTER_CAP * (1.0 + 1e-9) {
        let shifted = m + DMatrix::<f64>::identity(n, n) * j;
        if let Some(l) = semidefinite_cholesky(&shifted) {
            return Ok(l);
        }
        j *= 10.0;
    }
    Err(Error::Factorization {
        min_eigenvalue: min_eigenvalue(m),
    })
}

/// Smallest squared Cholesky pivot, relative to the largest, accepted by
/// [`sym_inverse`].
const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// Inverse of a symmetric positive-definite matrix, symmetrized on return.
pub fn sym_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "sym_inverse")?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Inversion("non-finite entry".into()));
    }
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::Inversion("matrix is singular or not positive definite".into()))?;
    let pivots = chol.l_dirty().diagonal().map(|d| d * d);
    if pivots.min() <= SINGULAR_PIVOT_RATIO * pivots.max() {
        return Err(Error::Inversion("matrix is numerically singular".into()));
    }
    let inv = chol.inverse();
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Inversion("inverse has non-finite entries".into()));
    }
    symmetrize(&inv)
}

/// Inverse of a general square matrix via LU.
pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "inverse")?;
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Inversion("matrix is singular".into()))
}

/// Fails with a numerical error if any entry is NaN or infinite.
pub fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} has non-finite entries")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn symmetrize_examples() {
        assert_eq!(
            symmetrize(&m2(1.0, 2.0, 0.0, 1.0)).unwrap(),
            m2(1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(
            symmetrize(&m2(0.0, 4.0, 2.0, 0.0)).unwrap(),
            m2(0.0, 3.0, 3.0, 0.0)
        );
        let s = m2(2.0, -1.0, -1.0, 5.0);
        assert_eq!(symmetrize(&s).unwrap(), s);
    }

    #[test]
    fn symmetrize_rejects_non_square() {
        let r = symmetrize(&DMatrix::zeros(2, 3));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn cholesky_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_eq!(cholesky_psd(&i, 0.0).unwrap(), i);

        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(cholesky_psd(&z, 0.0).unwrap(), z);

        let m = m2(4.0, 2.0, 2.0, 2.0);
        let l = cholesky_psd(&m, 0.0).unwrap();
        assert_relative_eq!(l, m2(2.0, 0.0, 1.0, 1.0), epsilon = 1e-15);
        // reconstruction by direct multiplication
        let rebuilt = m2(2.0 * 2.0, 2.0 * 1.0, 1.0 * 2.0, 1.0 * 1.0 + 1.0 * 1.0);
        assert_relative_eq!(&l * l.transpose(), rebuilt, epsilon = 1e-15);
    }

    #[test]
    fn cholesky_rank_one() {
        // [1 2; 2 4] is PSD with rank 1.
        let m = m2(1.0, 2.0, 2.0, 4.0);
        let l = cholesky_psd(&m, 0.0).unwrap();
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_jitter_ladder_recovers_slightly_indefinite() {
        let m = m2(1.0, 0.0, 0.0, -5e-7);
        assert!(cholesky_psd(&m, 0.0).is_err());
        let l = cholesky_psd(&m, 1e-8).unwrap();
        let rebuilt = &l * l.transpose();
        // ladder 1e-8, 1e-7, 1e-6 -> the first that clears -5e-7 is 1e-6
        assert_relative_eq!(rebuilt[(1, 1)], -5e-7 + 1e-6, epsilon = 1e-15);
    }

    #[test]
    fn cholesky_reports_most_negative_eigenvalue() {
        let m = m2(1.0, 0.0, 0.0, -1.0);
        match cholesky_psd(&m, 1e-8) {
            Err(Error::Factorization { min_eigenvalue }) => {
                assert_relative_eq!(min_eigenvalue, -1.0, epsilon = 1e-12)
            }
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn sym_inverse_examples() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert_eq!(sym_inverse(&i).unwrap(), i);
        let d = m2(2.0, 0.0, 0.0, 4.0);
        assert_relative_eq!(
            sym_inverse(&d).unwrap(),
            m2(0.5, 0.0, 0.0, 0.25),
            epsilon = 1e-15
        );
        let spd = m2(3.0, 1.2, 1.2, 0.9);
        let inv = sym_inverse(&spd).unwrap();
        assert_relative_eq!(&spd * inv, i, epsilon = 1e-12);
    }

    #[test]
    fn sym_inverse_rejects_singular() {
        assert!(matches!(
            sym_inverse(&m2(1.0, 1.0, 1.0, 1.0)),
            Err(Error::Inversion(_))
        ));
        assert!(matches!(
            sym_inverse(&m2(1.0, 0.0, 0.0, -1.0)),
            Err(Error::Inversion(_))
        ));
        // rank one up to rounding
        let (a, b) = (0.0977, 0.599);
        assert!(matches!(
            sym_inverse(&m2(a * a, a * b, a * b, b * b)),
            Err(Error::Inversion(_))
        ));
        assert!(sym_inverse(&m2(1.0, 0.0, 0.0, 1e-10)).is_ok());
    }

    #[test]
    fn is_psd_examples() {
        assert!(is_psd(&DMatrix::identity(2, 2), 1e-10));
        assert!(!is_psd(&m2(1.0, 0.0, 0.0, -1.0), 1e-10));
        assert!(is_psd(&DMatrix::zeros(2, 2), 1e-10));
    }

    fn spd_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (prop::collection::vec(-3.0f64..3.0, 9), 1e-3f64..1.0).prop_map(|(v, eps)| {
            let a = DMatrix::from_row_slice(3, 3, &v);
            &a * a.transpose() + DMatrix::identity(3, 3) * eps
        })
    }

    proptest! {
        #[test]
        fn symmetrize_is_idempotent(v in prop::collection::vec(-1e3f64..1e3, 16)) {
            let m = DMatrix::from_row_slice(4, 4, &v);
            let once = symmetrize(&m).unwrap();
            prop_assert_eq!(symmetrize(&once).unwrap(), once);
        }

        #[test]
        fn cholesky_reconstructs_spd(m in spd_strategy()) {
            let l = cholesky_psd(&m, 0.0).unwrap();
            let err = (&l * l.transpose() - &m).amax();
            prop_assert!(err <= 1e-8 * (1.0 + m.norm()));
            for i in 0..3 {
                for j in (i + 1)..3 {
                    prop_assert_eq!(l[(i, j)], 0.0);
                }
            }
        }

        #[test]
        fn sym_inverse_residual(m in spd_strategy()) {
            let inv = sym_inverse(&m).unwrap();
            let eig = SymmetricEigen::new(m.clone()).eigenvalues;
            let cond = eig.max() / eig.min();
            let err = (&m * inv - DMatrix::<f64>::identity(3, 3)).amax();
            prop_assert!(err <= 1e-10 * cond.max(1.0), "err {} cond {}", err, cond);
        }
    }
}
