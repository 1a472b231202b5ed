//! Small dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn inf_norm_real(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Dense LU inverse. Fails when a pivot is exactly zero or the result is not finite.
pub fn invert(m: &CMatrix, what: &str) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: cannot invert a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular(format!("{what}: inverse is not finite")));
    }
    Ok(inv)
}

/// Conjugate-transpose average; exact Hermitian projection.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    let mut out = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    for i in 0..out.nrows() {
        out[(i, i)].im = 0.0;
    }
    out
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// 2-norm condition number of a Hermitian matrix from its spectrum.
pub fn hermitian_condition(m: &CMatrix) -> f64 {
    let ev = hermitian_eigenvalues(m);
    let max = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let min = ev.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Outcome of a principal square root of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianSqrt {
    pub root: CMatrix,
    /// Eigenvalues that were below zero and clamped.
    pub clamped: usize,
    /// Most negative eigenvalue seen (0 when none).
    pub most_negative: f64,
}

/// Principal (positive semidefinite) square root through the eigendecomposition.
///
/// Eigenvalues in `[-neg_tol, 0)` are clamped to zero; anything more negative is an error.
pub fn hermitian_sqrt(m: &CMatrix, neg_tol: f64) -> Result<HermitianSqrt> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut clamped = 0;
    let mut most_negative = 0.0f64;
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &lambda in eig.eigenvalues.iter() {
        if lambda < 0.0 {
            most_negative = most_negative.min(lambda);
            if lambda < -neg_tol {
                return Err(Error::Numerical(format!(
                    "matrix square root: eigenvalue {lambda:e} is below the tolerance -{neg_tol:e}"
                )));
            }
            clamped += 1;
            roots.push(0.0);
        } else {
            roots.push(lambda.sqrt());
        }
    }
    let v = &eig.eigenvectors;
    let n = v.nrows();
    let mut root = CMatrix::zeros(n, n);
    for (k, &r) in roots.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let col = v.column(k);
        root += (col * col.adjoint()) * Complex64::new(r, 0.0);
    }
    Ok(HermitianSqrt {
        root,
        clamped,
        most_negative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(4.0, 0.0),
            Complex64::new(9.0, 0.0),
        ]));
        let r = hermitian_sqrt(&m, 1e-12).unwrap();
        assert!((r.root[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((r.root[(1, 1)].re - 3.0).abs() < 1e-14);
        assert_eq!(r.clamped, 0);
    }

    #[test]
    fn sqrt_rejects_negative_spectrum() {
        let m = CMatrix::from_diagonal_element(2, 2, Complex64::new(-1.0, 0.0));
        assert!(hermitian_sqrt(&m, 1e-8).is_err());
        let tiny = CMatrix::from_diagonal_element(2, 2, Complex64::new(-1e-10, 0.0));
        let r = hermitian_sqrt(&tiny, 1e-8).unwrap();
        assert_eq!(r.clamped, 2);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 0.3),
                Complex64::new(0.5, -0.3),
                Complex64::new(1.0, 0.0),
            ],
        );
        let r = hermitian_sqrt(&a, 1e-12).unwrap().root;
        assert!(max_abs(&(&r * &r - &a)) < 1e-13);
    }

    #[test]
    fn singular_inverse_fails() {
        let m = CMatrix::zeros(2, 2);
        assert!(matches!(invert(&m, "zero"), Err(Error::Singular(_))));
    }
}
