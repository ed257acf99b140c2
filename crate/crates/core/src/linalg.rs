//! Small dense complex linear-algebra helpers.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative asymmetry above which [`eigh`] refuses its input.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigh {
    /// Real eigenvalues, sorted descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<Complex64>,
}

/// `max |A - A^H| / max |A|`, zero for the zero matrix.
pub fn hermitian_defect(a: &DMatrix<Complex64>) -> f64 {
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

pub fn eigh(a: &DMatrix<Complex64>) -> Result<Eigh> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "eigh needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let defect = hermitian_defect(a);
    if !(defect <= HERMITIAN_TOL) {
        return Err(Error::NotHermitian(defect));
    }
    // exact Hermitian symmetry for the solver
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let dec = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[j].total_cmp(&dec.eigenvalues[i]));
    let values = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| dec.eigenvectors[(r, order[c])]);
    Ok(Eigh { values, vectors })
}

/// Number of eigenvalues above `rel_tol * max eigenvalue`.
pub fn numerical_rank(values: &[f64], rel_tol: f64) -> usize {
    let top = values.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > rel_tol * top).count()
}

/// Frobenius norm.
pub fn frobenius(a: &DMatrix<Complex64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::RngStream;

    fn random_hermitian(n: usize, rng: &mut RngStream) -> DMatrix<Complex64> {
        let x = DMatrix::from_fn(n, n, |_, _| rng.complex_gaussian());
        (&x + x.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = eigh(&DMatrix::identity(5, 5)).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn diagonal_sorted_descending() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(3.0, 0.0),
        ]));
        let e = eigh(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut a = DMatrix::<Complex64>::identity(3, 3);
        a[(0, 1)] = Complex64::new(0.0, 1.0);
        a[(1, 0)] = Complex64::new(0.0, 1.0);
        assert!(matches!(eigh(&a), Err(Error::NotHermitian(_))));
        assert!(eigh(&DMatrix::<Complex64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn random_8x8_reconstruction() {
        let mut rng = RngStream::new(5, 99, 0);
        let r = random_hermitian(8, &mut rng);
        let e = eigh(&r).unwrap();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            8,
            e.values.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        let recon = &e.vectors * lambda * e.vectors.adjoint();
        assert!(frobenius(&(recon - &r)) <= 1e-10);
        let gram = e.vectors.adjoint() * &e.vectors;
        assert!(frobenius(&(gram - DMatrix::identity(8, 8))) <= 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_counts_large_eigenvalues() {
        assert_eq!(numerical_rank(&[4.0, 1.0, 1e-12, 0.0], 1e-8), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-8), 0);
    }
}
