//! Symmetric eigendecompositions and spectral matrix functions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Which matrix a spectrum was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralSource {
    Cov,
    FisherLeb,
    FisherGauss,
    Other,
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub source: SpectralSource,
}

impl SpectralData {
    pub fn of(matrix: &DMatrix<f64>, source: SpectralSource) -> Self {
        let sym = symmetrize(matrix);
        let eig = SymmetricEigen::new(sym);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { eigenvalues, eigenvectors, source }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        *self.eigenvalues.last().unwrap_or(&f64::NAN)
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.first().unwrap_or(&f64::NAN)
    }

    /// U diag(g(λ)) Uᵀ.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let u = &self.eigenvectors;
        let mut out = DMatrix::zeros(n, n);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let gk = g(lambda);
            if gk == 0.0 {
                continue;
            }
            let col = u.column(k);
            for j in 0..n {
                for i in 0..n {
                    out[(i, j)] += gk * col[i] * col[j];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }
}

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

/// Principal square root of a positive semidefinite matrix (negative noise clipped to zero).
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    SpectralData::of(m, SpectralSource::Other).map(|l| l.max(0.0).sqrt())
}

pub fn sym_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    SpectralData::of(m, SpectralSource::Other).map(|l| 1.0 / l)
}

pub fn max_abs_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descending_order_and_reconstruction() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, -1.0, 0.3, 0.0, 0.3, 4.0]);
        let s = SpectralData::of(&m, SpectralSource::Other);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let err = max_abs_entry(&(s.reconstruct() - &m));
        assert!(err < 1e-12);
        let gram = s.eigenvectors.transpose() * &s.eigenvectors;
        assert!(max_abs_entry(&(gram - DMatrix::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_sqrt(&m);
        assert!(max_abs_entry(&(&r * &r - &m)) < 1e-12);
    }
}
