//! Thin wrappers over nalgebra's dense factorizations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        // nalgebra sorts the singular values (and vectors) in descending order.
        let svd = a.clone().svd(true, true);
        ThinSvd {
            u: svd.u.expect("u requested"),
            singular_values: svd.singular_values,
            v_t: svd.v_t.expect("v_t requested"),
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Solves `min ‖A K − B‖_F` assuming `A` has full column rank.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut ut_b = self.u.transpose() * rhs;
        for (i, s) in self.singular_values.iter().enumerate() {
            ut_b.row_mut(i).unscale_mut(*s);
        }
        self.v_t.transpose() * ut_b
    }

    /// `V diag(1/s)`: maps coordinates in the `U` basis back to coefficients.
    pub fn coefficient_map(&self) -> DMatrix<f64> {
        let mut v = self.v_t.transpose();
        for (j, s) in self.singular_values.iter().enumerate() {
            v.column_mut(j).unscale_mut(*s);
        }
        v
    }
}

/// Default numerical rank threshold `max(rows, cols)·ε·σ_max`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Reciprocal 2-norm condition number; `0` for singular or non-finite input.
pub fn reciprocal_condition(a: &DMatrix<f64>) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return 0.0;
    }
    let svd = ThinSvd::new(a);
    let smax = svd.sigma_max();
    if smax == 0.0 {
        0.0
    } else {
        svd.sigma_min() / smax
    }
}

/// Eigenvalues and eigenvectors of a symmetric matrix, sorted descending.
pub fn symmetric_eigen_desc(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Eigenvalues of a general real square matrix (real Schur form).
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Right singular vector of the smallest singular value of a complex matrix,
/// together with that singular value.
pub fn complex_null_vector(a: &DMatrix<Complex64>) -> (DVector<Complex64>, f64) {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let last = svd.singular_values.len() - 1;
    let v = DVector::from_iterator(v_t.ncols(), v_t.row(last).iter().map(|z| z.conj()));
    (v, svd.singular_values[last])
}

/// Orthogonal projector onto the column space of `b`, built from a
/// Householder QR of the matrix. Requires full column rank.
pub fn range_projector(b: &DMatrix<f64>) -> DMatrix<f64> {
    let q = b.clone().qr().q();
    &q * q.transpose()
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|v| Complex64::new(v, 0.0))
}
