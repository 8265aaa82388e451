//! Small dense complex linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Elementwise max |a_ij - b_ij|.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// max |A - A†|, zero for a Hermitian matrix.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn real_to_complex(m: &RMatrix) -> CMatrix {
    m.map(c)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
pub fn hermitian_eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (a + a.adjoint()) * c(0.5);
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// f(A) for Hermitian A, via its spectrum.
pub fn hermitian_function(a: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let (vals, vecs) = hermitian_eigh(a);
    let scaled = CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| vecs[(i, j)] * f(vals[j]));
    scaled * vecs.adjoint()
}

/// Trace distance ½‖A − B‖₁ between Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let (vals, _) = hermitian_eigh(&(a - b));
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn outer(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}
