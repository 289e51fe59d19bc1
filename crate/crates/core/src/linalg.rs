//! Small dense linear-algebra helpers over `ndarray`, with Hermitian
//! eigensolves delegated to `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Zip};
use num_complex::Complex;

pub type C64 = Complex<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

fn to_nalgebra(a: ArrayView2<C64>) -> DMatrix<C64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: ArrayView2<C64>) -> Vec<f64> {
    let m = hermitize_nalg(to_nalgebra(a));
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching eigenvectors as columns.
pub fn hermitian_eigh(a: ArrayView2<C64>) -> (Vec<f64>, Array2<C64>) {
    let n = a.nrows();
    let eig = hermitize_nalg(to_nalgebra(a)).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn hermitize_nalg(m: DMatrix<C64>) -> DMatrix<C64> {
    let a = m.adjoint();
    (m + a) * C64::new(0.5, 0.0)
}

/// Square root of a positive semidefinite Hermitian matrix (negative
/// eigenvalues clamped to zero).
pub fn psd_sqrt(a: ArrayView2<C64>) -> Array2<C64> {
    let (vals, vecs) = hermitian_eigh(a);
    let s: Array1<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for c in 0..n {
        for r in 0..n {
            scaled[[r, c]] *= s[c];
        }
    }
    scaled.dot(&adjoint(vecs.view()))
}

pub fn adjoint(a: ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// `(A + A†)/2`, in place.
pub fn hermitize(a: &mut Array2<C64>) {
    let n = a.nrows();
    for i in 0..n {
        a[[i, i]].im = 0.0;
        for j in (i + 1)..n {
            let avg = (a[[i, j]] + a[[j, i]].conj()) * 0.5;
            a[[i, j]] = avg;
            a[[j, i]] = avg.conj();
        }
    }
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: ArrayView2<C64>, b: ArrayView2<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    Zip::from(a).and(&b.t()).for_each(|x, y| acc += x * y);
    acc
}

pub fn frobenius(a: ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub fn hermitian_norm(a: ArrayView2<C64>) -> f64 {
    hermitian_eigenvalues(a).into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Spectral norm (largest singular value) of an arbitrary square matrix.
pub fn operator_norm(a: ArrayView2<C64>) -> f64 {
    let gram = adjoint(a).dot(&a);
    hermitian_norm(gram.view()).max(0.0).sqrt()
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}
