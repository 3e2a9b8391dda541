//! Thin wrappers over LAPACK/BLAS for the handful of dense kernels the rest
//! of the crate is built on: symmetric eigendecomposition (dsyevd), Gram
//! accumulation (dsyrk), and Householder QR (dgeqrf/dorgqr).
//!
//! All public-facing matrices in this crate are row-major `ndarray` arrays;
//! the column-major conversions stay inside this module.

use ndarray::{Array1, Array2, ArrayView2};

/// `scale * A Aᵀ` for a contiguous row-major `(p, n)` matrix, p×p symmetric.
///
/// A row-major `(p, n)` buffer is a column-major `(n, p)` matrix, i.e. `Aᵀ`,
/// so `dsyrk(trans = 'T')` accumulates exactly `A Aᵀ`. Only the lower
/// triangle is computed; the result is mirrored before returning.
pub(crate) fn gram(a: ArrayView2<'_, f64>, scale: f64) -> Array2<f64> {
    let (p, n) = a.dim();
    let a_slice = a
        .as_slice()
        .expect("gram: input must be contiguous row-major");
    let mut c = vec![0.0f64; p * p];
    if n > 0 && p > 0 {
        unsafe {
            blas::dsyrk(
                b'L',
                b'T',
                p as i32,
                n as i32,
                scale,
                a_slice,
                n as i32,
                0.0,
                &mut c,
                p as i32,
            );
        }
    }
    // c holds the lower triangle in column-major order: (i, j), i >= j at c[i + j*p].
    let mut out = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        for i in j..p {
            let v = c[i + j * p];
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Full symmetric eigendecomposition via LAPACK `dsyevd`.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of a `(p, p)` row-major matrix.
pub(crate) fn sym_eigen(s: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let p = s.nrows();
    assert_eq!(p, s.ncols(), "sym_eigen: matrix must be square");
    if p == 0 {
        return (Array1::zeros(0), Array2::zeros((0, 0)));
    }
    // A symmetric row-major buffer reads identically in column-major order.
    let mut a: Vec<f64> = s.iter().cloned().collect();
    let mut w = vec![0.0f64; p];
    let n = p as i32;
    let mut info = 0i32;

    // Workspace query.
    let mut work = vec![0.0f64; 1];
    let mut iwork = vec![0i32; 1];
    unsafe {
        lapack::dsyevd(b'V', b'L', n, &mut a, n, &mut w, &mut work, -1, &mut iwork, -1, &mut info);
    }
    let lwork = work[0] as usize;
    let liwork = iwork[0] as usize;
    let mut work = vec![0.0f64; lwork.max(1)];
    let mut iwork = vec![0i32; liwork.max(1)];
    unsafe {
        lapack::dsyevd(
            b'V',
            b'L',
            n,
            &mut a,
            n,
            &mut w,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        );
    }
    assert_eq!(info, 0, "dsyevd failed with info = {info}");

    // dsyevd returns ascending eigenvalues with eigenvectors as column-major
    // columns of `a`; reverse into descending order.
    let mut values = Array1::<f64>::zeros(p);
    let mut vectors = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let src = p - 1 - j;
        values[j] = w[src];
        for i in 0..p {
            vectors[[i, j]] = a[src * p + i];
        }
    }
    (values, vectors)
}

/// Deterministic orthogonal factor of a square matrix via Householder QR.
///
/// Columns are sign-fixed so that the corresponding diagonal of R is
/// non-negative, which makes the factor unique for a full-rank input.
pub(crate) fn orthogonal_factor(m: &Array2<f64>) -> Array2<f64> {
    let p = m.nrows();
    assert_eq!(p, m.ncols(), "orthogonal_factor: matrix must be square");
    if p == 0 {
        return Array2::zeros((0, 0));
    }
    // Column-major copy.
    let mut a = vec![0.0f64; p * p];
    for j in 0..p {
        for i in 0..p {
            a[i + j * p] = m[[i, j]];
        }
    }
    let n = p as i32;
    let mut tau = vec![0.0f64; p];
    let mut info = 0i32;
    let mut work = vec![0.0f64; 1];
    unsafe {
        lapack::dgeqrf(n, n, &mut a, n, &mut tau, &mut work, -1, &mut info);
    }
    let lwork = work[0] as usize;
    let mut work = vec![0.0f64; lwork.max(1)];
    unsafe {
        lapack::dgeqrf(n, n, &mut a, n, &mut tau, &mut work, lwork as i32, &mut info);
    }
    assert_eq!(info, 0, "dgeqrf failed with info = {info}");

    let r_signs: Vec<f64> = (0..p)
        .map(|j| if a[j + j * p] < 0.0 { -1.0 } else { 1.0 })
        .collect();

    let mut work = vec![0.0f64; 1];
    unsafe {
        lapack::dorgqr(n, n, n, &mut a, n, &tau, &mut work, -1, &mut info);
    }
    let lwork = work[0] as usize;
    let mut work = vec![0.0f64; lwork.max(1)];
    unsafe {
        lapack::dorgqr(n, n, n, &mut a, n, &tau, &mut work, lwork as i32, &mut info);
    }
    assert_eq!(info, 0, "dorgqr failed with info = {info}");

    let mut q = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        for i in 0..p {
            q[[i, j]] = a[i + j * p] * r_signs[j];
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gram_matches_naive_product() {
        let a = array![[1.0, 2.0, 3.0], [0.5, -1.0, 4.0]];
        let g = gram(a.view(), 0.5);
        let naive = a.dot(&a.t()) * 0.5;
        for i in 0..2 {
            for j in 0..2 {
                assert!((g[[i, j]] - naive[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sym_eigen_reconstructs() {
        let s = array![[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]];
        let (vals, vecs) = sym_eigen(s.view());
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for i in 0..3 {
            for j in 0..3 {
                assert!((recon[[i, j]] - s[[i, j]]).abs() < 1e-12);
            }
        }
        let gram = vecs.t().dot(&vecs);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthogonal_factor_is_orthogonal_and_deterministic() {
        let m = array![[1.0, 2.0, 0.0], [-1.0, 0.5, 2.0], [3.0, 1.0, 1.0]];
        let q1 = orthogonal_factor(&m);
        let q2 = orthogonal_factor(&m);
        assert_eq!(q1, q2);
        let gram = q1.t().dot(&q1);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }
}
