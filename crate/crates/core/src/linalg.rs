//! Dense linear algebra helpers on top of ndarray / LAPACK.

use crate::error::{Error, Result};
use crate::ops::{ONE, ZERO};
use ndarray::{Array2, ArrayView2, ShapeBuilder};
use ndarray_linalg::Inverse;
use num_complex::Complex64 as C64;
use std::os::raw::c_char;

/// Conjugate transpose.
pub fn adjoint(a: &ArrayView2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((a.ncols(), a.nrows()).f());
    out.zip_mut_with(&a.t(), |o, v| *o = v.conj());
    out
}

/// `A†B`.
pub fn adjoint_dot(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj()).dot(b)
}

/// Copy into a column-major array.
pub fn to_fortran(a: &ArrayView2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros(a.raw_dim().f());
    out.assign(a);
    out
}

/// Hermitian eigendecomposition, eigenvalues in descending order.
///
/// Uses LAPACK's divide-and-conquer driver. Only the lower triangle of `a` is
/// read. Each eigenvector is rotated so that its largest-magnitude component
/// is real and positive, which makes the output deterministic.
pub fn eigh_desc(a: &ArrayView2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0).f())));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let mut m = to_fortran(a);
    let ni = n as i32;
    let mut w = vec![0.0f64; n];
    let mut info = 0i32;
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    let mut wq = [ZERO];
    let mut rq = [0.0f64];
    let mut iq = [0i32];
    let data = m.as_slice_memory_order_mut().expect("fortran layout");
    // SAFETY: buffers are sized per LAPACK's contract; the first call is a
    // workspace query that only writes the first element of each work array.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            data.as_mut_ptr() as *mut _,
            &ni,
            w.as_mut_ptr(),
            wq.as_mut_ptr() as *mut _,
            &-1,
            rq.as_mut_ptr(),
            &-1,
            iq.as_mut_ptr(),
            &-1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("zheevd workspace query failed: info={info}")));
    }
    let lwork = (wq[0].re as i32).max(1);
    let lrwork = (rq[0] as i32).max(1);
    let liwork = iq[0].max(1);
    let mut work = vec![ZERO; lwork as usize];
    let mut rwork = vec![0.0f64; lrwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    // SAFETY: as above, with the queried workspace sizes.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            data.as_mut_ptr() as *mut _,
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr() as *mut _,
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("zheevd failed: info={info}")));
    }
    // Ascending from LAPACK; reverse columns.
    w.reverse();
    let mut vecs = Array2::zeros((n, n).f());
    for (j, mut col) in vecs.columns_mut().into_iter().enumerate() {
        col.assign(&m.column(n - 1 - j));
        let pivot = col
            .iter()
            .copied()
            .max_by(|x, y| x.norm_sqr().total_cmp(&y.norm_sqr()))
            .unwrap_or(ONE);
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            col.mapv_inplace(|z| z * phase);
        }
    }
    Ok((w, vecs))
}

/// Square root of a positive semidefinite Hermitian matrix. Negative
/// eigenvalues from round-off are clamped to zero.
pub fn sqrtm_psd(a: &ArrayView2<C64>) -> Result<Array2<C64>> {
    let (w, v) = eigh_desc(a)?;
    let mut scaled = v.clone();
    for (mut col, &l) in scaled.columns_mut().into_iter().zip(&w) {
        let s = l.max(0.0).sqrt();
        col.mapv_inplace(|z| z * s);
    }
    Ok(scaled.dot(&adjoint(&v.view())))
}

fn one_norm(a: &ArrayView2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by diagonal Padé(6,6) with scaling and squaring.
/// Meant for small matrices (Krylov projections, single-site propagators).
pub fn expm(a: &ArrayView2<C64>) -> Result<Array2<C64>> {
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = C64::from(0.5f64.powi(s));
    let x = a.mapv(|z| z * scale);
    let eye = Array2::<C64>::eye(n);
    let mut num = eye.mapv(|z| z * C[0]);
    let mut den = num.clone();
    let mut power = eye;
    for (k, &c) in C.iter().enumerate().skip(1) {
        power = power.dot(&x);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        num.scaled_add(C64::from(c), &power);
        den.scaled_add(C64::from(sign * c), &power);
    }
    let inv = den
        .inv()
        .map_err(|e| Error::Linalg(format!("Padé denominator: {e}")))?;
    let mut r = inv.dot(&num);
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::{Eigh, UPLO};

    fn hermitian(n: usize, seed: u64) -> Array2<C64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let g = Array2::from_shape_fn((n, n), |_| C64::new(next(), next()));
        &g + &adjoint(&g.view())
    }

    #[test]
    fn eigh_matches_independent_driver() {
        let a = hermitian(17, 3);
        let (w, v) = eigh_desc(&a.view()).unwrap();
        let (mut w_ref, _) = a.eigh(UPLO::Lower).unwrap();
        w_ref.as_slice_mut().unwrap().reverse();
        for (x, y) in w.iter().zip(w_ref.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let recon = v.dot(&Array2::from_diag(&ndarray::Array1::from(w.clone()).mapv(C64::from))).dot(&adjoint(&v.view()));
        assert!((&recon - &a).iter().all(|z| z.norm() < 1e-12));
        for w in w.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn expm_of_diagonal_and_pauli() {
        let a = Array2::from_diag(&ndarray::arr1(&[C64::new(0.0, 1.3), C64::new(-2.0, 0.0)]));
        let e = expm(&a.view()).unwrap();
        assert!((e[[0, 0]] - C64::new(0.0, 1.3).exp()).norm() < 1e-14);
        assert!((e[[1, 1]] - (-2.0f64).exp()).norm() < 1e-14);
        // exp(-i θ X) = cos θ − i sin θ X
        let th = 7.1;
        let x = ndarray::arr2(&[[ZERO, C64::new(0.0, -th)], [C64::new(0.0, -th), ZERO]]);
        let e = expm(&x.view()).unwrap();
        assert!((e[[0, 0]] - th.cos()).norm() < 1e-13);
        assert!((e[[0, 1]] - C64::new(0.0, -th.sin())).norm() < 1e-13);
    }

    #[test]
    fn expm_matches_eigendecomposition() {
        let h = hermitian(12, 9);
        let t = 2.7;
        let e = expm(&h.mapv(|z| z * C64::new(0.0, -t)).view()).unwrap();
        // ndarray-linalg reads row-major Hermitian input as its conjugate.
        let (w, v) = to_fortran(&h.view()).eigh(UPLO::Lower).unwrap();
        let phases = Array2::from_diag(&w.mapv(|l| C64::new(0.0, -t * l).exp()));
        let oracle = v.dot(&phases).dot(&adjoint(&v.view()));
        let err = (&e - &oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn sqrtm_squares_back() {
        let g = hermitian(8, 1);
        let psd = g.dot(&g);
        let r = sqrtm_psd(&psd.view()).unwrap();
        assert!((&r.dot(&r) - &psd).iter().all(|z| z.norm() < 1e-11));
    }
}
