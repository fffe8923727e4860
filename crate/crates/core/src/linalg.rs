//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `aᴴ b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn to_vector(v: &[Complex64]) -> CVector {
    CVector::from_column_slice(v)
}

/// Largest absolute deviation of `m` from the identity.
pub fn max_identity_deviation(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - target).norm());
        }
    }
    worst
}

/// Complex product via three real GEMMs (Gauss), which go through nalgebra's
/// blocked real kernels. Much faster than the generic complex path for the
/// dictionary-sized products used here.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let t1 = &ar * &br;
    let t2 = &ai * &bi;
    let t3 = (&ar + &ai) * (&br + &bi);
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        Complex64::new(t1[(i, j)] - t2[(i, j)], t3[(i, j)] - t1[(i, j)] - t2[(i, j)])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive() {
        let a = CMatrix::from_fn(5, 7, |i, j| Complex64::new(i as f64 - 1.5, (j * i) as f64 * 0.3 - 1.0));
        let b = CMatrix::from_fn(7, 4, |i, j| Complex64::new((i + 2 * j) as f64 * 0.1, 1.0 - j as f64));
        let fast = matmul(&a, &b);
        let slow = &a * &b;
        assert!((fast - slow).iter().all(|z| z.norm() < 1e-12));
    }
}
