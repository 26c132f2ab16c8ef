//! Dense linear algebra helpers shared by the analysis and synthesis code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solves `M X + X M^* + Q = 0` by complex Schur decomposition and triangular
/// back-substitution. Fails when `M` and `-M^*` share (nearly) an eigenvalue.
pub fn lyapunov(m: &DMatrix<Complex64>, q: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = m.nrows();
    if m.ncols() != n || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Lyapunov operands must be square".into()));
    }
    let (u, t) = m.clone().schur().unpack();
    let c = -(u.adjoint() * q * &u);
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    // T Y + Y T^* = C, columns from last to first (T^* is lower triangular).
    for j in (0..n).rev() {
        let mut rhs: DVector<Complex64> = c.column(j).into_owned();
        for k in j + 1..n {
            let f = t[(j, k)].conj();
            for i in 0..n {
                rhs[i] -= y[(i, k)] * f;
            }
        }
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut v = rhs[i];
            for l in i + 1..n {
                v -= t[(i, l)] * y[(l, j)];
            }
            let d = t[(i, i)] + shift;
            if d.norm() <= 1e-13 * scale {
                return Err(Error::NearSingular {
                    condition: scale / d.norm().max(1e-300),
                    context: "Lyapunov operator (eigenvalue pair on the imaginary axis)".into(),
                });
            }
            y[(i, j)] = v / d;
        }
    }
    Ok(&u * y * u.adjoint())
}

/// Ratio of extreme singular values.
pub fn condition_number(a: &DMatrix<Complex64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn hermitian_max_eigenvalue(a: &DMatrix<Complex64>) -> f64 {
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eigenvalue(a: &DMatrix<Complex64>) -> f64 {
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Lifts a real matrix to complex.
pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Matrix exponential of a real matrix (scaling and squaring with a Taylor core).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
    let s = (norm.log2().ceil() as i32 + 1).max(0);
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_lyapunov() {
        let m = DMatrix::from_element(1, 1, c(-1.0, 0.0));
        let q = DMatrix::from_element(1, 1, c(1.0, 0.0));
        let x = lyapunov(&m, &q).unwrap();
        assert!((x[(0, 0)] - c(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn complex_lyapunov_residual() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(-1.0, 2.0),
                c(0.3, 0.0),
                c(0.0, 1.0),
                c(0.5, -0.2),
                c(-2.0, -1.0),
                c(0.1, 0.1),
                c(0.0, 0.0),
                c(1.0, 0.0),
                c(-0.5, 0.0),
            ],
        );
        let b = DMatrix::from_row_slice(3, 1, &[c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)]);
        let q = &b * b.adjoint();
        let x = lyapunov(&m, &q).unwrap();
        let res = &m * &x + &x * m.adjoint() + &q;
        assert!(res.norm() < 1e-12 * q.norm());
        assert!((&x - x.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_rejects_imaginary_axis_pair() {
        let m = DMatrix::from_element(1, 1, c(0.0, 1.0));
        let q = DMatrix::from_element(1, 1, c(1.0, 0.0));
        assert!(lyapunov(&m, &q).is_err());
    }

    #[test]
    fn expm_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::dvector![-1.0, 2.0]);
        let e = expm(&a);
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-13);
        assert!((e[(1, 1)] - 2f64.exp()).abs() < 1e-12);
    }
}
