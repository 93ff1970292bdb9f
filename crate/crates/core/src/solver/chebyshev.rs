//! Truncated Chebyshev expansions of scalar functions applied to symmetric
//! operators through matvecs.

use std::f64::consts::PI;

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevSeries {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl ChebyshevSeries {
    /// Interpolates f at Chebyshev nodes of degree `degree` on [a, b].
    pub fn fit(f: impl Fn(f64) -> f64, a: f64, b: f64, degree: usize) -> Self {
        assert!(b > a, "empty interval [{a}, {b}]");
        let n = degree + 1;
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        let fx: Vec<f64> = (0..n)
            .map(|j| f(mid + half * (PI * (j as f64 + 0.5) / n as f64).cos()))
            .collect();
        let coeffs = (0..n)
            .map(|k| {
                let s: f64 = (0..n)
                    .map(|j| fx[j] * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                    .sum();
                let c = 2.0 * s / n as f64;
                if k == 0 { c / 2.0 } else { c }
            })
            .collect();
        Self { a, b, coeffs }
    }

    /// Fits f and drops trailing coefficients below `tol` in absolute value.
    pub fn fit_to_tolerance(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_degree: usize) -> Self {
        let mut s = Self::fit(f, a, b, max_degree);
        let last = s.coeffs.iter().rposition(|c| c.abs() > tol / 4.0).unwrap_or(0);
        s.coeffs.truncate(last + 1);
        s
    }

    /// exp(x − b) on [a, b]: bounded by 1, so the truncation tolerance is absolute.
    pub fn exp_shifted(a: f64, b: f64, tol: f64) -> Self {
        let b = if b > a { b } else { a + 1e-12 };
        let half = (b - a) / 2.0;
        // Coefficients behave like Bessel I_k(half), which collapse once k passes e·half/2.
        let degree = ((1.5 * half + 2.0 * (1.0 / tol).ln() + 10.0).ceil() as usize).min(4000);
        Self::fit_to_tolerance(move |x| (x - b).exp(), a, b, tol, degree)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// p(A)·X by Clenshaw recurrence, where `op` computes A·Y.
    pub fn apply(&self, op: &mut dyn FnMut(&DMatrix<f64>) -> DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (scale, shift) = (2.0 / (self.b - self.a), (self.a + self.b) / (self.b - self.a));
        // t(A)·Y = scale·A·Y − shift·Y
        let mut tmap = |y: &DMatrix<f64>| op(y) * scale - y * shift;
        let mut b1 = DMatrix::zeros(x.nrows(), x.ncols());
        let mut b2 = DMatrix::zeros(x.nrows(), x.ncols());
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = tmap(&b1) * 2.0 - &b2 + x * c;
            b2 = b1;
            b1 = b0;
        }
        tmap(&b1) - b2 + x * self.coeffs[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_fn;

    #[test]
    fn scalar_exp_accuracy() {
        let s = ChebyshevSeries::exp_shifted(0.0, 20.0, 1e-10);
        for k in 0..=40 {
            let x = k as f64 * 0.5;
            assert!((s.eval(x) - (x - 20.0).exp()).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn matrix_application_matches_eigen() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 0.2]);
        let s = ChebyshevSeries::exp_shifted(0.0, 3.0, 1e-12);
        let mut op = |y: &DMatrix<f64>| &a * y;
        let got = s.apply(&mut op, &DMatrix::identity(3, 3));
        let want = sym_fn(&a, |x| (x - 3.0).exp());
        assert!((got - want).amax() < 1e-10);
    }
}
