//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when ‖g‖∞ falls below this.
    pub grad_tol: f64,
    /// Stop when an iteration lowers f by less than f_tol·max(|f|, 1).
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iter: 400, grad_tol: 1e-9, f_tol: 1e-13 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStop {
    GradientSmall,
    NoProgress,
    MaxIter,
    LineSearchFailed,
    Callback,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    pub stop: LbfgsStop,
}

/// Minimizes `fg`, which returns (f(x), ∇f(x)). After every accepted step the
/// callback sees (iteration, x, f); returning true stops the run.
pub fn minimize<F, C>(mut fg: F, x0: DVector<f64>, opts: &LbfgsOptions, mut callback: C) -> LbfgsResult
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    C: FnMut(usize, &DVector<f64>, f64) -> bool,
{
    let mut x = x0;
    let (mut f, mut g) = fg(&x);
    let mut hist: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut stop = LbfgsStop::MaxIter;
    let mut it = 0;
    while it < opts.max_iter {
        if g.amax() <= opts.grad_tol {
            stop = LbfgsStop::GradientSmall;
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            q *= s.dot(y) / y.norm_squared();
        } else {
            q *= 1.0 / g.norm().max(1e-300);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = -q;
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = -&g / g.norm().max(1e-300);
            slope = g.dot(&dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = &x + &dir * step;
            let (fn_, gn) = fg(&xn);
            if fn_.is_finite() && fn_ <= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            stop = LbfgsStop::LineSearchFailed;
            break;
        };
        it += 1;
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        if callback(it, &x, f) {
            stop = LbfgsStop::Callback;
            break;
        }
        if decrease <= opts.f_tol * f.abs().max(1.0) {
            stop = LbfgsStop::NoProgress;
            break;
        }
    }
    LbfgsResult { x, f, iterations: it, stop }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let fg = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (f, g)
        };
        let opts = LbfgsOptions { max_iter: 500, ..Default::default() };
        let r = minimize(fg, DVector::from_vec(vec![-1.2, 1.0]), &opts, |_, _, _| false);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r);
    }

    #[test]
    fn quadratic_converges_fast() {
        let h = DVector::from_vec(vec![1.0, 10.0, 100.0]);
        let fg = |x: &DVector<f64>| (0.5 * x.component_mul(&h).dot(x), x.component_mul(&h));
        let r = minimize(fg, DVector::from_element(3, 1.0), &LbfgsOptions::default(), |_, _, _| false);
        assert!(r.f < 1e-12);
        assert!(r.iterations < 30);
    }
}
