//! BFGS ascent with backtracking, used for kernel and inducing-input fits.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct AscentOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes `f`, which returns `None` outside its domain.
///
/// The returned point never has a lower value than `x0`.
pub fn maximize<F>(mut f: F, x0: DVector<f64>, opts: &AscentOptions) -> Option<AscentResult>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let n = x0.len();
    let (mut fx, mut g) = f(&x0)?;
    let mut x = x0;
    let mut h = DMatrix::<f64>::identity(n, n) / g.norm().max(1.0);
    let mut iterations = 0;
    let mut converged = g.norm() < opts.grad_tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut d = &h * &g;
        let mut slope = g.dot(&d);
        if slope <= 0.0 || !slope.is_finite() {
            h = DMatrix::identity(n, n) / g.norm().max(1.0);
            d = &h * &g;
            slope = g.dot(&d);
        }
        let Some((step, x_new, f_new, g_new)) = line_search(&mut f, &x, fx, &d, slope) else {
            // Retry once along the scaled gradient before giving up.
            let sd = &g / g.norm().max(1.0);
            match line_search(&mut f, &x, fx, &sd, g.dot(&sd)) {
                Some((_, x_new, f_new, g_new)) => {
                    h = DMatrix::identity(n, n) / g_new.norm().max(1.0);
                    x = x_new;
                    fx = f_new;
                    g = g_new;
                    converged = g.norm() < opts.grad_tol;
                    continue;
                }
                None => break,
            }
        };
        let s = &d * step;
        // Ascent on f is descent on -f: y is the change in -grad.
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = (I - rho s y')H(I - rho y s') + rho s s'
            h = &h - (&hy * s.transpose() + &s * hy.transpose()) * rho
                + (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let small_change = (f_new - fx).abs() <= 1e-14 * (1.0 + fx.abs());
        x = x_new;
        fx = f_new;
        g = g_new;
        converged = g.norm() < opts.grad_tol;
        if small_change && !converged {
            // Flat in value but gradient not small: restart curvature model.
            h = DMatrix::identity(n, n) / g.norm().max(1.0);
        }
    }

    Some(AscentResult {
        grad_norm: g.norm(),
        x,
        value: fx,
        iterations,
        converged,
    })
}

type Accepted = (f64, DVector<f64>, f64, DVector<f64>);

fn line_search<F>(f: &mut F, x: &DVector<f64>, fx: f64, d: &DVector<f64>, slope: f64) -> Option<Accepted>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    const C1: f64 = 1e-4;
    let mut step = 1.0;
    for _ in 0..50 {
        let trial = x + d * step;
        if let Some((ft, gt)) = f(&trial) {
            if ft.is_finite() && ft >= fx + C1 * step * slope {
                return Some((step, trial, ft, gt));
            }
        }
        step *= 0.5;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finds_maximum_of_concave_quadratic() {
        let f = |x: &DVector<f64>| {
            let a = x[0] - 1.0;
            let b = x[1] + 2.0;
            Some((-(a * a + 10.0 * b * b + a * b), DVector::from_vec(vec![-(2.0 * a + b), -(20.0 * b + a)])))
        };
        let r = maximize(f, DVector::zeros(2), &AscentOptions::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(r.x[1], -2.0, epsilon = 1e-6);
    }

    #[test]
    fn rosenbrock_and_domain_limits() {
        // Maximize -rosenbrock restricted to x0 < 1.5.
        let f = |x: &DVector<f64>| {
            if x[0] >= 1.5 {
                return None;
            }
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let ga = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            let gb = 200.0 * (b - a * a);
            Some((-v, DVector::from_vec(vec![-ga, -gb])))
        };
        let r = maximize(f, DVector::from_vec(vec![-1.2, 1.0]), &AscentOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn never_returns_worse_than_start() {
        let f = |x: &DVector<f64>| Some((-(x[0].abs()), DVector::from_vec(vec![-x[0].signum()])));
        let r = maximize(f, DVector::from_vec(vec![0.3]), &AscentOptions { max_iter: 20, grad_tol: 1e-9 }).unwrap();
        assert!(r.value >= -0.3);
    }
}
