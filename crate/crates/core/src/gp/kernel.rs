//! Squared-exponential kernel with one relevance parameter per input.
//!
//! `length_scales[d]` is the diagonal entry of the scaling matrix `L`, so the
//! kernel is `sf2 * exp(-0.5 * sum_d (x_d - y_d)^2 / L_d)`. `L_d` therefore
//! carries squared input units.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, PlatoonError, Result};

/// Jitter added to every kernel diagonal before factorization.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyper {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelHyper {
    pub fn new(signal_variance: f64, length_scales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let h = Self {
            signal_variance,
            length_scales,
            noise_variance,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.signal_variance) || !ok(self.noise_variance) {
            return invalid(format!(
                "variances must be finite and positive (signal {}, noise {})",
                self.signal_variance, self.noise_variance
            ));
        }
        if self.length_scales.is_empty() || !self.length_scales.iter().all(|&l| ok(l)) {
            return invalid(format!("bad length scales {:?}", self.length_scales));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Number of log-space parameters: signal, one per input, noise.
    pub fn n_params(&self) -> usize {
        self.dim() + 2
    }

    /// `[ln sf2, ln L_1, .., ln L_d, ln sn2]`
    pub fn to_log_params(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_params());
        v[0] = self.signal_variance.ln();
        for (i, l) in self.length_scales.iter().enumerate() {
            v[i + 1] = l.ln();
        }
        v[self.dim() + 1] = self.noise_variance.ln();
        v
    }

    pub fn from_log_params(theta: &DVector<f64>) -> Self {
        let d = theta.len() - 2;
        Self {
            signal_variance: theta[0].exp(),
            length_scales: (0..d).map(|i| theta[i + 1].exp()).collect(),
            noise_variance: theta[d + 1].exp(),
        }
    }

    pub(crate) fn ill_conditioned(&self) -> PlatoonError {
        PlatoonError::IllConditionedKernel {
            signal_variance: self.signal_variance,
            length_scales: self.length_scales.clone(),
            noise_variance: self.noise_variance,
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((a, b), l) in x1.iter().zip(x2).zip(&self.length_scales) {
            let d = a - b;
            s += d * d / l;
        }
        self.signal_variance * (-0.5 * s).exp()
    }
}

/// Evaluates the kernel between two points.
pub fn kernel_eval(x1: &[f64], x2: &[f64], hyper: &KernelHyper) -> Result<f64> {
    let d = hyper.dim();
    if x1.len() != d {
        return Err(PlatoonError::DimensionMismatch {
            expected: d,
            got: x1.len(),
        });
    }
    if x2.len() != d {
        return Err(PlatoonError::DimensionMismatch {
            expected: d,
            got: x2.len(),
        });
    }
    Ok(hyper.eval_unchecked(x1, x2))
}

pub(crate) fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// Noise-free cross-covariance `K(a, b)` between the rows of `a` and `b`.
pub fn cross_cov(a: &DMatrix<f64>, b: &DMatrix<f64>, hyper: &KernelHyper) -> DMatrix<f64> {
    let rows_a: Vec<Vec<f64>> = (0..a.nrows()).map(|i| row(a, i)).collect();
    let rows_b: Vec<Vec<f64>> = (0..b.nrows()).map(|i| row(b, i)).collect();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        hyper.eval_unchecked(&rows_a[i], &rows_b[j])
    })
}

/// Covariance vector between one query and the rows of `a`.
pub fn cov_vec(a: &DMatrix<f64>, x: &[f64], hyper: &KernelHyper) -> DVector<f64> {
    let mut buf = vec![0.0; a.ncols()];
    DVector::from_fn(a.nrows(), |i, _| {
        for (d, b) in buf.iter_mut().enumerate() {
            *b = a[(i, d)];
        }
        hyper.eval_unchecked(&buf, x)
    })
}

/// Symmetric noise-free Gram matrix of the rows of `a`.
pub fn gram(a: &DMatrix<f64>, hyper: &KernelHyper) -> DMatrix<f64> {
    let n = a.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(a, i)).collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hyper.signal_variance;
        for j in 0..i {
            let v = hyper.eval_unchecked(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hyp(sf2: f64, l: &[f64]) -> KernelHyper {
        KernelHyper::new(sf2, l.to_vec(), 0.01).unwrap()
    }

    #[test]
    fn zero_distance_gives_signal_variance() {
        let h = hyp(2.5, &[1.0, 3.0]);
        assert_eq!(kernel_eval(&[0.3, -1.0], &[0.3, -1.0], &h).unwrap(), 2.5);
    }

    #[test]
    fn hand_evaluated_values() {
        let h = hyp(1.0, &[1.0, 1.0]);
        assert_relative_eq!(kernel_eval(&[1.0, 1.0], &[0.0, 0.0], &h).unwrap(), 0.3678794, epsilon = 1e-7);
        let h = hyp(1.0, &[4.0, 1.0]);
        assert_relative_eq!(kernel_eval(&[2.0, 5.0], &[0.0, 5.0], &h).unwrap(), 0.6065307, epsilon = 1e-7);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let h = hyp(1.0, &[1.0, 1.0]);
        assert!(matches!(
            kernel_eval(&[1.0], &[0.0, 0.0], &h),
            Err(PlatoonError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(kernel_eval(&[1.0, 2.0], &[0.0, 0.0, 1.0], &h).is_err());
    }

    #[test]
    fn rejects_non_positive_hyperparameters() {
        assert!(KernelHyper::new(0.0, vec![1.0], 0.1).is_err());
        assert!(KernelHyper::new(1.0, vec![-1.0], 0.1).is_err());
        assert!(KernelHyper::new(1.0, vec![1.0], f64::NAN).is_err());
        assert!(KernelHyper::new(1.0, vec![], 0.1).is_err());
    }

    #[test]
    fn log_params_round_trip() {
        let h = KernelHyper::new(0.7, vec![2.0, 0.25], 1e-3).unwrap();
        let back = KernelHyper::from_log_params(&h.to_log_params());
        assert_relative_eq!(back.signal_variance, 0.7, epsilon = 1e-14);
        assert_relative_eq!(back.length_scales[1], 0.25, epsilon = 1e-14);
        assert_relative_eq!(back.noise_variance, 1e-3, epsilon = 1e-17);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            x in prop::collection::vec(-50.0f64..50.0, 2),
            y in prop::collection::vec(-50.0f64..50.0, 2),
            sf2 in 0.01f64..10.0,
            l0 in 0.01f64..100.0,
            l1 in 0.01f64..100.0,
        ) {
            let h = hyp(sf2, &[l0, l1]);
            let a = kernel_eval(&x, &y, &h).unwrap();
            let b = kernel_eval(&y, &x, &h).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0 && a <= sf2);
        }

        #[test]
        fn gram_plus_noise_is_positive_definite(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..25),
            sf2 in 0.1f64..5.0,
            l in 0.05f64..20.0,
        ) {
            let n = pts.len();
            let a = DMatrix::from_fn(n, 2, |i, j| pts[i][j]);
            let h = hyp(sf2, &[l, l]);
            let mut k = gram(&a, &h);
            for i in 0..n { k[(i, i)] += 1e-10 + JITTER; }
            // Duplicate points make the matrix rank-deficient up to the
            // diagonal shift; relative to sf2 this is still PD.
            prop_assert!(nalgebra::Cholesky::new(k).is_some());
        }
    }
}
