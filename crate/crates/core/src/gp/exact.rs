//! Exact GP regression with a zero prior mean.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::dataset::Dataset;
use super::kernel::{cov_vec, gram, KernelHyper, JITTER};
use super::optimize::{maximize, AscentOptions};
use crate::error::{PlatoonError, Result};

/// Box on each log-parameter during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub ascent: AscentOptions,
    pub log_signal_bounds: (f64, f64),
    pub log_length_bounds: (f64, f64),
    pub log_noise_bounds: (f64, f64),
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            ascent: AscentOptions::default(),
            log_signal_bounds: (1e-8f64.ln(), 1e6f64.ln()),
            log_length_bounds: (1e-6f64.ln(), 1e8f64.ln()),
            log_noise_bounds: (1e-10f64.ln(), 1e4f64.ln()),
        }
    }
}

impl TrainOptions {
    fn contains(&self, theta: &DVector<f64>) -> bool {
        let d = theta.len() - 2;
        let inside = |x: f64, (lo, hi): (f64, f64)| x.is_finite() && x >= lo && x <= hi;
        inside(theta[0], self.log_signal_bounds)
            && (1..=d).all(|i| inside(theta[i], self.log_length_bounds))
            && inside(theta[d + 1], self.log_noise_bounds)
    }
}

/// Outcome flags from [`train_exact`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub initial_lml: f64,
    pub final_lml: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub dataset: Dataset,
    pub hyper: KernelHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn factor(data: &Dataset, hyper: &KernelHyper) -> Result<Cholesky<f64, Dyn>> {
    if hyper.dim() != data.dim() {
        return Err(PlatoonError::DimensionMismatch {
            expected: data.dim(),
            got: hyper.dim(),
        });
    }
    let mut k = gram(&data.inputs, hyper);
    for i in 0..data.len() {
        k[(i, i)] += hyper.noise_variance + JITTER;
    }
    Cholesky::new(k).ok_or_else(|| hyper.ill_conditioned())
}

/// Log marginal likelihood and its gradient with respect to
/// `[ln sf2, ln L_1.., ln sn2]`.
pub fn log_marginal_likelihood(data: &Dataset, hyper: &KernelHyper) -> Result<(f64, DVector<f64>)> {
    hyper.validate()?;
    let chol = factor(data, hyper)?;
    let n = data.len();
    let y = &data.targets;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();

    // W = alpha alpha' - K^-1; d lml / d theta_j = 0.5 tr(W dK/dtheta_j)
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);

    let kf = gram(&data.inputs, hyper);
    let d = hyper.dim();
    let mut grad = DVector::zeros(d + 2);
    let mut dist = vec![0.0; d];
    for i in 0..n {
        for j in 0..n {
            let wk = w[(i, j)] * kf[(i, j)];
            grad[0] += wk;
            if i != j {
                for (dd, slot) in dist.iter_mut().enumerate() {
                    let diff = data.inputs[(i, dd)] - data.inputs[(j, dd)];
                    *slot = diff * diff / hyper.length_scales[dd];
                }
                for dd in 0..d {
                    grad[dd + 1] += 0.5 * wk * dist[dd];
                }
            }
        }
    }
    grad *= 0.5;
    grad[d + 1] = 0.5 * w.trace() * hyper.noise_variance;
    Ok((lml, grad))
}

/// Fits the hyperparameters by maximizing the log marginal likelihood.
///
/// Never returns a model whose likelihood is below that of `init`.
pub fn train_exact(data: &Dataset, init: &KernelHyper, opts: &TrainOptions) -> Result<(GpModel, TrainReport)> {
    let (initial_lml, _) = log_marginal_likelihood(data, init)?;
    let objective = |theta: &DVector<f64>| {
        if !opts.contains(theta) {
            return None;
        }
        let h = KernelHyper::from_log_params(theta);
        log_marginal_likelihood(data, &h).ok().filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
    };
    let theta0 = init.to_log_params();
    let result = if opts.contains(&theta0) {
        maximize(objective, theta0, &opts.ascent)
    } else {
        None
    };
    let (hyper, report) = match result {
        Some(r) if r.value >= initial_lml => (
            KernelHyper::from_log_params(&r.x),
            TrainReport {
                initial_lml,
                final_lml: r.value,
                iterations: r.iterations,
                converged: r.converged,
                grad_norm: r.grad_norm,
            },
        ),
        _ => {
            log::warn!("hyperparameter ascent failed; keeping the initial hyperparameters");
            (
                init.clone(),
                TrainReport {
                    initial_lml,
                    final_lml: initial_lml,
                    iterations: 0,
                    converged: false,
                    grad_norm: f64::NAN,
                },
            )
        }
    };
    if !report.converged {
        log::warn!("hyperparameter ascent stopped before reaching the gradient tolerance");
    }
    Ok((GpModel::new(data.clone(), hyper)?, report))
}

impl GpModel {
    /// Conditions the GP on `dataset` with fixed hyperparameters.
    pub fn new(dataset: Dataset, hyper: KernelHyper) -> Result<Self> {
        hyper.validate()?;
        let chol = factor(&dataset, &hyper)?;
        let alpha = chol.solve(&dataset.targets);
        Ok(Self {
            dataset,
            hyper,
            chol,
            alpha,
        })
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower-triangular factor of `K + (sn2 + jitter) I`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Posterior mean and latent variance at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.hyper.dim() {
            return Err(PlatoonError::DimensionMismatch {
                expected: self.hyper.dim(),
                got: x.len(),
            });
        }
        let ks = cov_vec(&self.dataset.inputs, x, &self.hyper);
        let mean = ks.dot(&self.alpha);
        let mut v = ks;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let var = self.hyper.signal_variance - v.norm_squared();
        Ok((mean, var.max(0.0)))
    }
}

/// Free-function form of [`GpModel::predict`].
pub fn predict_exact(model: &GpModel, x: &[f64]) -> Result<(f64, f64)> {
    model.predict(x)
}
