//! Fully independent conditional (FIC) sparse GP.
//!
//! The training set is summarised by `m` inducing inputs `Z`. With
//! `V = Lm^-1 Kmn` and `Lm Lm' = Kmm`, the training covariance is
//! approximated by `V'V + Lambda`, where `Lambda` restores the exact
//! diagonal and adds the observation noise. After construction only
//! `m`-sized matrices are kept.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::dataset::Dataset;
use super::exact::GpModel;
use super::kernel::{cov_vec, cross_cov, gram, KernelHyper, JITTER};
use super::kmeans::kmeans;
use super::optimize::{maximize, AscentOptions};
use crate::error::{invalid, PlatoonError, Result};

/// How the inducing inputs start out.
#[derive(Debug, Clone)]
pub enum InducingInit {
    /// k-means centroids of the training inputs (length-scale weighted).
    KMeans { seed: u64 },
    /// Caller-supplied locations, `m x d`.
    Fixed(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct SparseOptions {
    pub init: InducingInit,
    /// Refine the inducing inputs by ascent on the FIC marginal likelihood.
    pub optimize: bool,
    pub ascent: AscentOptions,
}

impl Default for SparseOptions {
    fn default() -> Self {
        Self {
            init: InducingInit::KMeans { seed: 0 },
            optimize: true,
            ascent: AscentOptions {
                max_iter: 200,
                grad_tol: 1e-6,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGpModel {
    pub inducing_inputs: DMatrix<f64>,
    pub hyper: KernelHyper,
    /// Cholesky factor of `Kmm + jitter I`.
    pub lm: DMatrix<f64>,
    /// Cholesky factor of `I + V Lambda^-1 V'`.
    pub lb: DMatrix<f64>,
    /// Weights so that the mean is `k_m(x) . w`.
    pub weights: DVector<f64>,
}

struct Fic {
    lm: DMatrix<f64>,
    v: DMatrix<f64>,
    lambda: DVector<f64>,
    lb: DMatrix<f64>,
    c: DVector<f64>,
    kmn: DMatrix<f64>,
}

fn chol_lower(m: DMatrix<f64>, hyper: &KernelHyper) -> Result<DMatrix<f64>> {
    m.cholesky().map(|c| c.unpack()).ok_or_else(|| hyper.ill_conditioned())
}

fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(b).expect("triangular factor has a positive diagonal")
}

fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b).expect("triangular factor has a positive diagonal")
}

fn solve_upper_t_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b).expect("triangular factor has a positive diagonal")
}

fn fic(data: &Dataset, z: &DMatrix<f64>, hyper: &KernelHyper) -> Result<Fic> {
    let m = z.nrows();
    let mut kmm = gram(z, hyper);
    for i in 0..m {
        kmm[(i, i)] += JITTER;
    }
    let lm = chol_lower(kmm, hyper)?;
    let kmn = cross_cov(z, &data.inputs, hyper);
    let v = solve_lower(&lm, &kmn);
    let n = data.len();
    let lambda = DVector::from_fn(n, |i, _| {
        (hyper.signal_variance - v.column(i).norm_squared()).max(0.0) + hyper.noise_variance + JITTER
    });
    let mut b = DMatrix::identity(m, m);
    let mut v_scaled = v.clone();
    for i in 0..n {
        v_scaled.column_mut(i).scale_mut(1.0 / lambda[i]);
    }
    b.gemm(1.0, &v_scaled, &v.transpose(), 1.0);
    let lb = chol_lower(b, hyper)?;
    let c = solve_lower_vec(&lb, &(&v_scaled * &data.targets));
    Ok(Fic {
        lm,
        v,
        lambda,
        lb,
        c,
        kmn,
    })
}

fn fic_lml(data: &Dataset, f: &Fic) -> f64 {
    let n = data.len() as f64;
    let y = &data.targets;
    let quad: f64 = y.iter().zip(f.lambda.iter()).map(|(yi, li)| yi * yi / li).sum::<f64>() - f.c.norm_squared();
    let log_det: f64 = 2.0 * f.lb.diagonal().iter().map(|x| x.ln()).sum::<f64>() + f.lambda.iter().map(|x| x.ln()).sum::<f64>();
    -0.5 * quad - 0.5 * log_det - 0.5 * n * (2.0 * PI).ln()
}

/// FIC log marginal likelihood as a function of the inducing inputs, with
/// its gradient flattened row-major over `Z`.
pub fn fic_log_likelihood(data: &Dataset, z: &DMatrix<f64>, hyper: &KernelHyper) -> Result<(f64, DMatrix<f64>)> {
    if z.ncols() != data.dim() || hyper.dim() != data.dim() {
        return Err(PlatoonError::DimensionMismatch {
            expected: data.dim(),
            got: z.ncols(),
        });
    }
    let f = fic(data, z, hyper)?;
    let value = fic_lml(data, &f);
    let (m, n, d) = (z.nrows(), data.len(), data.dim());

    // U = Lambda^-1 V' LB^-T, alpha = C^-1 y, P = Kmm^-1 Kmn.
    let lb_inv_v = solve_lower(&f.lb, &f.v);
    let mut u = lb_inv_v.transpose();
    for i in 0..n {
        u.row_mut(i).scale_mut(1.0 / f.lambda[i]);
    }
    let mut alpha = DVector::from_fn(n, |i, _| data.targets[i] / f.lambda[i]);
    alpha -= &u * &f.c;
    let p = f.lm.tr_solve_lower_triangular(&f.v).expect("positive diagonal");

    // G1 = P (alpha alpha' - C^-1 - diag(alpha_i^2 - C^-1_ii))
    let mut g1 = (&p * &alpha) * alpha.transpose();
    let pu = &p * &u;
    g1.gemm(1.0, &pu, &u.transpose(), 1.0);
    for i in 0..n {
        let cinv_ii = 1.0 / f.lambda[i] - u.row(i).norm_squared();
        let w = alpha[i] * alpha[i] - cinv_ii;
        let scale = 1.0 / f.lambda[i] + w;
        for a in 0..m {
            g1[(a, i)] -= p[(a, i)] * scale;
        }
    }
    let g2 = -0.5 * &g1 * p.transpose();

    let kmm = gram(z, hyper);
    let mut grad = DMatrix::zeros(m, d);
    for a in 0..m {
        for dd in 0..d {
            let l = hyper.length_scales[dd];
            let mut s = 0.0;
            for i in 0..n {
                s += g1[(a, i)] * f.kmn[(a, i)] * (data.inputs[(i, dd)] - z[(a, dd)]) / l;
            }
            for cc in 0..m {
                s += 2.0 * g2[(a, cc)] * kmm[(a, cc)] * (z[(cc, dd)] - z[(a, dd)]) / l;
            }
            grad[(a, dd)] = s;
        }
    }
    Ok((value, grad))
}

/// Builds the FIC approximation of `model` with `m` inducing inputs. The
/// kernel hyperparameters are taken from `model` unchanged.
pub fn build_sparse(model: &GpModel, m: usize, opts: &SparseOptions) -> Result<SparseGpModel> {
    let data = &model.dataset;
    let hyper = &model.hyper;
    if m == 0 || m > data.len() {
        return invalid(format!("inducing count {m} must lie in 1..={}", data.len()));
    }
    let d = data.dim();
    let z0 = match &opts.init {
        InducingInit::KMeans { seed } => kmeans(&data.inputs, m, &hyper.length_scales, *seed, 100),
        InducingInit::Fixed(z) => {
            if z.nrows() != m || z.ncols() != d {
                return invalid(format!("fixed inducing inputs are {}x{}, expected {m}x{d}", z.nrows(), z.ncols()));
            }
            z.clone()
        }
    };
    let z = if opts.optimize {
        let (v0, _) = fic_log_likelihood(data, &z0, hyper)?;
        let objective = |flat: &DVector<f64>| {
            if !flat.iter().all(|x| x.is_finite()) {
                return None;
            }
            let zz = DMatrix::from_row_slice(m, d, flat.as_slice());
            let (v, g) = fic_log_likelihood(data, &zz, hyper).ok()?;
            let gflat = DVector::from_row_slice(g.transpose().as_slice());
            (v.is_finite() && gflat.iter().all(|x| x.is_finite())).then_some((v, gflat))
        };
        let flat0 = DVector::from_row_slice(z0.transpose().as_slice());
        match maximize(objective, flat0, &opts.ascent) {
            Some(r) if r.value >= v0 => DMatrix::from_row_slice(m, d, r.x.as_slice()),
            _ => {
                log::warn!("inducing-input ascent failed; keeping the initial locations");
                z0
            }
        }
    } else {
        z0
    };
    SparseGpModel::from_inducing(data, z, hyper.clone())
}

impl SparseGpModel {
    /// Precomputes the prediction matrices for fixed inducing inputs.
    pub fn from_inducing(data: &Dataset, z: DMatrix<f64>, hyper: KernelHyper) -> Result<Self> {
        hyper.validate()?;
        let f = fic(data, &z, &hyper)?;
        let tmp = solve_upper_t_vec(&f.lb, &f.c);
        let weights = solve_upper_t_vec(&f.lm, &tmp);
        Ok(Self {
            inducing_inputs: z,
            hyper,
            lm: f.lm,
            lb: f.lb,
            weights,
        })
    }

    pub fn n_inducing(&self) -> usize {
        self.inducing_inputs.nrows()
    }

    /// Posterior mean and latent variance at `x`; cost is `O(m^2)`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.hyper.dim() {
            return Err(PlatoonError::DimensionMismatch {
                expected: self.hyper.dim(),
                got: x.len(),
            });
        }
        let ks = cov_vec(&self.inducing_inputs, x, &self.hyper);
        let mean = ks.dot(&self.weights);
        let a = solve_lower_vec(&self.lm, &ks);
        let b = solve_lower_vec(&self.lb, &a);
        let var = self.hyper.signal_variance - a.norm_squared() + b.norm_squared();
        Ok((mean, var.max(0.0)))
    }

    /// Evaluates a batch of query points.
    pub fn predict_batch<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<Vec<(f64, f64)>> {
        xs.iter().map(|x| self.predict(x.as_ref())).collect()
    }
}

pub fn predict_sparse(sm: &SparseGpModel, x: &[f64]) -> Result<(f64, f64)> {
    sm.predict(x)
}
