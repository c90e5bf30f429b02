//! End-to-end GP training from driver traces.

use std::time::Instant;

use crate::error::{invalid, Result};
use crate::gp::{build_sparse, train_exact, Dataset, GpModel, InducingInit, KernelHyper, SparseGpModel, SparseOptions, TrainOptions, TrainReport};
use crate::hv::{build_discrepancy_dataset, generate_synthetic_trace, one_step_predictions, rmse, sample_fraction, training_profile, ArxParams, DriverTrace};

/// Synthetic truth-mode traces: a random lead profile per trace and the
/// discrepancy `gain * tanh(slope * (v_av - x)) - drift * x` plus white
/// noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub traces: usize,
    pub duration: f64,
    pub t_step: f64,
    pub v_max: f64,
    pub noise_std: f64,
    pub g_gain: f64,
    pub g_slope: f64,
    pub g_drift: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            traces: 2,
            duration: 200.0,
            t_step: 0.1,
            v_max: 36.0,
            noise_std: 0.05,
            g_gain: 0.3,
            g_slope: 0.5,
            g_drift: 0.0,
            seed: 0,
        }
    }
}

pub fn synthetic_traces(cfg: &SyntheticConfig) -> Result<Vec<DriverTrace>> {
    if cfg.traces == 0 {
        return invalid("need at least one trace");
    }
    let (gain, slope, drift) = (cfg.g_gain, cfg.g_slope, cfg.g_drift);
    let g = move |x: f64, v: f64| gain * (slope * (v - x)).tanh() - drift * x;
    (0..cfg.traces as u64)
        .map(|i| {
            let s = cfg.seed.wrapping_mul(1000).wrapping_add(i);
            let profile = training_profile(cfg.duration, cfg.t_step, cfg.v_max, s);
            generate_synthetic_trace(&profile, &g, cfg.noise_std, s ^ 0x9e37_79b9, cfg.t_step)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpTrainConfig {
    /// Share of discrepancy rows used for training.
    pub fraction: f64,
    pub seed: u64,
    pub inducing: usize,
    pub optimize_inducing: bool,
    pub train: TrainOptions,
}

impl Default for GpTrainConfig {
    fn default() -> Self {
        Self {
            fraction: 0.2,
            seed: 0,
            inducing: 20,
            optimize_inducing: true,
            train: TrainOptions::default(),
        }
    }
}

pub struct TrainedGp {
    pub exact: GpModel,
    pub sparse: SparseGpModel,
    pub report: TrainReport,
    pub total_rows: usize,
}

/// Stacked discrepancy rows of all traces.
pub fn discrepancy_data(traces: &[DriverTrace], arx: &ArxParams) -> Result<Dataset> {
    let parts: Vec<Dataset> = traces.iter().map(|t| build_discrepancy_dataset(t, arx)).collect::<Result<_>>()?;
    Dataset::concat(&parts)
}

/// Starting hyperparameters from the data spread: signal variance from the
/// target variance, squared length scales from the input variance.
pub fn initial_hyper(data: &Dataset) -> Result<KernelHyper> {
    let n = data.len() as f64;
    let mean = data.targets.mean();
    let var = data.targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let sf2 = var.max(1e-4);
    let ls = (0..data.dim())
        .map(|d| {
            let col = data.inputs.column(d);
            let m = col.mean();
            (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).max(1e-2)
        })
        .collect();
    KernelHyper::new(sf2, ls, 0.1 * sf2)
}

pub fn train_gp(traces: &[DriverTrace], arx: &ArxParams, cfg: &GpTrainConfig) -> Result<TrainedGp> {
    let all = discrepancy_data(traces, arx)?;
    let data = sample_fraction(&all, cfg.fraction, cfg.seed)?;
    let init = initial_hyper(&data)?;
    let (exact, report) = train_exact(&data, &init, &cfg.train)?;
    let opts = SparseOptions {
        init: InducingInit::KMeans { seed: cfg.seed },
        optimize: cfg.optimize_inducing,
        ..SparseOptions::default()
    };
    let m = cfg.inducing.min(data.len());
    let sparse = build_sparse(&exact, m, &opts)?;
    Ok(TrainedGp {
        exact,
        sparse,
        report,
        total_rows: all.len(),
    })
}

/// One row of the held-out accuracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutRow {
    pub name: String,
    pub arx_rmse: f64,
    pub gp_rmse: f64,
}

impl HeldOutRow {
    /// RMSE reduction of ARX+GP relative to ARX, in percent.
    pub fn improvement_pct(&self) -> f64 {
        if self.arx_rmse > 0.0 {
            100.0 * (self.arx_rmse - self.gp_rmse) / self.arx_rmse
        } else {
            0.0
        }
    }
}

pub fn held_out_row(name: &str, trace: &DriverTrace, arx: &ArxParams, gp: &SparseGpModel) -> Result<HeldOutRow> {
    let (a, c, y) = one_step_predictions(trace, arx, gp)?;
    Ok(HeldOutRow {
        name: name.to_string(),
        arx_rmse: rmse(&a, &y)?,
        gp_rmse: rmse(&c, &y)?,
    })
}

/// Mean wall-clock seconds per prediction, `(exact, sparse)`, over `queries`
/// repeated `reps` times.
pub fn prediction_timing(exact: &GpModel, sparse: &SparseGpModel, queries: &[Vec<f64>], reps: usize) -> Result<(f64, f64)> {
    if queries.is_empty() || reps == 0 {
        return invalid("timing needs queries and repetitions");
    }
    let mut sink = 0.0;
    let start = Instant::now();
    for _ in 0..reps {
        for q in queries {
            sink += exact.predict(q)?.0;
        }
    }
    let t_exact = start.elapsed().as_secs_f64();
    let start = Instant::now();
    for _ in 0..reps {
        for q in queries {
            sink += sparse.predict(q)?.0;
        }
    }
    let t_sparse = start.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    let n = (queries.len() * reps) as f64;
    Ok((t_exact / n, t_sparse / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arx_only_traces_train_a_flat_model() {
        let cfg = SyntheticConfig {
            traces: 2,
            duration: 60.0,
            noise_std: 0.0,
            g_gain: 0.0,
            ..SyntheticConfig::default()
        };
        let traces = synthetic_traces(&cfg).unwrap();
        let arx = ArxParams::default();
        let t = train_gp(&traces, &arx, &GpTrainConfig::default()).unwrap();
        for k in 0..40 {
            let q = [k as f64 * 0.9, 36.0 - k as f64 * 0.9];
            assert!(t.sparse.predict(&q).unwrap().0.abs() <= 1e-3);
        }
        let row = held_out_row("h", &traces[0], &arx, &t.sparse).unwrap();
        assert!(row.arx_rmse < 1e-9 && row.gp_rmse < 1e-3);
    }

    #[test]
    fn deterministic_training() {
        let cfg = SyntheticConfig {
            traces: 1,
            duration: 60.0,
            ..SyntheticConfig::default()
        };
        let traces = synthetic_traces(&cfg).unwrap();
        let arx = ArxParams::default();
        let a = train_gp(&traces, &arx, &GpTrainConfig::default()).unwrap();
        let b = train_gp(&traces, &arx, &GpTrainConfig::default()).unwrap();
        assert_eq!(a.sparse, b.sparse);
        assert_eq!(a.total_rows, 597);
    }
}
