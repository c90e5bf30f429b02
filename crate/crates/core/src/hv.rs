//! Human-driven vehicle model.
//!
//! The nominal ARX recursion runs on its own output chain `x`, driven by the
//! trailing AV's velocity. The observed HV velocity is that chain plus a
//! discrepancy evaluated at the previous `(x, v_av)` pair:
//!
//! ```text
//! x_k   = -sum c_i x_{k-i} + sum b_i v_av_{k-i}
//! v_hv_k = x_k + g(x_{k-1}, v_av_{k-1})
//! ```
//!
//! The ARX chain is never overwritten by measured velocities. Its
//! low-frequency loop gain `1 / (1 + sum c)` is about `1e4`, so feeding
//! corrected velocities back into the lags turns any bounded discrepancy
//! into a divergent one.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{invalid, PlatoonError, Result};
use crate::gp::dataset::{csv_err, parse_record};
use crate::gp::{Dataset, SparseGpModel};
use crate::numfmt;

pub const LAGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArxParams {
    pub c: [f64; LAGS],
    pub b: [f64; LAGS],
}

impl Default for ArxParams {
    /// Coefficients identified from field driving data.
    fn default() -> Self {
        Self {
            c: [-3.0227, 3.3543, -1.6329, 0.3014],
            b: [0.0063, -0.0303, 0.0495, -0.0254],
        }
    }
}

impl ArxParams {
    /// Steady-state ratio of HV to AV velocity.
    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.c.iter().sum::<f64>())
    }

    /// One ARX step from lag arrays (newest first).
    pub fn step(&self, x: &[f64; LAGS], u: &[f64; LAGS]) -> f64 {
        (0..LAGS).map(|i| -self.c[i] * x[i] + self.b[i] * u[i]).sum()
    }
}

/// Four most recent samples, newest first. `hv` holds the nominal ARX chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityHistory {
    pub hv: [f64; LAGS],
    pub av: [f64; LAGS],
}

impl VelocityHistory {
    pub fn new(hv: [f64; LAGS], av: [f64; LAGS]) -> Result<Self> {
        if hv.iter().chain(&av).any(|v| !v.is_finite()) {
            return invalid("velocity history must be finite");
        }
        if av.iter().any(|&v| v < 0.0) {
            return invalid("AV velocities in the history must be non-negative");
        }
        Ok(Self { hv, av })
    }

    /// History of a platoon that has been cruising at `v`.
    pub fn constant(v: f64) -> Self {
        Self {
            hv: [v; LAGS],
            av: [v; LAGS],
        }
    }

    pub fn push(&mut self, hv: f64, av: f64) {
        self.hv.rotate_right(1);
        self.av.rotate_right(1);
        self.hv[0] = hv;
        self.av[0] = av;
    }
}

pub fn arx_predict(p: &ArxParams, h: &VelocityHistory) -> f64 {
    p.step(&h.hv, &h.av)
}

/// Next HV velocity with the GP correction at the newest lag pair.
pub fn predict_corrected(p: &ArxParams, gp: &SparseGpModel, h: &VelocityHistory) -> Result<(f64, f64)> {
    let (mu, var) = gp.predict(&[h.hv[0], h.av[0]])?;
    Ok((arx_predict(p, h) + mu, var))
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(PlatoonError::DimensionMismatch {
            expected: actual.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return invalid("rmse of an empty series");
    }
    let ss: f64 = pred.iter().zip(actual).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Synthetic disturbance used as ground truth: drivers close speed gaps a
/// little faster than the ARX model predicts.
pub fn default_g_true(v_hv: f64, v_av: f64) -> f64 {
    0.3 * (0.5 * (v_av - v_hv)).tanh()
}

/// Recorded AV/HV velocities on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverTrace {
    pub time: Vec<f64>,
    pub v_av: Vec<f64>,
    pub v_hv: Vec<f64>,
}

impl DriverTrace {
    pub fn new(time: Vec<f64>, v_av: Vec<f64>, v_hv: Vec<f64>) -> Result<Self> {
        let n = time.len();
        if v_av.len() != n || v_hv.len() != n {
            return invalid("trace columns differ in length");
        }
        if n < LAGS + 1 {
            return invalid(format!("trace needs at least {} samples, got {n}", LAGS + 1));
        }
        if time.iter().chain(&v_av).chain(&v_hv).any(|x| !x.is_finite()) {
            return invalid("trace contains non-finite values");
        }
        let dt = time[1] - time[0];
        if dt <= 0.0 || time.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0)) {
            return Err(PlatoonError::Format("trace time grid is not uniform and increasing".into()));
        }
        Ok(Self { time, v_av, v_hv })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.time[1] - self.time[0]
    }

    /// Writes `t,v_av,v_hv` CSV.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["t", "v_av", "v_hv"]).map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record([
                numfmt::sig(self.time[i], numfmt::MODEL_DIGITS),
                numfmt::sig(self.v_av[i], numfmt::MODEL_DIGITS),
                numfmt::sig(self.v_hv[i], numfmt::MODEL_DIGITS),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().collect::<Vec<_>>() != ["t", "v_av", "v_hv"] {
            return Err(PlatoonError::Parse {
                path: name,
                line: 1,
                message: "expected header `t,v_av,v_hv`".into(),
            });
        }
        let (mut t, mut a, mut h) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| PlatoonError::Parse {
                path: name.clone(),
                line: i + 2,
                message: e.to_string(),
            })?;
            let v = parse_record(&rec, 3, &name, i + 2)?;
            t.push(v[0]);
            a.push(v[1]);
            h.push(v[2]);
        }
        Self::new(t, a, h)
    }
}

/// Replays the nominal ARX chain of a trace. The first four samples seed the
/// lags; later entries are driven only by the AV series.
pub fn arx_chain(trace: &DriverTrace, p: &ArxParams) -> Vec<f64> {
    let n = trace.len();
    let mut x = trace.v_hv[..LAGS].to_vec();
    x.reserve(n - LAGS);
    for j in LAGS..n {
        let xl = [x[j - 1], x[j - 2], x[j - 3], x[j - 4]];
        let ul = [trace.v_av[j - 1], trace.v_av[j - 2], trace.v_av[j - 3], trace.v_av[j - 4]];
        x.push(p.step(&xl, &ul));
    }
    x
}

/// Discrepancy dataset: inputs `(x_{j-1}, v_av_{j-1})`, targets
/// `v_hv_j - x_j`, for `j >= 4`.
pub fn build_discrepancy_dataset(trace: &DriverTrace, p: &ArxParams) -> Result<Dataset> {
    if trace.len() < LAGS + 1 {
        return invalid(format!("trace needs at least {} samples", LAGS + 1));
    }
    let x = arx_chain(trace, p);
    let rows: Vec<Vec<f64>> = (LAGS..trace.len()).map(|j| vec![x[j - 1], trace.v_av[j - 1]]).collect();
    let targets: Vec<f64> = (LAGS..trace.len()).map(|j| trace.v_hv[j] - x[j]).collect();
    Dataset::from_rows(&rows, &targets)
}

/// One-step predictions along a trace: `(arx, corrected, actual)` for `j >= 4`.
pub fn one_step_predictions(trace: &DriverTrace, p: &ArxParams, gp: &SparseGpModel) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let x = arx_chain(trace, p);
    let mut arx = Vec::with_capacity(trace.len() - LAGS);
    let mut corrected = Vec::with_capacity(trace.len() - LAGS);
    for j in LAGS..trace.len() {
        let (mu, _) = gp.predict(&[x[j - 1], trace.v_av[j - 1]])?;
        arx.push(x[j]);
        corrected.push(x[j] + mu);
    }
    Ok((arx, corrected, trace.v_hv[LAGS..].to_vec()))
}

/// Simulates an HV following `v_av` (sampled every `t_step`). The ARX chain
/// starts at rest at `v_av[0]`; from the fifth sample on the observed
/// velocity is `x + g_true + N(0, noise_std^2)`, clamped at zero.
pub fn generate_synthetic_trace(
    v_av: &[f64],
    g_true: &dyn Fn(f64, f64) -> f64,
    noise_std: f64,
    seed: u64,
    t_step: f64,
) -> Result<DriverTrace> {
    let n = v_av.len();
    if n < LAGS + 1 {
        return invalid(format!("profile needs at least {} samples", LAGS + 1));
    }
    if !(noise_std >= 0.0) || !(t_step > 0.0) {
        return invalid("noise_std must be >= 0 and the step positive");
    }
    let p = ArxParams::default();
    let noise = Normal::new(0.0, noise_std).map_err(|e| PlatoonError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![v_av[0]; LAGS];
    let mut v_hv = vec![v_av[0]; LAGS];
    for j in LAGS..n {
        let xl = [x[j - 1], x[j - 2], x[j - 3], x[j - 4]];
        let ul = [v_av[j - 1], v_av[j - 2], v_av[j - 3], v_av[j - 4]];
        let xj = p.step(&xl, &ul);
        let e = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        v_hv.push((xj + g_true(x[j - 1], v_av[j - 1]) + e).max(0.0));
        x.push(xj);
    }
    let time = (0..n).map(|i| i as f64 * t_step).collect();
    DriverTrace::new(time, v_av.to_vec(), v_hv)
}

/// Random lead-vehicle profile for training data: dwell at random speeds in
/// `[0, v_max]` and move between them at random bounded accelerations.
pub fn training_profile(duration: f64, t_step: f64, v_max: f64, seed: u64) -> Vec<f64> {
    let n = (duration / t_step).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = Uniform::new_inclusive(0.0, v_max).expect("valid range");
    let dwell = Uniform::new(3.0, 12.0).expect("valid range");
    let accel = Uniform::new(0.5, 3.5).expect("valid range");
    let mut out = Vec::with_capacity(n);
    let mut v = level.sample(&mut rng);
    while out.len() < n {
        let hold = (dwell.sample(&mut rng) / t_step) as usize;
        out.extend(std::iter::repeat_n(v, hold.min(n - out.len())));
        let target = level.sample(&mut rng);
        let a = accel.sample(&mut rng);
        while out.len() < n && (target - v).abs() > 1e-12 {
            let dv = (target - v).clamp(-a * t_step, a * t_step);
            v += dv;
            out.push(v);
        }
    }
    out
}

/// Deterministic random subset of `fraction * n` rows (at least one).
pub fn sample_fraction(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid(format!("fraction {fraction} outside (0, 1]"));
    }
    let n = data.len();
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    data.subset(&idx)
}
