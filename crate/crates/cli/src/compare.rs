//! Paired nominal vs GP-MPC runs and controller timing.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use platoon_core::numfmt;
use platoon_core::sim::{Metrics, ScenarioSpec};

use crate::args::ControllerArg;
use crate::simulate::{run, SimulateRequest};

#[derive(Debug, Clone)]
pub struct PairedRun {
    pub seed: u64,
    pub nominal: Metrics,
    pub gp: Metrics,
}

impl PairedRun {
    pub fn gap_delta(&self) -> f64 {
        self.gp.min_gap_hv - self.nominal.min_gap_hv
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub scenario: String,
    pub runs: Vec<PairedRun>,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn signed(x: f64) -> String {
    let s = numfmt::out(x);
    if x >= 0.0 { format!("+{s}") } else { s }
}

impl CompareReport {
    pub fn median_min_gap(&self, gp: bool) -> f64 {
        let v: Vec<f64> = self.runs.iter().map(|r| if gp { r.gp.min_gap_hv } else { r.nominal.min_gap_hv }).collect();
        median(&v)
    }

    /// GP median minus nominal median.
    pub fn median_delta(&self) -> f64 {
        self.median_min_gap(true) - self.median_min_gap(false)
    }

    pub fn mean_solve_time(&self, gp: bool) -> f64 {
        let v: Vec<f64> = self.runs.iter().map(|r| if gp { r.gp.timing.mean } else { r.nominal.timing.mean }).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// `(gp - nominal) / nominal` of the mean solve time, in percent.
    pub fn overhead_pct(&self) -> f64 {
        let nom = self.mean_solve_time(false);
        100.0 * (self.mean_solve_time(true) - nom) / nom
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# paired comparison: {}", self.scenario);
        let _ = writeln!(s, "seed,min_gap_hv_nominal,min_gap_hv_gp,delta,min_gap_av_nominal,min_gap_av_gp,fallbacks_nominal,fallbacks_gp,solve_mean_nominal,solve_mean_gp");
        let opt = |g: Option<f64>| g.map(numfmt::out).unwrap_or_default();
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.seed,
                numfmt::out(r.nominal.min_gap_hv),
                numfmt::out(r.gp.min_gap_hv),
                signed(r.gap_delta()),
                opt(r.nominal.min_gap_av),
                opt(r.gp.min_gap_av),
                r.nominal.fallbacks,
                r.gp.fallbacks,
                numfmt::out(r.nominal.timing.mean),
                numfmt::out(r.gp.timing.mean)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "median_min_gap_nominal = {}", numfmt::out(self.median_min_gap(false)));
        let _ = writeln!(s, "median_min_gap_gp = {}", numfmt::out(self.median_min_gap(true)));
        let _ = writeln!(s, "median_min_gap_delta = {}", signed(self.median_delta()));
        let _ = writeln!(s, "solve_time_mean_nominal = {}", numfmt::out(self.mean_solve_time(false)));
        let _ = writeln!(s, "solve_time_mean_gp = {}", numfmt::out(self.mean_solve_time(true)));
        let _ = writeln!(s, "timing_overhead_pct = {}", signed(self.overhead_pct()));
        s
    }
}

fn request(spec: &ScenarioSpec, controller: ControllerArg, model: &Option<PathBuf>) -> SimulateRequest {
    SimulateRequest {
        spec: spec.clone(),
        controller,
        model: model.clone(),
        plant_model: None,
        timing: true,
    }
}

fn paired(spec: &ScenarioSpec, model: &Option<PathBuf>, seed: u64) -> Result<PairedRun> {
    let mut s = spec.clone();
    s.seed = seed;
    let (_, nominal) = run(&request(&s, ControllerArg::Nominal, model))?;
    let (_, gp) = run(&request(&s, ControllerArg::Gp, model))?;
    Ok(PairedRun { seed, nominal, gp })
}

/// Runs both controllers for `seeds` consecutive plant seeds starting at the
/// scenario seed, on up to `jobs` threads.
pub fn compare(spec: &ScenarioSpec, model: Option<PathBuf>, seeds: u64, jobs: usize) -> Result<CompareReport> {
    if seeds == 0 {
        return Err(anyhow!("need at least one seed"));
    }
    let all: Vec<u64> = (0..seeds).map(|i| spec.seed + i).collect();
    let jobs = jobs.clamp(1, all.len());
    let mut runs = Vec::with_capacity(all.len());
    if jobs == 1 {
        for &seed in &all {
            runs.push(paired(spec, &model, seed)?);
        }
    } else {
        let chunks: Vec<Vec<u64>> = all.chunks(all.len().div_ceil(jobs)).map(<[u64]>::to_vec).collect();
        let results: Vec<Result<Vec<PairedRun>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    let model = &model;
                    scope.spawn(move || chunk.iter().map(|&seed| paired(spec, model, seed)).collect::<Result<Vec<_>>>())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("worker panicked")))).collect()
        });
        for r in results {
            runs.extend(r?);
        }
    }
    Ok(CompareReport {
        scenario: spec.name.clone(),
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub scenario: String,
    pub steps: usize,
    pub nominal_mean: f64,
    pub gp_mean: f64,
    pub nominal_max: f64,
    pub gp_max: f64,
    pub gp_batches: usize,
    pub nominal_batches: usize,
}

impl BenchReport {
    pub fn ratio(&self) -> f64 {
        self.gp_mean / self.nominal_mean
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# controller timing: {}", self.scenario);
        let _ = writeln!(s, "controller,ave_time_s,max_time_s,gp_batches_per_step");
        let per = |b: usize| numfmt::out(b as f64 / self.steps as f64);
        let _ = writeln!(s, "nominal,{},{},{}", numfmt::out(self.nominal_mean), numfmt::out(self.nominal_max), per(self.nominal_batches));
        let _ = writeln!(s, "gp,{},{},{}", numfmt::out(self.gp_mean), numfmt::out(self.gp_max), per(self.gp_batches));
        let _ = writeln!(s);
        let _ = writeln!(s, "gp_over_nominal = {}", numfmt::out(self.ratio()));
        let _ = writeln!(s, "timing_overhead_pct = {}", signed(100.0 * (self.ratio() - 1.0)));
        s
    }
}

/// Alternates nominal and GP runs `reps` times and averages the per-step
/// solve times. GP batch counts come from the last repetition.
pub fn bench(spec: &ScenarioSpec, model: Option<PathBuf>, reps: usize) -> Result<BenchReport> {
    if reps == 0 {
        return Err(anyhow!("need at least one repetition"));
    }
    let (mut nm, mut gm, mut nx, mut gx) = (0.0, 0.0, 0.0f64, 0.0f64);
    let mut last = None;
    for _ in 0..reps {
        let (_, n) = run(&request(spec, ControllerArg::Nominal, &model))?;
        let (_, g) = run(&request(spec, ControllerArg::Gp, &model))?;
        nm += n.timing.mean;
        gm += g.timing.mean;
        nx = nx.max(n.timing.max);
        gx = gx.max(g.timing.max);
        last = Some((n, g));
    }
    let (n, g) = last.expect("at least one repetition");
    Ok(BenchReport {
        scenario: spec.name.clone(),
        steps: g.steps,
        nominal_mean: nm / reps as f64,
        gp_mean: gm / reps as f64,
        nominal_max: nx,
        gp_max: gx,
        gp_batches: g.gp_batches,
        nominal_batches: n.gp_batches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn signed_keeps_sign() {
        assert_eq!(signed(0.5), "+0.5");
        assert_eq!(signed(-0.25), "-0.25");
    }
}
