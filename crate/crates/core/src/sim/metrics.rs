//! Run summaries.

use crate::error::{invalid, Result};
use crate::kv::KvFile;
use crate::numfmt;

use super::run::SimResult;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingStats {
    pub mean: f64,
    pub max: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Final minus initial position, AVs leader first, then the HV.
    pub traveled: Vec<f64>,
    pub min_gap_av: Option<f64>,
    pub min_gap_hv: f64,
    pub timing: TimingStats,
    pub steps: usize,
    pub fallbacks: usize,
    pub clamps: usize,
    pub gp_batches: usize,
}

pub fn compute_metrics(r: &SimResult) -> Result<Metrics> {
    if r.steps() == 0 {
        return invalid("metrics of an empty run");
    }
    let mut traveled: Vec<f64> = r.final_av.iter().zip(&r.initial_av).map(|(f, i)| f.p - i.p).collect();
    traveled.push(r.final_hv.0 - r.initial_hv);

    let min_gap_av = (0..r.steps()).filter_map(|k| r.gap_av(k)).chain(r.final_gap_av()).reduce(f64::min);
    let min_gap_hv = (0..r.steps()).map(|k| r.gap_hv(k)).fold(r.final_gap_hv(), f64::min);

    let times: Vec<f64> = r.diagnostics.iter().map(|d| d.solve_time).collect();
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(Metrics {
        traveled,
        min_gap_av,
        min_gap_hv,
        timing: TimingStats {
            mean,
            max: times.iter().copied().fold(0.0, f64::max),
            std: var.sqrt(),
        },
        steps: r.steps(),
        fallbacks: r.fallbacks(),
        clamps: r.events.len() - r.fallbacks(),
        gp_batches: r.gp_batches,
    })
}

impl Metrics {
    /// Flat key-value export. Timing keys are wall-clock measurements and
    /// are only included when `timing` is set.
    pub fn to_kv(&self, timing: bool) -> KvFile {
        let mut kv = KvFile::new();
        let n_av = self.traveled.len() - 1;
        for (a, d) in self.traveled[..n_av].iter().enumerate() {
            kv.set(&format!("traveled_av{}", a + 1), numfmt::out(*d));
        }
        kv.set("traveled_hv", numfmt::out(self.traveled[n_av]));
        if let Some(g) = self.min_gap_av {
            kv.set("min_gap_av", numfmt::out(g));
        }
        kv.set("min_gap_hv", numfmt::out(self.min_gap_hv));
        if timing {
            kv.set("solve_time_mean", numfmt::out(self.timing.mean));
            kv.set("solve_time_max", numfmt::out(self.timing.max));
            kv.set("solve_time_std", numfmt::out(self.timing.std));
        }
        kv.set("steps", self.steps.to_string());
        kv.set("fallbacks", self.fallbacks.to_string());
        kv.set("clamps", self.clamps.to_string());
        kv.set("gp_batches", self.gp_batches.to_string());
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AvState;
    use crate::mpc::{ControllerKind, QpStatus, StepDiagnostics};
    use crate::sim::{run_closed_loop, ScenarioSpec};

    #[test]
    fn stationary_run() {
        let r = run_closed_loop(&ScenarioSpec::rest(), ControllerKind::Nominal, None).unwrap();
        let m = compute_metrics(&r).unwrap();
        assert!(m.traveled.iter().all(|d| d.abs() < 1e-12));
        assert!((m.min_gap_hv - 12.0).abs() < 1e-12);
        assert!((m.min_gap_av.unwrap() - 12.0).abs() < 1e-12);
        assert_eq!((m.steps, m.fallbacks, m.clamps, m.gp_batches), (100, 0, 0, 0));
        assert!(m.to_kv(false).get("solve_time_mean").is_none());
        assert!(m.to_kv(true).get("solve_time_mean").is_some());
    }

    #[test]
    fn single_step_distance() {
        let diag = StepDiagnostics {
            k: 0,
            solve_time: 0.002,
            status: QpStatus::Optimal,
            iterations: 1,
            min_gap_bound: 10.0,
            sigma_terminal: 0.0,
        };
        let r = SimResult {
            scenario: "hand".into(),
            controller: "nominal".into(),
            t_step: 0.1,
            time: vec![0.0],
            p_av: vec![vec![0.0]],
            v_av: vec![vec![1.0]],
            acc_av: vec![vec![0.0]],
            p_hv: vec![-12.0],
            v_hv: vec![1.0],
            diagnostics: vec![diag],
            events: vec![],
            gp_batches: 0,
            initial_av: vec![AvState { p: 0.0, v: 1.0 }],
            initial_hv: -12.0,
            final_av: vec![AvState { p: 0.1, v: 1.0 }],
            final_hv: (-11.9, 1.0),
        };
        let m = compute_metrics(&r).unwrap();
        assert!((m.traveled[0] - 0.1).abs() < 1e-12);
        assert!((m.traveled[1] - 0.1).abs() < 1e-12);
        assert_eq!(m.min_gap_av, None);
        assert!((m.timing.mean - 0.002).abs() < 1e-15);
        assert_eq!(m.timing.std, 0.0);
    }
}
