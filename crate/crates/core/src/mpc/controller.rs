//! Receding-horizon controller with frozen GP terms.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use super::builder::{build_gp_qp, predict_plan, FrozenGpTrajectory, PlatoonState};
use super::qp::{solve_qp, QpStatus};
use super::MpcConfig;
use crate::error::{PlatoonError, Result};
use crate::gp::SparseGpModel;
use crate::numfmt;

#[derive(Debug, Clone)]
pub enum ControllerKind {
    Nominal,
    Gp(Arc<SparseGpModel>),
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Nominal => "nominal",
            ControllerKind::Gp(_) => "gp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `acc[a][i]`, `i = 0..N`.
    pub acc: Vec<Vec<f64>>,
    /// `v[a][i]`, `p[a][i]`, `i = 0..=N`.
    pub v: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub hv_chain: Vec<f64>,
    pub mu_p: Vec<f64>,
    pub sigma_p: Vec<f64>,
    /// AV-HV gap bound for stages `1..=N`.
    pub gap_bounds: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub solve_time: f64,
    pub objective: f64,
    /// Maximal braking was applied because the QP had no usable solution.
    pub fallback: bool,
    pub most_violated: Option<usize>,
    pub active: Vec<usize>,
}

/// GP input pairs `(x, v_trailing)` per transition. Transition `i` uses the
/// pair one step before it: transition 0 takes the measured lag, later ones
/// take the previous plan's stage `i` (the same absolute time). Without a
/// previous plan the newest measured pair is repeated.
pub fn frozen_pairs(prev: Option<&MpcSolution>, state: &PlatoonState, horizon: usize) -> Vec<[f64; 2]> {
    let hist = &state.hv.v_hist;
    let mut pairs = Vec::with_capacity(horizon);
    pairs.push([hist.hv[1], hist.av[1]]);
    for i in 1..horizon {
        let pair = match prev {
            Some(s) => {
                let trail = s.v.len() - 1;
                let k = i.min(s.hv_chain.len() - 1);
                [s.hv_chain[k], s.v[trail][k]]
            }
            None => [hist.hv[0], hist.av[0]],
        };
        pairs.push(pair);
    }
    pairs
}

/// One batched sparse-GP prediction along `pairs`.
pub fn evaluate_gp_along_trajectory(gp: &SparseGpModel, pairs: &[[f64; 2]]) -> Result<FrozenGpTrajectory> {
    let preds = gp.predict_batch(pairs)?;
    Ok(FrozenGpTrajectory {
        mean: preds.iter().map(|p| p.0).collect(),
        var: preds.iter().map(|p| p.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub k: usize,
    pub solve_time: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub min_gap_bound: f64,
    pub sigma_terminal: f64,
}

impl StepDiagnostics {
    pub const HEADER: &'static str = "k,solve_time_s,status,iters,min_gap_bound,sigma_terminal";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.k,
            numfmt::out(self.solve_time),
            self.status.as_str(),
            self.iterations,
            numfmt::out(self.min_gap_bound),
            numfmt::out(self.sigma_terminal)
        )
    }

    pub fn write_csv<W: Write>(rows: &[StepDiagnostics], mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for r in rows {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MpcController {
    pub cfg: MpcConfig,
    pub kind: ControllerKind,
    prev: Option<MpcSolution>,
    /// Number of batched GP evaluations so far.
    pub gp_batches: usize,
    pub gp_points: usize,
    pub steps: usize,
    pub fallbacks: usize,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, kind: ControllerKind) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            kind,
            prev: None,
            gp_batches: 0,
            gp_points: 0,
            steps: 0,
            fallbacks: 0,
        })
    }

    pub fn previous(&self) -> Option<&MpcSolution> {
        self.prev.as_ref()
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Frozen GP terms for this step; one batch call in GP mode.
    fn frozen(&mut self, state: &PlatoonState) -> Result<FrozenGpTrajectory> {
        let n = self.cfg.horizon;
        match &self.kind {
            ControllerKind::Nominal => Ok(FrozenGpTrajectory::zeros(n)),
            ControllerKind::Gp(gp) => {
                let pairs = frozen_pairs(self.prev.as_ref(), state, n);
                let out = evaluate_gp_along_trajectory(gp, &pairs)?;
                self.gp_batches += 1;
                self.gp_points += pairs.len();
                Ok(out)
            }
        }
    }

    /// Active rows of the previous solve moved one stage earlier.
    fn shifted_hint(&self) -> Vec<usize> {
        let n = self.cfg.horizon;
        self.prev
            .as_ref()
            .map(|s| s.active.iter().filter(|&&r| r % n != 0).map(|&r| r - 1).collect())
            .unwrap_or_default()
    }

    /// Solves the program for `state` and returns the first acceleration of
    /// each AV together with the full plan.
    pub fn step(&mut self, state: &PlatoonState, v_ref: &[f64]) -> Result<(Vec<f64>, MpcSolution)> {
        let start = Instant::now();
        let frozen = self.frozen(state)?;
        let m = build_gp_qp(state, &frozen, &self.cfg, v_ref)?;
        let hint = self.shifted_hint();
        let qs = solve_qp(&m.qp, &self.cfg.qp, &hint)?;
        let usable = qs.status == QpStatus::Optimal && m.qp.max_violation(&qs.x) <= self.cfg.qp.tol;
        let (u, fallback) = if usable {
            (qs.x.clone(), false)
        } else {
            log::warn!("QP {}; applying maximal braking", qs.status.as_str());
            (DVector::from_element(self.cfg.n_vars(), self.cfg.acc_min), true)
        };
        let plan = predict_plan(&m, &u);
        let n = self.cfg.horizon;
        let acc: Vec<Vec<f64>> = (0..self.cfg.n_av).map(|a| u.rows(a * n, n).iter().copied().collect()).collect();
        let first: Vec<f64> = acc.iter().map(|row| row[0]).collect();
        let solve_time = start.elapsed().as_secs_f64();
        let sol = MpcSolution {
            acc,
            v: plan.v,
            p: plan.p,
            hv_chain: plan.hv_chain,
            mu_p: plan.mu_p,
            sigma_p: m.sigma_p.clone(),
            gap_bounds: m.gap_bounds.clone(),
            status: qs.status,
            iterations: qs.iterations,
            solve_time,
            objective: m.qp.objective(&u),
            fallback,
            most_violated: qs.most_violated,
            active: if fallback { Vec::new() } else { qs.active },
        };
        self.steps += 1;
        if fallback {
            self.fallbacks += 1;
        }
        self.prev = Some(sol.clone());
        if first.iter().any(|a| !a.is_finite()) {
            return Err(PlatoonError::Numerical("controller produced a non-finite acceleration".into()));
        }
        Ok((first, sol))
    }

    pub fn diagnostics(&self, k: usize, sol: &MpcSolution) -> StepDiagnostics {
        StepDiagnostics {
            k,
            solve_time: sol.solve_time,
            status: sol.status,
            iterations: sol.iterations,
            min_gap_bound: sol.gap_bounds.iter().copied().fold(f64::INFINITY, f64::min),
            sigma_terminal: *sol.sigma_p.last().unwrap_or(&0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AvState, HvBelief};
    use crate::gp::{Dataset, KernelHyper};
    use crate::hv::VelocityHistory;

    fn rest_state(n_av: usize) -> PlatoonState {
        PlatoonState {
            av: (0..n_av).map(|a| AvState { p: -12.0 * a as f64, v: 0.0 }).collect(),
            hv: HvBelief {
                mu_p: -12.0 * n_av as f64,
                sigma_p: 0.0,
                v_hist: VelocityHistory::constant(0.0),
            },
        }
    }

    fn small_gp() -> Arc<SparseGpModel> {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, i as f64 + 0.5 * ((i % 3) as f64 - 1.0)]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| 0.3 * (0.5 * (r[1] - r[0])).tanh()).collect();
        let data = Dataset::from_rows(&rows, &ys).unwrap();
        let h = KernelHyper::new(0.1, vec![4.0, 4.0], 0.01).unwrap();
        Arc::new(SparseGpModel::from_inducing(&data, data.inputs.rows(0, 10).into_owned(), h).unwrap())
    }

    #[test]
    fn rest_stays_at_rest() {
        let mut c = MpcController::new(MpcConfig::default(), ControllerKind::Nominal).unwrap();
        let (acc, sol) = c.step(&rest_state(2), &[0.0; 20]).unwrap();
        assert!(acc.iter().all(|a| a.abs() < 1e-9), "{acc:?}");
        assert_eq!(sol.status, QpStatus::Optimal);
    }

    #[test]
    fn one_gp_batch_per_step() {
        let mut c = MpcController::new(MpcConfig::default(), ControllerKind::Gp(small_gp())).unwrap();
        let mut s = rest_state(2);
        for k in 0..5 {
            let (_, sol) = c.step(&s, &[5.0; 20]).unwrap();
            assert_eq!(c.gp_batches, k + 1);
            assert_eq!(c.gp_points, 20 * (k + 1));
            for a in 0..2 {
                s.av[a].v = sol.v[a][1];
                s.av[a].p = sol.p[a][1];
            }
        }
    }

    #[test]
    fn frozen_pairs_follow_previous_plan() {
        let s = PlatoonState {
            hv: HvBelief {
                v_hist: VelocityHistory::new([3.0, 2.0, 1.0, 0.5], [4.0, 3.5, 3.0, 2.0]).unwrap(),
                ..rest_state(1).hv
            },
            ..rest_state(1)
        };
        let first = frozen_pairs(None, &s, 4);
        assert_eq!(first, vec![[2.0, 3.5], [3.0, 4.0], [3.0, 4.0], [3.0, 4.0]]);
        let prev = MpcSolution {
            acc: vec![vec![0.0; 4]],
            v: vec![vec![10.0, 11.0, 12.0, 13.0, 14.0]],
            p: vec![vec![0.0; 5]],
            hv_chain: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            mu_p: vec![0.0; 5],
            sigma_p: vec![0.0; 5],
            gap_bounds: vec![10.0; 4],
            status: QpStatus::Optimal,
            iterations: 0,
            solve_time: 0.0,
            objective: 0.0,
            fallback: false,
            most_violated: None,
            active: vec![],
        };
        let pairs = frozen_pairs(Some(&prev), &s, 4);
        assert_eq!(pairs, vec![[2.0, 3.5], [2.0, 11.0], [3.0, 12.0], [4.0, 13.0]]);
        let gp = small_gp();
        let f = evaluate_gp_along_trajectory(&gp, &pairs).unwrap();
        for (i, p) in pairs.iter().enumerate() {
            assert_eq!((f.mean[i], f.var[i]), gp.predict(p).unwrap());
        }
    }

    #[test]
    fn infeasible_start_falls_back_to_braking() {
        // HV 2 m behind the trailing AV: the stage-1 gap row cannot hold.
        let mut s = rest_state(2);
        s.hv.mu_p = s.av[1].p - 2.0;
        let mut c = MpcController::new(MpcConfig::default(), ControllerKind::Nominal).unwrap();
        let (acc, sol) = c.step(&s, &[0.0; 20]).unwrap();
        assert!(sol.fallback);
        assert_eq!(acc, vec![-4.0, -4.0]);
        assert_eq!(c.fallbacks, 1);
    }

    #[test]
    fn diagnostics_line_format() {
        let d = StepDiagnostics {
            k: 3,
            solve_time: 0.00125,
            status: QpStatus::Optimal,
            iterations: 7,
            min_gap_bound: 10.5,
            sigma_terminal: 0.01,
        };
        assert_eq!(d.csv_line(), "3,0.00125,optimal,7,10.5,0.01");
    }
}
