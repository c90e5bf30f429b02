//! Closed-loop driver.

use std::io::Write;
use std::sync::Arc;

use crate::dynamics::{av_step, AvState, HvBelief};
use crate::error::{invalid, PlatoonError, Result};
use crate::gp::SparseGpModel;
use crate::mpc::{ControllerKind, MpcController, PlatoonState, StepDiagnostics};
use crate::numfmt;

use super::plant::{Discrepancy, HvPlant, NoiseSettings};
use super::scenario::{PlantMode, ScenarioSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// The QP had no usable solution; all AVs braked at `acc_min`.
    Fallback,
    /// An AV velocity left `[v_min, v_max]` and was clamped.
    Clamp { vehicle: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub k: usize,
    pub kind: EventKind,
    pub detail: String,
}

/// Per-step record of a run. Row `k` holds the state at `t = k T` and the
/// acceleration applied over `[k T, (k + 1) T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub scenario: String,
    pub controller: String,
    pub t_step: f64,
    pub time: Vec<f64>,
    /// `[vehicle][k]` for the AVs, leader first.
    pub p_av: Vec<Vec<f64>>,
    pub v_av: Vec<Vec<f64>>,
    pub acc_av: Vec<Vec<f64>>,
    pub p_hv: Vec<f64>,
    pub v_hv: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub events: Vec<SimEvent>,
    pub gp_batches: usize,
    pub initial_av: Vec<AvState>,
    pub initial_hv: f64,
    /// State after the last step.
    pub final_av: Vec<AvState>,
    pub final_hv: (f64, f64),
}

impl SimResult {
    pub fn steps(&self) -> usize {
        self.time.len()
    }

    pub fn n_av(&self) -> usize {
        self.p_av.len()
    }

    /// Smallest gap between consecutive AVs at step `k`, if there are two.
    pub fn gap_av(&self, k: usize) -> Option<f64> {
        (1..self.n_av()).map(|a| self.p_av[a - 1][k] - self.p_av[a][k]).reduce(f64::min)
    }

    pub fn gap_hv(&self, k: usize) -> f64 {
        self.p_av[self.n_av() - 1][k] - self.p_hv[k]
    }

    pub fn final_gap_av(&self) -> Option<f64> {
        (1..self.n_av()).map(|a| self.final_av[a - 1].p - self.final_av[a].p).reduce(f64::min)
    }

    pub fn final_gap_hv(&self) -> f64 {
        self.final_av[self.n_av() - 1].p - self.final_hv.0
    }

    pub fn fallbacks(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Fallback).count()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for a in 1..=self.n_av() {
            cols.extend([format!("p_av{a}"), format!("v_av{a}"), format!("acc_av{a}")]);
        }
        cols.extend(["p_hv", "v_hv", "gap_av", "gap_hv", "solve_time"].map(String::from));
        cols.join(",")
    }

    /// Writes the trajectory table. Solve times are wall-clock and so only
    /// written when `timing` is set; otherwise the column is empty.
    pub fn write_csv<W: Write>(&self, mut w: W, timing: bool) -> Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for k in 0..self.steps() {
            let mut line = numfmt::out(self.time[k]);
            for a in 0..self.n_av() {
                for x in [self.p_av[a][k], self.v_av[a][k], self.acc_av[a][k]] {
                    line.push(',');
                    line.push_str(&numfmt::out(x));
                }
            }
            line.push(',');
            line.push_str(&numfmt::out(self.p_hv[k]));
            line.push(',');
            line.push_str(&numfmt::out(self.v_hv[k]));
            line.push(',');
            if let Some(g) = self.gap_av(k) {
                line.push_str(&numfmt::out(g));
            }
            line.push(',');
            line.push_str(&numfmt::out(self.gap_hv(k)));
            line.push(',');
            if timing {
                line.push_str(&numfmt::out(self.diagnostics[k].solve_time));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_events<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,event,detail")?;
        for e in &self.events {
            let kind = match e.kind {
                EventKind::Fallback => "fallback".to_string(),
                EventKind::Clamp { vehicle } => format!("clamp_av{}", vehicle + 1),
            };
            writeln!(w, "{},{},{}", e.k, kind, e.detail.replace(',', ";"))?;
        }
        Ok(())
    }

    /// Diagnostics table; without `timing` the solve-time column is empty.
    pub fn write_diagnostics<W: Write>(&self, mut w: W, timing: bool) -> Result<()> {
        if timing {
            return StepDiagnostics::write_csv(&self.diagnostics, w);
        }
        writeln!(w, "{}", StepDiagnostics::HEADER)?;
        for d in &self.diagnostics {
            let line = d.csv_line();
            let (k, rest) = line.split_once(',').unwrap_or((&line, ""));
            let rest = rest.split_once(',').map(|x| x.1).unwrap_or("");
            writeln!(w, "{k},,{rest}")?;
        }
        Ok(())
    }
}

fn check_finite(r: &SimResult) -> Result<()> {
    let all = r
        .p_av
        .iter()
        .chain(&r.v_av)
        .chain(&r.acc_av)
        .flatten()
        .chain(&r.p_hv)
        .chain(&r.v_hv);
    if all.clone().any(|x| !x.is_finite()) {
        return Err(PlatoonError::Numerical("simulation produced a non-finite value".into()));
    }
    Ok(())
}

/// Runs `spec` with the given controller. Model-mode plants replay the GP
/// in `plant_gp`.
pub fn run_closed_loop(spec: &ScenarioSpec, controller: ControllerKind, plant_gp: Option<Arc<SparseGpModel>>) -> Result<SimResult> {
    spec.validate()?;
    let cfg = &spec.mpc;
    let t = cfg.t_step;
    let n = cfg.horizon;
    let n_av = cfg.n_av;
    let steps = spec.steps();
    let v_ref = spec.reference()?;

    let disc = match spec.plant {
        PlantMode::Model => match plant_gp {
            Some(gp) => Discrepancy::Gp(gp),
            None => return invalid("model-mode plant needs a GP model"),
        },
        PlantMode::Truth => Discrepancy::Truth {
            gain: spec.g_gain,
            slope: spec.g_slope,
            drift: spec.g_drift,
        },
    };
    let noise = NoiseSettings {
        enabled: spec.noise,
        std: spec.noise_std,
        ref_speed: spec.noise_ref_speed,
        seed: spec.seed,
    };

    let mut av: Vec<AvState> = (0..n_av)
        .map(|a| AvState {
            p: -(a as f64) * spec.initial_spacing,
            v: 0.0,
        })
        .collect();
    let mut hv = HvPlant::at_rest(-(n_av as f64) * spec.initial_spacing, cfg.arx, disc, noise)?;
    let controller_name = controller.name().to_string();
    let mut ctrl = MpcController::new(cfg.clone(), controller)?;

    let mut r = SimResult {
        scenario: spec.name.clone(),
        controller: controller_name,
        t_step: t,
        time: Vec::with_capacity(steps),
        p_av: vec![Vec::with_capacity(steps); n_av],
        v_av: vec![Vec::with_capacity(steps); n_av],
        acc_av: vec![Vec::with_capacity(steps); n_av],
        p_hv: Vec::with_capacity(steps),
        v_hv: Vec::with_capacity(steps),
        diagnostics: Vec::with_capacity(steps),
        events: Vec::new(),
        gp_batches: 0,
        initial_av: av.clone(),
        initial_hv: hv.p,
        final_av: Vec::new(),
        final_hv: (0.0, 0.0),
    };

    for k in 0..steps {
        let state = PlatoonState {
            av: av.clone(),
            hv: HvBelief {
                mu_p: hv.p,
                sigma_p: 0.0,
                v_hist: hv.hist,
            },
        };
        let (acc, sol) = ctrl.step(&state, &v_ref[k + 1..=k + n])?;
        if sol.fallback {
            r.events.push(SimEvent {
                k,
                kind: EventKind::Fallback,
                detail: format!("QP {}", sol.status.as_str()),
            });
        }
        r.time.push(k as f64 * t);
        for a in 0..n_av {
            r.p_av[a].push(av[a].p);
            r.v_av[a].push(av[a].v);
            r.acc_av[a].push(acc[a]);
        }
        r.p_hv.push(hv.p);
        r.v_hv.push(hv.v);
        r.diagnostics.push(ctrl.diagnostics(k, &sol));

        for (a, s) in av.iter_mut().enumerate() {
            let mut next = av_step(*s, acc[a], t);
            let clamped = next.v.clamp(cfg.v_min, cfg.v_max);
            if (clamped - next.v).abs() > 1e-9 {
                r.events.push(SimEvent {
                    k,
                    kind: EventKind::Clamp { vehicle: a },
                    detail: format!("v {} clamped to {}", numfmt::out(next.v), numfmt::out(clamped)),
                });
            }
            next.v = clamped;
            *s = next;
        }
        hv.step(av[n_av - 1].v, t)?;
    }
    r.gp_batches = ctrl.gp_batches;
    r.final_av = av;
    r.final_hv = (hv.p, hv.v);
    check_finite(&r)?;
    Ok(r)
}
