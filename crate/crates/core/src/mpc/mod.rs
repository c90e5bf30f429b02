//! Nominal and GP-corrected MPC for a platoon of AVs followed by one HV.
//!
//! Decision variables are the AV accelerations `u[a * N + i]`, AV `a`
//! (leader first), step `i = 0..N`. Every predicted quantity is an affine
//! function of `u`, so with the GP terms frozen along the previous plan the
//! problem is a dense convex QP.

pub mod builder;
pub mod controller;
pub mod qp;

pub use builder::{build_gp_qp, build_nominal_qp, predict_plan, FrozenGpTrajectory, MpcQp, PlatoonState};
pub use controller::{evaluate_gp_along_trajectory, frozen_pairs, ControllerKind, MpcController, MpcSolution, StepDiagnostics};
pub use qp::{solve_qp, QpOptions, QpSolution, QpStatus, QuadraticProgram};

use crate::dynamics::GapConstraintParams;
use crate::error::{invalid, Result};
use crate::hv::ArxParams;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub t_step: f64,
    pub q1: f64,
    pub q2: f64,
    pub r: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub acc_min: f64,
    pub acc_max: f64,
    /// Minimum gap between consecutive AVs.
    pub av_gap: f64,
    pub gap_params: GapConstraintParams,
    pub n_av: usize,
    pub arx: ArxParams,
    pub qp: QpOptions,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            t_step: 0.1,
            q1: 5.0,
            q2: 5.0,
            r: 10.0,
            v_min: 0.0,
            v_max: 37.0,
            acc_min: -4.0,
            acc_max: 4.0,
            av_gap: 10.0,
            gap_params: GapConstraintParams::default(),
            n_av: 2,
            arx: ArxParams::default(),
            qp: QpOptions::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        self.gap_params.validate()?;
        if self.horizon < 2 {
            return invalid("horizon must be at least 2");
        }
        if !(self.t_step > 0.0) {
            return invalid("time step must be positive");
        }
        if !(self.q1 > 0.0 && self.q2 > 0.0 && self.r > 0.0) {
            return invalid("weights must be positive");
        }
        if !(self.v_min < self.v_max) || !(self.acc_min < self.acc_max) {
            return invalid("bounds must be ordered");
        }
        if !(self.av_gap > 0.0) || self.n_av == 0 {
            return invalid("need at least one AV and a positive AV gap");
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.n_av * self.horizon
    }
}
