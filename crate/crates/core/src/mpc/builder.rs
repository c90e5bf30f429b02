//! Condensed QP construction.
//!
//! Constraint rows come in runs of `N` consecutive stages so a row's stage
//! is its index modulo `N`; the controller relies on this to shift active
//! sets between steps. Run order: AV-AV gaps (one run per follower),
//! AV-HV gap, then per AV: velocity upper, velocity lower, acceleration
//! upper, acceleration lower.

use nalgebra::{DMatrix, DVector};

use super::qp::QuadraticProgram;
use super::MpcConfig;
use crate::dynamics::{tightened_min_gap, AvState, HvBelief};
use crate::error::{invalid, PlatoonError, Result};
use crate::hv::LAGS;

/// Measured platoon state. `hv.v_hist.hv` holds the nominal ARX chain and
/// `hv.v_hist.av` the trailing AV velocities, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonState {
    pub av: Vec<AvState>,
    pub hv: HvBelief,
}

/// GP mean and variance frozen per transition `i = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenGpTrajectory {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl FrozenGpTrajectory {
    pub fn zeros(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            var: vec![0.0; n],
        }
    }
}

/// `c + g . u`
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub c: f64,
    pub g: DVector<f64>,
}

impl Affine {
    fn constant(c: f64, n: usize) -> Self {
        Self { c, g: DVector::zeros(n) }
    }

    fn add_scaled(&self, other: &Affine, s: f64) -> Self {
        Self {
            c: self.c + s * other.c,
            g: &self.g + &other.g * s,
        }
    }

    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        self.c + self.g.dot(u)
    }
}

/// A built program plus the affine predictions it was derived from.
#[derive(Debug, Clone)]
pub struct MpcQp {
    pub qp: QuadraticProgram,
    /// `v[a][i]`, `p[a][i]` for stages `0..=N`.
    pub v: Vec<Vec<Affine>>,
    pub p: Vec<Vec<Affine>>,
    /// Nominal ARX chain `x_i`, stages `0..=N`.
    pub hv_chain: Vec<Affine>,
    /// HV position mean, stages `0..=N`.
    pub mu_p: Vec<Affine>,
    /// HV position variance, stages `0..=N` (constants).
    pub sigma_p: Vec<f64>,
    /// Right-hand side of the AV-HV gap row, stages `1..=N`.
    pub gap_bounds: Vec<f64>,
}

impl MpcQp {
    pub fn n_rows_av_gap(cfg: &MpcConfig) -> usize {
        cfg.horizon * (cfg.n_av - 1)
    }
}

fn check_inputs(state: &PlatoonState, cfg: &MpcConfig, v_ref: &[f64]) -> Result<()> {
    cfg.validate()?;
    if state.av.len() != cfg.n_av {
        return Err(PlatoonError::DimensionMismatch {
            expected: cfg.n_av,
            got: state.av.len(),
        });
    }
    if v_ref.len() != cfg.horizon {
        return Err(PlatoonError::DimensionMismatch {
            expected: cfg.horizon,
            got: v_ref.len(),
        });
    }
    let finite = state.av.iter().all(|s| s.p.is_finite() && s.v.is_finite())
        && state.hv.mu_p.is_finite()
        && v_ref.iter().all(|v| v.is_finite());
    if !finite {
        return invalid("non-finite state or reference");
    }
    Ok(())
}

/// GP-MPC program. With `frozen` all zero it coincides with
/// [`build_nominal_qp`].
pub fn build_gp_qp(state: &PlatoonState, frozen: &FrozenGpTrajectory, cfg: &MpcConfig, v_ref: &[f64]) -> Result<MpcQp> {
    check_inputs(state, cfg, v_ref)?;
    let big_n = cfg.horizon;
    if frozen.mean.len() != big_n || frozen.var.len() != big_n {
        return Err(PlatoonError::DimensionMismatch {
            expected: big_n,
            got: frozen.mean.len().min(frozen.var.len()),
        });
    }
    if frozen.var.iter().any(|&s| !(s >= 0.0)) || frozen.mean.iter().any(|m| !m.is_finite()) {
        return invalid("frozen GP terms must be finite with non-negative variance");
    }
    let n = cfg.n_vars();
    let t = cfg.t_step;
    let n_av = cfg.n_av;

    // AV kinematics.
    let mut v: Vec<Vec<Affine>> = Vec::with_capacity(n_av);
    let mut p: Vec<Vec<Affine>> = Vec::with_capacity(n_av);
    for (a, s) in state.av.iter().enumerate() {
        let mut va = vec![Affine::constant(s.v, n)];
        let mut pa = vec![Affine::constant(s.p, n)];
        for i in 0..big_n {
            let mut next_v = va[i].clone();
            next_v.g[a * big_n + i] += t;
            pa.push(pa[i].add_scaled(&va[i], t));
            va.push(next_v);
        }
        v.push(va);
        p.push(pa);
    }

    // Nominal HV chain driven by the planned trailing-AV velocity.
    let trail = n_av - 1;
    let hist = &state.hv.v_hist;
    let lag = |i: isize, chain: &[Affine], own: bool| -> Affine {
        if i >= 1 {
            if own {
                chain[i as usize].clone()
            } else {
                v[trail][i as usize].clone()
            }
        } else {
            let k = (-i) as usize;
            Affine::constant(if own { hist.hv[k] } else { hist.av[k] }, n)
        }
    };
    let mut chain = vec![Affine::constant(hist.hv[0], n)];
    for i in 1..=big_n as isize {
        let mut x = Affine::constant(0.0, n);
        for l in 1..=LAGS as isize {
            x = x.add_scaled(&lag(i - l, &chain, true), -cfg.arx.c[(l - 1) as usize]);
            x = x.add_scaled(&lag(i - l, &chain, false), cfg.arx.b[(l - 1) as usize]);
        }
        chain.push(x);
    }

    // HV position belief.
    let mut mu = vec![Affine::constant(state.hv.mu_p, n)];
    let mut sigma = vec![state.hv.sigma_p.max(0.0)];
    for i in 0..big_n {
        let mut next = mu[i].add_scaled(&chain[i], t);
        next.c += t * frozen.mean[i];
        mu.push(next);
        sigma.push(sigma[i] + t * t * frozen.var[i]);
    }
    let gap_bounds: Vec<f64> = (1..=big_n).map(|i| tightened_min_gap(&cfg.gap_params, sigma[i])).collect::<Result<_>>()?;

    // Cost.
    let mut h = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    let mut c0 = 0.0;
    let mut add_square = |e: &Affine, w: f64| {
        h.ger(2.0 * w, &e.g, &e.g, 1.0);
        f.axpy(2.0 * w * e.c, &e.g, 1.0);
        c0 += w * e.c * e.c;
    };
    for i in 1..=big_n {
        let mut dev = v[0][i].clone();
        dev.c -= v_ref[i - 1];
        add_square(&dev, cfg.q1);
        for a in 1..n_av {
            add_square(&v[a][i].add_scaled(&v[a - 1][i], -1.0), cfg.q2);
        }
    }
    for k in 0..n {
        h[(k, k)] += 2.0 * cfg.r;
    }

    // Inequalities `row . u <= rhs`, built from `expr >= lo` or `expr <= hi`.
    let n_rows = big_n * (n_av - 1) + big_n + 4 * big_n * n_av;
    let mut a_in = DMatrix::zeros(n_rows, n);
    let mut b_in = DVector::zeros(n_rows);
    let mut row = 0;
    let mut at_least = |e: &Affine, lo: f64, row: &mut usize| {
        a_in.row_mut(*row).copy_from(&(-&e.g).transpose());
        b_in[*row] = e.c - lo;
        *row += 1;
    };
    for a in 1..n_av {
        for i in 1..=big_n {
            at_least(&p[a - 1][i].add_scaled(&p[a][i], -1.0), cfg.av_gap, &mut row);
        }
    }
    for i in 1..=big_n {
        at_least(&p[trail][i].add_scaled(&mu[i], -1.0), gap_bounds[i - 1], &mut row);
    }
    let neg = |e: &Affine| Affine { c: -e.c, g: -&e.g };
    for a in 0..n_av {
        for i in 1..=big_n {
            at_least(&neg(&v[a][i]), -cfg.v_max, &mut row);
        }
        for i in 1..=big_n {
            at_least(&v[a][i], cfg.v_min, &mut row);
        }
        for i in 0..big_n {
            let mut e = Affine::constant(0.0, n);
            e.g[a * big_n + i] = -1.0;
            at_least(&e, -cfg.acc_max, &mut row);
        }
        for i in 0..big_n {
            let mut e = Affine::constant(0.0, n);
            e.g[a * big_n + i] = 1.0;
            at_least(&e, cfg.acc_min, &mut row);
        }
    }
    debug_assert_eq!(row, n_rows);

    let mut qp = QuadraticProgram::new(h, f)?.with_inequalities(a_in, b_in)?;
    qp.constant = c0;
    Ok(MpcQp {
        qp,
        v,
        p,
        hv_chain: chain,
        mu_p: mu,
        sigma_p: sigma,
        gap_bounds,
    })
}

/// Baseline program: ARX-only HV prediction and a fixed AV-HV gap.
pub fn build_nominal_qp(state: &PlatoonState, cfg: &MpcConfig, v_ref: &[f64]) -> Result<MpcQp> {
    build_gp_qp(state, &FrozenGpTrajectory::zeros(cfg.horizon), cfg, v_ref)
}

/// Evaluated stage trajectories of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTrajectory {
    pub v: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub hv_chain: Vec<f64>,
    pub mu_p: Vec<f64>,
}

pub fn predict_plan(m: &MpcQp, u: &DVector<f64>) -> PlanTrajectory {
    let ev = |xs: &Vec<Affine>| xs.iter().map(|e| e.eval(u)).collect::<Vec<f64>>();
    PlanTrajectory {
        v: m.v.iter().map(ev).collect(),
        p: m.p.iter().map(ev).collect(),
        hv_chain: ev(&m.hv_chain),
        mu_p: ev(&m.mu_p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GapConstraintParams;
    use crate::hv::VelocityHistory;

    fn state(vs: &[f64], v_hv: f64) -> PlatoonState {
        let av = vs.iter().enumerate().map(|(a, &v)| AvState { p: -12.0 * a as f64, v }).collect();
        PlatoonState {
            av,
            hv: HvBelief {
                mu_p: -12.0 * vs.len() as f64,
                sigma_p: 0.0,
                v_hist: VelocityHistory::constant(v_hv),
            },
        }
    }

    #[test]
    fn row_count() {
        for n_av in 1..4 {
            let cfg = MpcConfig { n_av, horizon: 7, ..Default::default() };
            let m = build_nominal_qp(&state(&vec![5.0; n_av], 5.0), &cfg, &[5.0; 7]).unwrap();
            assert_eq!(m.qp.a_in.nrows(), 7 * (n_av - 1) + 7 + 4 * 7 * n_av);
            assert_eq!(m.qp.dim(), 7 * n_av);
        }
    }

    #[test]
    fn cost_at_zero_input_by_hand() {
        let cfg = MpcConfig { n_av: 2, horizon: 2, ..Default::default() };
        let s = state(&[10.0, 9.0], 9.0);
        let m = build_nominal_qp(&s, &cfg, &[12.0, 11.0]).unwrap();
        let zero = DVector::zeros(4);
        // Leader deviations (10-12)^2 + (10-11)^2, follower mismatch 2 * (9-10)^2.
        let hand = 5.0 * (4.0 + 1.0) + 5.0 * 2.0;
        assert!((m.qp.objective(&zero) - hand).abs() < 1e-12);
    }

    #[test]
    fn gp_terms_shift_mean_and_widen_bounds() {
        let cfg = MpcConfig { n_av: 1, horizon: 5, ..Default::default() };
        let s = state(&[10.0], 10.0);
        let nominal = build_nominal_qp(&s, &cfg, &[10.0; 5]).unwrap();
        let frozen = FrozenGpTrajectory {
            mean: vec![0.5; 5],
            var: vec![0.04; 5],
        };
        let gp = build_gp_qp(&s, &frozen, &cfg, &[10.0; 5]).unwrap();
        for i in 1..=5 {
            let expect = 10.0 + 1.6448536 * (i as f64 * 4e-4).sqrt();
            assert!((gp.gap_bounds[i - 1] - expect).abs() < 1e-6);
            assert!(gp.gap_bounds[i - 1] > nominal.gap_bounds[i - 1]);
            assert!((gp.mu_p[i].c - nominal.mu_p[i].c - i as f64 * 0.1 * 0.5).abs() < 1e-12);
        }
        let zero = build_gp_qp(&s, &FrozenGpTrajectory::zeros(5), &cfg, &[10.0; 5]).unwrap();
        assert_eq!(zero.qp, nominal.qp);
    }

    #[test]
    fn rejects_bad_sizes() {
        let cfg = MpcConfig::default();
        assert!(build_nominal_qp(&state(&[1.0], 1.0), &cfg, &[0.0; 20]).is_err());
        assert!(build_nominal_qp(&state(&[1.0, 1.0], 1.0), &cfg, &[0.0; 3]).is_err());
        let bad = MpcConfig {
            gap_params: GapConstraintParams { p_def: 1.5, ..Default::default() },
            ..Default::default()
        };
        assert!(build_nominal_qp(&state(&[1.0, 1.0], 1.0), &bad, &[0.0; 20]).is_err());
    }
}
