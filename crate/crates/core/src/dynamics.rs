//! Vehicle kinematics, HV position belief propagation and gap tightening.

use crate::error::{invalid, Result};
use crate::gp::normal_quantile;
use crate::hv::VelocityHistory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvState {
    pub p: f64,
    pub v: f64,
}

/// Gaussian belief over the HV position plus its velocity lags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HvBelief {
    pub mu_p: f64,
    pub sigma_p: f64,
    pub v_hist: VelocityHistory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConstraintParams {
    pub delta: f64,
    pub delta_ext: f64,
    pub p_def: f64,
}

impl Default for GapConstraintParams {
    fn default() -> Self {
        Self {
            delta: 10.0,
            delta_ext: 0.0,
            p_def: 0.95,
        }
    }
}

impl GapConstraintParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.delta_ext >= 0.0) || !(self.p_def > 0.0 && self.p_def < 1.0) {
            return invalid(format!("bad gap parameters {self:?}"));
        }
        Ok(())
    }
}

/// Forward-Euler step; position advances with the pre-update velocity.
pub fn av_step(s: AvState, acc: f64, t: f64) -> AvState {
    AvState {
        p: s.p + t * s.v,
        v: s.v + t * acc,
    }
}

pub fn propagate_hv_mean(mu: f64, v_hv: f64, gp_mean: f64, t: f64) -> f64 {
    mu + t * v_hv + t * gp_mean
}

pub fn propagate_hv_variance(sigma: f64, gp_var: f64, t: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !(gp_var >= 0.0) {
        return invalid(format!("variances must be non-negative (sigma {sigma}, gp_var {gp_var})"));
    }
    Ok(sigma + t * t * gp_var)
}

/// Minimum AV-HV gap that holds with probability `p_def` when the HV
/// position has variance `sigma`.
pub fn tightened_min_gap(g: &GapConstraintParams, sigma: f64) -> Result<f64> {
    g.validate()?;
    if !(sigma >= 0.0) {
        return invalid(format!("negative position variance {sigma}"));
    }
    Ok(g.delta + g.delta_ext + normal_quantile(g.p_def)? * sigma.sqrt())
}

/// Generic half-space form `h' x <= b + q * sqrt(h' S h)` rearranged for the
/// state `x = (p_av, p_hv)` with `h = (-1, 1)` and `b = -delta_ext`, as a
/// bound on `p_av - mu_hv`. Only the HV entry of `S` is non-zero.
pub fn half_space_min_gap(g: &GapConstraintParams, sigma: f64) -> Result<f64> {
    let h = [-1.0, 1.0];
    let s = [[0.0, 0.0], [0.0, sigma]];
    let hsh: f64 = (0..2).map(|i| (0..2).map(|j| h[i] * s[i][j] * h[j]).sum::<f64>()).sum();
    let b = -g.delta_ext;
    Ok(g.delta - b + normal_quantile(g.p_def)? * hsh.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kinematics() {
        let s = AvState { p: 3.0, v: 0.0 };
        assert_eq!(av_step(s, 0.0, 0.1), s);
        let s1 = av_step(AvState { p: 0.0, v: 10.0 }, 2.0, 0.1);
        assert!((s1.v - 10.2).abs() < 1e-12 && (s1.p - 1.0).abs() < 1e-12);
        let s2 = av_step(s1, -2.0, 0.1);
        assert!((s2.v - 10.0).abs() < 1e-12);
        assert!((s2.p - (2.0 * 0.1 * 10.0 + 0.01 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn hv_propagation() {
        assert_eq!(propagate_hv_mean(4.0, 0.0, 0.0, 0.1), 4.0);
        assert!((propagate_hv_mean(0.0, 10.0, 0.5, 0.1) - 1.05).abs() < 1e-12);
        let mut mu = 2.0;
        for _ in 0..7 {
            mu = propagate_hv_mean(mu, 3.0, 0.2, 0.1);
        }
        assert!((mu - (2.0 + 7.0 * 0.1 * 3.2)).abs() < 1e-12);
        assert_eq!(propagate_hv_variance(0.3, 0.0, 0.1).unwrap(), 0.3);
        assert!((propagate_hv_variance(0.0, 0.04, 0.1).unwrap() - 4e-4).abs() < 1e-15);
        let mut s = 0.0;
        for _ in 0..5 {
            s = propagate_hv_variance(s, 0.04, 0.1).unwrap();
        }
        assert!((s - 5.0 * 4e-4).abs() < 1e-15);
        assert!(propagate_hv_variance(-1.0, 0.0, 0.1).is_err());
        assert!(propagate_hv_variance(0.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn tightening_values() {
        let g = GapConstraintParams::default();
        assert_eq!(tightened_min_gap(&g, 0.0).unwrap(), 10.0);
        let median = GapConstraintParams { p_def: 0.5, delta_ext: 1.5, ..g };
        assert_eq!(tightened_min_gap(&median, 7.0).unwrap(), 11.5);
        assert!((tightened_min_gap(&g, 0.25).unwrap() - 10.8224268).abs() < 1e-6);
        assert!(tightened_min_gap(&g, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn half_space_form_agrees(delta in 0.1f64..50.0, ext in 0.0f64..5.0, p in 0.01f64..0.99, sigma in 0.0f64..10.0) {
            let g = GapConstraintParams { delta, delta_ext: ext, p_def: p };
            let a = tightened_min_gap(&g, sigma).unwrap();
            let b = half_space_min_gap(&g, sigma).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn tightening_is_monotone(s1 in 0.0f64..10.0, s2 in 0.0f64..10.0, p1 in 0.5f64..0.99, p2 in 0.5f64..0.99) {
            let lo = |p: f64, s: f64| tightened_min_gap(&GapConstraintParams { p_def: p, ..Default::default() }, s).unwrap();
            let (sa, sb) = (s1.min(s2), s1.max(s2));
            let (pa, pb) = (p1.min(p2), p1.max(p2));
            prop_assert!(lo(pa, sa) <= lo(pa, sb));
            prop_assert!(lo(pa, sa) <= lo(pb, sa));
        }

        #[test]
        fn variance_never_decreases(s in 0.0f64..10.0, g in 0.0f64..5.0, t in 0.01f64..1.0) {
            let out = propagate_hv_variance(s, g, t).unwrap();
            prop_assert!(out >= s);
            prop_assert_eq!(out == s, g == 0.0 || t * t * g + s == s);
        }

        #[test]
        fn av_steps_are_deterministic(accs in prop::collection::vec(-4.0f64..4.0, 1..50)) {
            let run = || accs.iter().fold(AvState { p: 0.0, v: 5.0 }, |s, &a| av_step(s, a, 0.1));
            prop_assert_eq!(run(), run());
        }
    }
}
