//! Simulated human-driven vehicle.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::gp::SparseGpModel;
use crate::hv::{ArxParams, VelocityHistory};

/// Deviation of the simulated driver from the nominal ARX chain.
#[derive(Debug, Clone)]
pub enum Discrepancy {
    /// Pure ARX.
    None,
    /// GP posterior mean; noise, when enabled, has the posterior variance.
    Gp(Arc<SparseGpModel>),
    /// `gain * tanh(slope * (v_av - x)) - drift * x`; noise, when enabled,
    /// is white.
    Truth { gain: f64, slope: f64, drift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub enabled: bool,
    /// Truth-mode standard deviation.
    pub std: f64,
    /// Truth-mode noise scales with `min(x / ref_speed, 1)`; `0` disables.
    pub ref_speed: f64,
    pub seed: u64,
}

impl NoiseSettings {
    pub fn off() -> Self {
        Self {
            enabled: false,
            std: 0.0,
            ref_speed: 0.0,
            seed: 0,
        }
    }
}

/// HV plant. `hist.hv` is the nominal chain `x`, `hist.av` the trailing AV
/// velocity, newest first; `v` is the observed velocity.
#[derive(Debug, Clone)]
pub struct HvPlant {
    pub arx: ArxParams,
    pub disc: Discrepancy,
    pub noise: NoiseSettings,
    pub hist: VelocityHistory,
    pub v: f64,
    pub p: f64,
    rng: ChaCha8Rng,
}

impl HvPlant {
    /// Plant that has been standing still at position `p`.
    pub fn at_rest(p: f64, arx: ArxParams, disc: Discrepancy, noise: NoiseSettings) -> Result<Self> {
        if !p.is_finite() || !(noise.std >= 0.0) || !(noise.ref_speed >= 0.0) {
            return invalid("plant position and noise settings must be finite and non-negative");
        }
        Ok(Self {
            arx,
            disc,
            noise,
            hist: VelocityHistory::constant(0.0),
            v: 0.0,
            p,
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
        })
    }

    /// Discrepancy mean and noise standard deviation at `(x, v_av)`.
    fn discrepancy(&self, x: f64, v_av: f64) -> Result<(f64, f64)> {
        Ok(match &self.disc {
            Discrepancy::None => (0.0, 0.0),
            Discrepancy::Gp(gp) => {
                let (m, var) = gp.predict(&[x, v_av])?;
                (m, var.sqrt())
            }
            Discrepancy::Truth { gain, slope, drift } => {
                let scale = if self.noise.ref_speed > 0.0 {
                    (x / self.noise.ref_speed).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                (gain * (slope * (v_av - x)).tanh() - drift * x, self.noise.std * scale)
            }
        })
    }

    /// Advances one step given the trailing AV velocity at the new time.
    /// Returns the new observed velocity and the position increment.
    pub fn step(&mut self, v_av_next: f64, t: f64) -> Result<(f64, f64)> {
        let dp = t * self.v;
        self.p += dp;
        let x_next = self.arx.step(&self.hist.hv, &self.hist.av);
        let (g, std) = self.discrepancy(self.hist.hv[0], self.hist.av[0])?;
        let e = if self.noise.enabled && std > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            std * z
        } else {
            0.0
        };
        self.v = (x_next + g + e).max(0.0);
        self.hist.push(x_next, v_av_next.max(0.0));
        Ok((self.v, dp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, SparseGpModel};
    use crate::gp::kernel::KernelHyper;
    use nalgebra::DMatrix;

    fn drive(plant: &mut HvPlant, n: usize) -> Vec<f64> {
        (0..n).map(|k| plant.step(if k < 5 { 0.0 } else { 8.0 }, 0.1).unwrap().0).collect()
    }

    fn zero_gp() -> SparseGpModel {
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![10.0, 10.0], vec![20.0, 20.0]], &[0.0, 0.0, 0.0]).unwrap();
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 20.0, 20.0]);
        SparseGpModel::from_inducing(&data, z, KernelHyper::new(1.0, vec![25.0, 25.0], 0.01).unwrap()).unwrap()
    }

    #[test]
    fn zero_gp_without_noise_is_pure_arx() {
        let mut a = HvPlant::at_rest(0.0, ArxParams::default(), Discrepancy::None, NoiseSettings::off()).unwrap();
        let mut b = HvPlant::at_rest(0.0, ArxParams::default(), Discrepancy::Gp(Arc::new(zero_gp())), NoiseSettings::off()).unwrap();
        let va = drive(&mut a, 300);
        let vb = drive(&mut b, 300);
        for (x, y) in va.iter().zip(&vb) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((va[299] - 8.0).abs() < 0.05);
    }

    #[test]
    fn position_integrates_previous_velocity() {
        let mut a = HvPlant::at_rest(-5.0, ArxParams::default(), Discrepancy::None, NoiseSettings::off()).unwrap();
        let mut p = -5.0;
        let mut v = 0.0;
        for k in 0..100 {
            let (nv, dp) = a.step(if k < 3 { 0.0 } else { 4.0 }, 0.25).unwrap();
            assert_eq!(dp, 0.25 * v);
            p += dp;
            v = nv;
        }
        assert!((a.p - p).abs() < 1e-12);
    }

    #[test]
    fn seeded_noise_is_reproducible_and_non_negative() {
        let noise = NoiseSettings {
            enabled: true,
            std: 0.3,
            ref_speed: 0.0,
            seed: 9,
        };
        let disc = Discrepancy::Truth { gain: 0.3, slope: 0.5, drift: 0.0 };
        let mut a = HvPlant::at_rest(0.0, ArxParams::default(), disc.clone(), noise).unwrap();
        let mut b = HvPlant::at_rest(0.0, ArxParams::default(), disc.clone(), noise).unwrap();
        let va = drive(&mut a, 200);
        assert_eq!(va, drive(&mut b, 200));
        assert!(va.iter().all(|&v| v >= 0.0));
        let mut c = HvPlant::at_rest(0.0, ArxParams::default(), disc, NoiseSettings { seed: 10, ..noise }).unwrap();
        assert_ne!(va, drive(&mut c, 200));
    }

    #[test]
    fn speed_scaled_noise_vanishes_at_rest() {
        let noise = NoiseSettings {
            enabled: true,
            std: 0.5,
            ref_speed: 5.0,
            seed: 1,
        };
        let mut a = HvPlant::at_rest(0.0, ArxParams::default(), Discrepancy::Truth { gain: 0.3, slope: 0.5, drift: 0.0 }, noise).unwrap();
        for _ in 0..50 {
            assert_eq!(a.step(0.0, 0.1).unwrap(), (0.0, 0.0));
        }
    }
}
