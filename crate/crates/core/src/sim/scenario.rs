//! Scenario configuration and presets.

use std::path::{Path, PathBuf};

use crate::error::{invalid, PlatoonError, Result};
use crate::kv::KvFile;
use crate::mpc::MpcConfig;
use crate::numfmt;

use super::profile::{drive_cycle_standin, emergency_brake_profile, load_velocity_profile, realtime_brake_profile, DRIVE_CYCLE_DURATION};

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    Emergency,
    Realtime,
    Rest,
    DriveCycle,
    File(PathBuf),
}

impl ProfileSource {
    pub fn key(&self) -> &str {
        match self {
            ProfileSource::Emergency => "emergency",
            ProfileSource::Realtime => "realtime",
            ProfileSource::Rest => "rest",
            ProfileSource::DriveCycle => "drive-cycle",
            ProfileSource::File(_) => "file",
        }
    }
}

/// How the simulated HV deviates from the ARX model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantMode {
    /// Discrepancy from the controller's GP: mean plus optional noise with
    /// the GP variance.
    Model,
    /// Known synthetic discrepancy plus optional white noise.
    Truth,
}

impl PlantMode {
    pub fn key(&self) -> &'static str {
        match self {
            PlantMode::Model => "model",
            PlantMode::Truth => "truth",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub profile: ProfileSource,
    pub duration: f64,
    pub initial_spacing: f64,
    /// Controller settings; `mpc.t_step` is the simulation step.
    pub mpc: MpcConfig,
    pub plant: PlantMode,
    pub noise: bool,
    /// Standard deviation of truth-mode velocity noise at `noise_ref_speed`.
    pub noise_std: f64,
    /// Noise scales with `min(v_hv / noise_ref_speed, 1)`; zero disables scaling.
    pub noise_ref_speed: f64,
    pub seed: u64,
    /// Truth-mode discrepancy `gain * tanh(slope * (v_av - x)) - drift * x`.
    pub g_gain: f64,
    pub g_slope: f64,
    pub g_drift: f64,
}

impl ScenarioSpec {
    fn base(name: &str, profile: ProfileSource, duration: f64) -> Self {
        Self {
            name: name.to_string(),
            profile,
            duration,
            initial_spacing: 12.0,
            mpc: MpcConfig::default(),
            plant: PlantMode::Truth,
            noise: true,
            noise_std: 0.05,
            noise_ref_speed: 0.0,
            seed: 0,
            g_gain: 0.3,
            g_slope: 0.5,
            g_drift: 0.02,
        }
    }

    pub fn emergency() -> Self {
        Self::base("emergency", ProfileSource::Emergency, 130.0)
    }

    pub fn realtime() -> Self {
        let mut s = Self::base("realtime", ProfileSource::Realtime, 60.0);
        s.mpc.t_step = 0.25;
        s.mpc.r = 15.0;
        s
    }

    pub fn rest() -> Self {
        let mut s = Self::base("rest", ProfileSource::Rest, 10.0);
        s.noise = false;
        s
    }

    pub fn drive_cycle() -> Self {
        Self::base("drive-cycle", ProfileSource::DriveCycle, DRIVE_CYCLE_DURATION)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "emergency" => Ok(Self::emergency()),
            "realtime" => Ok(Self::realtime()),
            "rest" => Ok(Self::rest()),
            "drive-cycle" => Ok(Self::drive_cycle()),
            other => invalid(format!("unknown scenario `{other}` (emergency, realtime, rest, drive-cycle)")),
        }
    }

    pub fn t_step(&self) -> f64 {
        self.mpc.t_step
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.t_step()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        let ratio = self.duration / self.t_step();
        if !(self.duration > 0.0) || (ratio - ratio.round()).abs() > 1e-6 {
            return invalid(format!("duration {} is not a whole number of {} s steps", self.duration, self.t_step()));
        }
        let min_start = self.mpc.av_gap.max(self.mpc.gap_params.delta + self.mpc.gap_params.delta_ext);
        if !(self.initial_spacing > min_start) {
            return invalid(format!("initial spacing {} must exceed the minimum gap {min_start}", self.initial_spacing));
        }
        if !(self.noise_std >= 0.0) || !(self.noise_ref_speed >= 0.0) {
            return invalid("noise settings must be non-negative");
        }
        if !self.g_gain.is_finite() || !self.g_slope.is_finite() || !self.g_drift.is_finite() {
            return invalid("truth discrepancy parameters must be finite");
        }
        Ok(())
    }

    /// Reference velocity sampled on the simulation grid, padded by one
    /// horizon so every step sees a full window.
    pub fn reference(&self) -> Result<Vec<f64>> {
        let t = self.t_step();
        let n = self.steps() + self.mpc.horizon + 1;
        let at = |f: fn(f64) -> f64| (0..n).map(|k| f(k as f64 * t)).collect::<Vec<_>>();
        Ok(match &self.profile {
            ProfileSource::Emergency => at(emergency_brake_profile),
            ProfileSource::Realtime => at(realtime_brake_profile),
            ProfileSource::Rest => vec![0.0; n],
            ProfileSource::DriveCycle => at(drive_cycle_standin),
            ProfileSource::File(p) => {
                let l = load_velocity_profile(p, t, self.mpc.v_max)?;
                (0..n).map(|k| l.at(k as f64 * t, t)).collect()
            }
        })
    }

    /// Truth-mode discrepancy.
    pub fn g_true(&self, x: f64, v_av: f64) -> f64 {
        self.g_gain * (self.g_slope * (v_av - x)).tanh() - self.g_drift * x
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        let f = |kv: &mut KvFile, k: &str, x: f64| kv.set(k, numfmt::sig(x, numfmt::MODEL_DIGITS));
        kv.set("name", self.name.clone());
        kv.set("profile", self.profile.key().to_string());
        if let ProfileSource::File(p) = &self.profile {
            kv.set("profile_path", p.display().to_string());
        }
        f(&mut kv, "duration", self.duration);
        f(&mut kv, "t_step", self.mpc.t_step);
        f(&mut kv, "initial_spacing", self.initial_spacing);
        kv.set("n_av", self.mpc.n_av.to_string());
        kv.set("horizon", self.mpc.horizon.to_string());
        f(&mut kv, "q1", self.mpc.q1);
        f(&mut kv, "q2", self.mpc.q2);
        f(&mut kv, "r", self.mpc.r);
        f(&mut kv, "v_min", self.mpc.v_min);
        f(&mut kv, "v_max", self.mpc.v_max);
        f(&mut kv, "acc_min", self.mpc.acc_min);
        f(&mut kv, "acc_max", self.mpc.acc_max);
        f(&mut kv, "av_gap", self.mpc.av_gap);
        f(&mut kv, "delta", self.mpc.gap_params.delta);
        f(&mut kv, "delta_ext", self.mpc.gap_params.delta_ext);
        f(&mut kv, "p_def", self.mpc.gap_params.p_def);
        f(&mut kv, "qp_tol", self.mpc.qp.tol);
        kv.set("qp_max_iter", self.mpc.qp.max_iter.to_string());
        kv.set("plant", self.plant.key().to_string());
        kv.set("noise", self.noise.to_string());
        f(&mut kv, "noise_std", self.noise_std);
        f(&mut kv, "noise_ref_speed", self.noise_ref_speed);
        kv.set("seed", self.seed.to_string());
        f(&mut kv, "g_gain", self.g_gain);
        f(&mut kv, "g_slope", self.g_slope);
        f(&mut kv, "g_drift", self.g_drift);
        kv
    }

    /// Builds a spec from a key-value file. `scenario` (or `name`) selects a
    /// preset; every other key overrides it.
    pub fn from_kv(kv: &KvFile, base_dir: Option<&Path>) -> Result<Self> {
        let preset = kv.get("scenario").or_else(|| kv.get("profile").filter(|p| *p != "file")).unwrap_or("emergency");
        let mut s = Self::preset(preset)?;
        if let Some(n) = kv.get("name") {
            s.name = n.to_string();
        }
        if let Some(p) = kv.get("profile") {
            s.profile = match p {
                "emergency" => ProfileSource::Emergency,
                "realtime" => ProfileSource::Realtime,
                "rest" => ProfileSource::Rest,
                "drive-cycle" => ProfileSource::DriveCycle,
                "file" => {
                    let raw = PathBuf::from(kv.require("profile_path")?);
                    ProfileSource::File(match base_dir {
                        Some(d) if raw.is_relative() => d.join(raw),
                        _ => raw,
                    })
                }
                other => return Err(PlatoonError::Format(format!("unknown profile `{other}`"))),
            };
        }
        macro_rules! over {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parse_opt($key)? {
                    $field = v;
                }
            };
        }
        over!("duration", s.duration);
        over!("t_step", s.mpc.t_step);
        over!("initial_spacing", s.initial_spacing);
        over!("n_av", s.mpc.n_av);
        over!("horizon", s.mpc.horizon);
        over!("q1", s.mpc.q1);
        over!("q2", s.mpc.q2);
        over!("r", s.mpc.r);
        over!("v_min", s.mpc.v_min);
        over!("v_max", s.mpc.v_max);
        over!("acc_min", s.mpc.acc_min);
        over!("acc_max", s.mpc.acc_max);
        over!("av_gap", s.mpc.av_gap);
        over!("delta", s.mpc.gap_params.delta);
        over!("delta_ext", s.mpc.gap_params.delta_ext);
        over!("p_def", s.mpc.gap_params.p_def);
        over!("qp_tol", s.mpc.qp.tol);
        over!("qp_max_iter", s.mpc.qp.max_iter);
        over!("noise", s.noise);
        over!("noise_std", s.noise_std);
        over!("noise_ref_speed", s.noise_ref_speed);
        over!("seed", s.seed);
        over!("g_gain", s.g_gain);
        over!("g_slope", s.g_slope);
        over!("g_drift", s.g_drift);
        if let Some(p) = kv.get("plant") {
            s.plant = match p {
                "model" => PlantMode::Model,
                "truth" => PlantMode::Truth,
                other => return Err(PlatoonError::Format(format!("unknown plant mode `{other}`"))),
            };
        }
        let known = [
            "scenario", "name", "profile", "profile_path", "duration", "t_step", "initial_spacing", "n_av", "horizon", "q1", "q2", "r", "v_min", "v_max", "acc_min",
            "acc_max", "av_gap", "delta", "delta_ext", "p_def", "qp_tol", "qp_max_iter", "plant", "noise", "noise_std", "noise_ref_speed", "seed", "g_gain", "g_slope", "g_drift",
        ];
        if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
            return Err(PlatoonError::Format(format!("unknown scenario key `{k}`")));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::load(path)?, path.parent())
    }
}
