//! Leader reference velocity profiles.

use std::path::Path;

use crate::error::{PlatoonError, Result};
use crate::gp::dataset::{csv_err, parse_record};

/// Staged emergency stop from highway speed.
pub fn emergency_brake_profile(t: f64) -> f64 {
    match t {
        t if t < 40.0 => 35.0,
        t if t < 80.0 => 20.0,
        t if t < 100.0 => 10.0,
        t if t < 120.0 => 2.0,
        _ => 0.0,
    }
}

/// Low-speed braking step used for the real-time test.
pub fn realtime_brake_profile(t: f64) -> f64 {
    if t < 30.0 {
        10.0
    } else {
        5.0
    }
}

/// Synthetic four-phase drive cycle (low, medium, high, extra high) with
/// smooth ramps and stops, peaking at 36.5 m/s. Not the regulatory cycle.
pub fn drive_cycle_standin(t: f64) -> f64 {
    // (time, speed) breakpoints, linear in between.
    const PTS: [(f64, f64); 26] = [
        (0.0, 0.0),
        (10.0, 0.0),
        (40.0, 12.0),
        (90.0, 12.0),
        (110.0, 4.0),
        (130.0, 14.0),
        (170.0, 14.0),
        (190.0, 0.0),
        (220.0, 0.0),
        (260.0, 21.0),
        (330.0, 21.0),
        (360.0, 14.0),
        (400.0, 20.0),
        (440.0, 0.0),
        (470.0, 0.0),
        (520.0, 27.0),
        (600.0, 27.0),
        (640.0, 18.0),
        (700.0, 30.0),
        (740.0, 0.0),
        (770.0, 0.0),
        (830.0, 33.0),
        (900.0, 36.5),
        (960.0, 36.5),
        (1010.0, 0.0),
        (1030.0, 0.0),
    ];
    if t <= PTS[0].0 {
        return PTS[0].1;
    }
    for w in PTS.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if t <= t1 {
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        }
    }
    PTS[PTS.len() - 1].1
}

/// Duration of [`drive_cycle_standin`].
pub const DRIVE_CYCLE_DURATION: f64 = 1030.0;

/// Samples `f` on `0, T, 2T, ..` for `n` points.
pub fn sample_profile(f: impl Fn(f64) -> f64, t_step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| f(k as f64 * t_step)).collect()
}

/// A loaded `t,v_ref` series resampled to `t_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProfile {
    pub values: Vec<f64>,
    /// Number of samples clamped into `[0, v_max]`.
    pub clamped: usize,
}

impl LoadedProfile {
    /// Value at `t`; holds the last sample beyond the end.
    pub fn at(&self, t: f64, t_step: f64) -> f64 {
        let k = (t / t_step).round().max(0.0) as usize;
        self.values[k.min(self.values.len() - 1)]
    }
}

/// Reads `t,v_ref` CSV, resamples by linear interpolation and clamps into
/// `[0, v_max]`.
pub fn load_velocity_profile(path: &Path, t_step: f64, v_max: f64) -> Result<LoadedProfile> {
    let name = path.display().to_string();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "v_ref"] {
        return Err(PlatoonError::Parse {
            path: name,
            line: 1,
            message: "expected header `t,v_ref`".into(),
        });
    }
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| PlatoonError::Parse {
            path: name.clone(),
            line,
            message: e.to_string(),
        })?;
        let v = parse_record(&rec, 2, &name, line)?;
        if let Some(&last) = ts.last() {
            if v[0] <= last {
                return Err(PlatoonError::Format(format!("{name}:{line}: time {} does not increase", v[0])));
            }
        }
        ts.push(v[0]);
        vs.push(v[1]);
    }
    if ts.len() < 2 {
        return Err(PlatoonError::Format(format!("{name}: need at least two samples")));
    }
    if !(t_step > 0.0) {
        return Err(PlatoonError::InvalidArgument("time step must be positive".into()));
    }
    let span = ts[ts.len() - 1] - ts[0];
    let n = (span / t_step + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let t = ts[0] + k as f64 * t_step;
        while seg + 2 < ts.len() && t > ts[seg + 1] {
            seg += 1;
        }
        let w = ((t - ts[seg]) / (ts[seg + 1] - ts[seg])).clamp(0.0, 1.0);
        out.push(vs[seg] + w * (vs[seg + 1] - vs[seg]));
    }
    let mut clamped = 0;
    for v in out.iter_mut() {
        let c = v.clamp(0.0, v_max);
        if c != *v {
            clamped += 1;
            *v = c;
        }
    }
    if clamped > 0 {
        log::warn!("{name}: {clamped} reference samples clamped into [0, {v_max}]");
    }
    Ok(LoadedProfile { values: out, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_profiles() {
        assert_eq!(emergency_brake_profile(0.0), 35.0);
        assert_eq!(emergency_brake_profile(39.99), 35.0);
        assert_eq!(emergency_brake_profile(40.0), 20.0);
        assert_eq!(emergency_brake_profile(90.0), 10.0);
        assert_eq!(emergency_brake_profile(110.0), 2.0);
        assert_eq!(emergency_brake_profile(125.0), 0.0);
        assert_eq!(realtime_brake_profile(0.0), 10.0);
        assert_eq!(realtime_brake_profile(29.99), 10.0);
        assert_eq!(realtime_brake_profile(30.0), 5.0);
    }

    #[test]
    fn drive_cycle_peak() {
        let s = sample_profile(drive_cycle_standin, 0.1, (DRIVE_CYCLE_DURATION / 0.1) as usize + 1);
        let max = s.iter().cloned().fold(0.0, f64::max);
        assert!((max - 36.5).abs() < 1e-12);
        assert!(s.iter().all(|&v| v >= 0.0));
        assert_eq!(s[s.len() - 1], 0.0);
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loading_interpolates_clamps_and_reports() {
        let dir = std::env::temp_dir().join(format!("platoon-prof-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = write(&dir, "a.csv", "t,v_ref\n0,0\n1,1\n");
        assert_eq!(load_velocity_profile(&p, 0.5, 37.0).unwrap().values, vec![0.0, 0.5, 1.0]);
        let p = write(&dir, "b.csv", "t,v_ref\n0,-1\n1,40\n");
        let l = load_velocity_profile(&p, 1.0, 37.0).unwrap();
        assert_eq!(l.values, vec![0.0, 37.0]);
        assert_eq!(l.clamped, 2);
        let p = write(&dir, "c.csv", "t,v_ref\n0,0\n1,oops\n");
        match load_velocity_profile(&p, 0.1, 37.0).unwrap_err() {
            PlatoonError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
        let p = write(&dir, "d.csv", "t,v_ref\n0,0\n2,1\n1,1\n");
        assert!(matches!(load_velocity_profile(&p, 0.1, 37.0).unwrap_err(), PlatoonError::Format(_)));
    }
}
