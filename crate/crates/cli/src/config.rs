//! Scenario and model lookup.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use platoon_core::gp::io::load_sparse;
use platoon_core::gp::SparseGpModel;
use platoon_core::kv::KvFile;
use platoon_core::sim::{ProfileSource, ScenarioSpec};

/// Directory searched for `gp_model.txt` and `<name>.cfg` when no explicit
/// path is given.
pub const HOME_ENV: &str = "PLATOON_HOME";
pub const DEFAULT_MODEL: &str = "gp_model.txt";
const PRESETS: [&str; 4] = ["emergency", "realtime", "rest", "drive-cycle"];

fn home() -> Option<PathBuf> {
    std::env::var_os(HOME_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Explicit model path, else `$PLATOON_HOME/gp_model.txt` if it exists.
pub fn model_path(explicit: Option<&Path>) -> Option<PathBuf> {
    match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => home().map(|h| h.join(DEFAULT_MODEL)).filter(|p| p.is_file()),
    }
}

pub fn load_model(path: &Path) -> Result<Arc<SparseGpModel>> {
    let m = load_sparse(path).with_context(|| format!("loading GP model {}", path.display()))?;
    Ok(Arc::new(m))
}

pub fn require_model(explicit: Option<&Path>) -> Result<PathBuf> {
    model_path(explicit).ok_or_else(|| anyhow!("the GP controller needs a model: pass --model or put {DEFAULT_MODEL} in ${HOME_ENV}"))
}

fn apply_overrides(kv: &mut KvFile, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not key=value"))?;
        let k = k.trim();
        if k.is_empty() {
            bail!("override `{o}` has an empty key");
        }
        kv.set(k, v.trim());
    }
    Ok(())
}

/// Resolves a preset name or config file and applies `key=value`
/// overrides. File profiles are made absolute.
pub fn resolve_scenario(arg: &str, overrides: &[String]) -> Result<ScenarioSpec> {
    let (mut kv, base) = if PRESETS.contains(&arg) {
        (ScenarioSpec::preset(arg)?.to_kv(), None)
    } else {
        let direct = PathBuf::from(arg);
        let path = if direct.is_file() {
            direct
        } else {
            match home().map(|h| h.join(format!("{arg}.cfg"))).filter(|p| p.is_file()) {
                Some(p) => p,
                None => bail!("unknown scenario `{arg}`: not a preset ({}) or a readable file", PRESETS.join(", ")),
            }
        };
        let kv = KvFile::load(&path).with_context(|| format!("reading scenario {}", path.display()))?;
        (kv, path.parent().map(Path::to_path_buf))
    };
    apply_overrides(&mut kv, overrides)?;
    let mut spec = ScenarioSpec::from_kv(&kv, base.as_deref()).with_context(|| format!("scenario `{arg}`"))?;
    if let ProfileSource::File(p) = &spec.profile {
        let abs = std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?;
        spec.profile = ProfileSource::File(abs);
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_overrides() {
        let s = resolve_scenario("rest", &["seed=7".into(), "duration = 2".into()]).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.duration, 2.0);
    }

    #[test]
    fn bad_overrides_rejected() {
        assert!(resolve_scenario("rest", &["seed".into()]).is_err());
        assert!(resolve_scenario("rest", &["bogus=1".into()]).is_err());
        assert!(resolve_scenario("no-such-scenario", &[]).is_err());
    }

    #[test]
    fn config_file_relative_profile() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("prof.csv"), "t,v_ref\n0,0\n1,1\n2,1\n").unwrap();
        let cfg = dir.path().join("mine.cfg");
        std::fs::write(&cfg, "# custom\nprofile = file\nprofile_path = prof.csv\nduration = 2\n").unwrap();
        let s = resolve_scenario(cfg.to_str().unwrap(), &[]).unwrap();
        match s.profile {
            ProfileSource::File(p) => assert!(p.is_absolute() && p.ends_with("prof.csv")),
            other => panic!("unexpected profile {other:?}"),
        }
    }
}
