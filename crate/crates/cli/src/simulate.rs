//! `simulate`: one closed-loop run with its data files, plots and manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use platoon_core::mpc::ControllerKind;
use platoon_core::sim::{compute_metrics, run_closed_loop, Metrics, PlantMode, ProfileSource, ScenarioSpec, SimResult};

use crate::args::ControllerArg;
use crate::config::load_model;
use crate::manifest::{RunManifest, FILE_NAME};
use crate::plot::{LinePlot, Marker, Series};

pub const DATA_FILES: [&str; 4] = ["results.csv", "metrics.txt", "diagnostics.csv", "events.csv"];
pub const PLOT_FILES: [&str; 3] = ["velocity.svg", "position.svg", "gaps.svg"];

#[derive(Debug, Clone)]
pub struct SimulateRequest {
    pub spec: ScenarioSpec,
    pub controller: ControllerArg,
    pub model: Option<PathBuf>,
    pub plant_model: Option<PathBuf>,
    pub timing: bool,
}

pub struct SimulateOutcome {
    pub result: SimResult,
    pub metrics: Metrics,
    pub manifest: RunManifest,
}

/// Runs the closed loop without touching the filesystem beyond model loads.
pub fn run(req: &SimulateRequest) -> Result<(SimResult, Metrics)> {
    let controller = match req.controller {
        ControllerArg::Nominal => ControllerKind::Nominal,
        ControllerArg::Gp => match &req.model {
            Some(p) => ControllerKind::Gp(load_model(p)?),
            None => bail!("--controller gp needs a GP model (--model)"),
        },
    };
    let plant_gp = match req.spec.plant {
        PlantMode::Model => match req.plant_model.as_ref().or(req.model.as_ref()) {
            Some(p) => Some(load_model(p)?),
            None => bail!("a model-mode plant needs a GP model (--plant-model or --model)"),
        },
        PlantMode::Truth => None,
    };
    let result = run_closed_loop(&req.spec, controller, plant_gp).with_context(|| format!("simulating `{}`", req.spec.name))?;
    let metrics = compute_metrics(&result)?;
    Ok((result, metrics))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Runs and writes every output file into `out`.
pub fn simulate(req: &SimulateRequest, out: &Path) -> Result<SimulateOutcome> {
    let (result, metrics) = run(req)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    result.write_csv(create(out, "results.csv")?, req.timing)?;
    metrics.to_kv(req.timing).save(&out.join("metrics.txt"))?;
    result.write_diagnostics(create(out, "diagnostics.csv")?, req.timing)?;
    result.write_events(create(out, "events.csv")?)?;
    for (name, svg) in PLOT_FILES.iter().zip(plots(&result, &req.spec)?) {
        std::fs::write(out.join(name), svg).with_context(|| format!("writing {name}"))?;
    }

    let mut m = RunManifest::new("simulate");
    m.set("controller", req.controller.key());
    m.set("timing", req.timing.to_string());
    m.set("seed", req.spec.seed.to_string());
    if req.controller == ControllerArg::Gp {
        if let Some(p) = &req.model {
            m.add_input("model", p)?;
        }
    }
    if req.spec.plant == PlantMode::Model {
        if let Some(p) = req.plant_model.as_ref().or(req.model.as_ref()) {
            m.add_input("plant_model", p)?;
        }
    }
    if let ProfileSource::File(p) = &req.spec.profile {
        m.add_input("profile_file", p)?;
    }
    m.set_scenario(&req.spec.to_kv());
    for name in DATA_FILES.iter().chain(&PLOT_FILES) {
        m.add_output(out, name)?;
    }
    m.save(&out.join(FILE_NAME))?;
    info!("{}: {} steps, min AV-HV gap {:.3} m", req.spec.name, metrics.steps, metrics.min_gap_hv);
    Ok(SimulateOutcome { result, metrics, manifest: m })
}

/// Rebuilds the request recorded in a manifest, checking input digests.
pub fn request_from_manifest(path: &Path) -> Result<SimulateRequest> {
    let m = RunManifest::load(path)?;
    if m.get("command") != Some("simulate") {
        bail!("{} was not written by `simulate`", path.display());
    }
    let controller = match m.get("controller") {
        Some("nominal") => ControllerArg::Nominal,
        Some("gp") => ControllerArg::Gp,
        other => bail!("manifest has an unknown controller {other:?}"),
    };
    let timing = m.get("timing") == Some("true");
    let model = m.verify_input("model")?;
    let plant_model = m.verify_input("plant_model")?;
    m.verify_input("profile_file")?;
    let spec = ScenarioSpec::from_kv(&m.scenario(), None).context("manifest scenario")?;
    Ok(SimulateRequest {
        spec,
        controller,
        model,
        plant_model,
        timing,
    })
}

/// Re-runs a manifest into `out` and checks the data digests still match.
pub fn replay(manifest: &Path, out: &Path) -> Result<SimulateOutcome> {
    let req = request_from_manifest(manifest)?;
    let recorded = RunManifest::load(manifest)?;
    let outcome = simulate(&req, out)?;
    if !req.timing {
        for (name, want) in recorded.outputs() {
            let got = outcome.manifest.get(&format!("output.{name}")).unwrap_or_default();
            if got != want {
                bail!("replay of {} produced a different {name}", manifest.display());
            }
        }
    }
    Ok(outcome)
}

fn plots(r: &SimResult, spec: &ScenarioSpec) -> Result<[String; 3]> {
    let n = r.steps();
    let x = r.time.clone();
    let av_label = |a: usize| format!("AV{}", a + 1);

    let reference = spec.reference()?;
    let mut vel: Vec<Series> = vec![Series::dashed("reference", reference[..n].to_vec())];
    vel.extend((0..r.n_av()).map(|a| Series::solid(av_label(a), r.v_av[a].clone())));
    vel.push(Series::solid("HV", r.v_hv.clone()));

    let mut pos: Vec<Series> = (0..r.n_av()).map(|a| Series::solid(av_label(a), r.p_av[a].clone())).collect();
    pos.push(Series::solid("HV", r.p_hv.clone()));

    let gap_hv: Vec<f64> = (0..n).map(|k| r.gap_hv(k)).collect();
    let (k_min, g_min) = gap_hv.iter().copied().enumerate().fold((0, f64::INFINITY), |best, (k, g)| if g < best.1 { (k, g) } else { best });
    let mut gaps = Vec::new();
    if r.n_av() > 1 {
        gaps.push(Series::solid("AV-AV (min)", (0..n).map(|k| r.gap_av(k).unwrap_or(f64::NAN)).collect()));
    }
    gaps.push(Series::solid("AV-HV", gap_hv));

    let title = |what: &str| format!("{} ({}): {what}", spec.name, r.controller);
    Ok([
        LinePlot {
            title: title("velocity"),
            x_label: "time [s]".into(),
            y_label: "velocity [m/s]".into(),
            x: x.clone(),
            series: vel,
            marker: None,
        }
        .render(),
        LinePlot {
            title: title("position"),
            x_label: "time [s]".into(),
            y_label: "position [m]".into(),
            x: x.clone(),
            series: pos,
            marker: None,
        }
        .render(),
        LinePlot {
            title: title("inter-vehicle distance"),
            x_label: "time [s]".into(),
            y_label: "gap [m]".into(),
            x,
            series: gaps,
            marker: Some(Marker {
                x: r.time[k_min],
                y: g_min,
                text: format!("min gap {g_min:.3} m"),
            }),
        }
        .render(),
    ])
}
