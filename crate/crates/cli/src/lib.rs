//! Command-line front end: training, evaluation, simulation, comparison
//! and timing, each writing plain-text outputs plus a manifest.

pub mod args;
pub mod compare;
pub mod config;
pub mod manifest;
pub mod plot;
pub mod simulate;
pub mod train;

use anyhow::{Context, Result};

use args::{Cli, Command, ControllerArg};
use manifest::RunManifest;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainGp(a) => {
            let o = train::train(&a)?;
            print!("{}", o.report);
        }
        Command::EvaluateModel(a) => {
            let path = config::require_model(a.model.as_deref())?;
            let gp = config::load_model(&path)?;
            let table = train::evaluate(&gp, &a.data, a.seed)?;
            print!("{table}");
            if let Some(out) = &a.out {
                std::fs::write(out, &table).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::Simulate(a) => {
            let outcome = match &a.manifest {
                Some(m) => simulate::replay(m, &a.out)?,
                None => {
                    let spec = config::resolve_scenario(a.scenario.as_deref().unwrap_or_default(), &a.overrides)?;
                    let model = match a.controller {
                        ControllerArg::Gp => Some(config::require_model(a.model.as_deref())?),
                        ControllerArg::Nominal => config::model_path(a.model.as_deref()),
                    };
                    let req = simulate::SimulateRequest {
                        spec,
                        controller: a.controller,
                        model,
                        plant_model: a.plant_model.clone(),
                        timing: a.timing,
                    };
                    simulate::simulate(&req, &a.out)?
                }
            };
            print!("{}", outcome.metrics.to_kv(outcome.manifest.get("timing") == Some("true")).to_text());
        }
        Command::Compare(a) => {
            let spec = config::resolve_scenario(&a.scenario, &a.overrides)?;
            let model = config::require_model(a.model.as_deref())?;
            let report = compare::compare(&spec, Some(model.clone()), a.seeds, a.jobs)?;
            let text = report.render();
            std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            std::fs::write(a.out.join("compare.txt"), &text)?;
            let mut m = RunManifest::new("compare");
            m.set("seeds", a.seeds.to_string());
            m.add_input("model", &model)?;
            m.set_scenario(&spec.to_kv());
            m.save(&a.out.join(manifest::FILE_NAME))?;
            print!("{text}");
        }
        Command::Bench(a) => {
            let spec = config::resolve_scenario(&a.scenario, &a.overrides)?;
            let model = config::require_model(a.model.as_deref())?;
            let text = compare::bench(&spec, Some(model), a.reps)?.render();
            if let Some(out) = &a.out {
                std::fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
            }
            print!("{text}");
        }
    }
    Ok(())
}
