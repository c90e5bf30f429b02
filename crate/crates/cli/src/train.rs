//! `train-gp` and `evaluate-model`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use platoon_core::gp::io::save_sparse;
use platoon_core::gp::SparseGpModel;
use platoon_core::hv::{ArxParams, DriverTrace};
use platoon_core::numfmt;
use platoon_core::train::{held_out_row, prediction_timing, synthetic_traces, train_gp, GpTrainConfig, HeldOutRow, SyntheticConfig, TrainedGp};

use crate::args::{TraceArgs, TrainArgs};
use crate::manifest::RunManifest;

/// Offset between the seed of training traces and held-out traces.
const HELD_OUT_SEED_OFFSET: u64 = 1;

pub fn synthetic_config(a: &TraceArgs, traces: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        traces,
        duration: a.duration,
        noise_std: a.noise_std,
        g_gain: a.g_gain,
        g_slope: a.g_slope,
        g_drift: a.g_drift,
        seed,
        ..SyntheticConfig::default()
    }
}

pub fn load_traces(paths: &[PathBuf]) -> Result<Vec<DriverTrace>> {
    paths
        .iter()
        .map(|p| DriverTrace::load_csv(p).with_context(|| format!("reading trace {}", p.display())))
        .collect()
}

/// Named traces from files, or synthetic ones when `--synthetic` is set.
fn traces_from(a: &TraceArgs, seed: u64, prefix: &str) -> Result<Vec<(String, DriverTrace)>> {
    match a.synthetic {
        Some(n) => {
            let t = synthetic_traces(&synthetic_config(a, n, seed))?;
            Ok(t.into_iter().enumerate().map(|(i, t)| (format!("{prefix}{}", i + 1), t)).collect())
        }
        None => {
            if a.traces.is_empty() {
                bail!("no traces: pass --trace PATH or --synthetic N");
            }
            let t = load_traces(&a.traces)?;
            Ok(a.traces.iter().map(|p| p.display().to_string()).zip(t).collect())
        }
    }
}

pub fn rmse_table(rows: &[HeldOutRow]) -> String {
    let mut s = String::from("data,arx_rmse,arx_gp_rmse,improvement_pct\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.name, numfmt::out(r.arx_rmse), numfmt::out(r.gp_rmse), numfmt::out(r.improvement_pct()));
    }
    if rows.len() > 1 {
        let n = rows.len() as f64;
        let mean = HeldOutRow {
            name: "mean".into(),
            arx_rmse: rows.iter().map(|r| r.arx_rmse).sum::<f64>() / n,
            gp_rmse: rows.iter().map(|r| r.gp_rmse).sum::<f64>() / n,
        };
        let _ = writeln!(s, "{},{},{},{}", mean.name, numfmt::out(mean.arx_rmse), numfmt::out(mean.gp_rmse), numfmt::out(mean.improvement_pct()));
    }
    s
}

pub fn held_out_rows(traces: &[(String, DriverTrace)], gp: &SparseGpModel) -> Result<Vec<HeldOutRow>> {
    let arx = ArxParams::default();
    traces.iter().map(|(name, t)| held_out_row(name, t, &arx, gp).map_err(Into::into)).collect()
}

pub struct TrainOutcome {
    pub trained: TrainedGp,
    pub rows: Vec<HeldOutRow>,
    /// Seconds per prediction, exact and sparse.
    pub timing: (f64, f64),
    pub report: String,
}

fn report_text(args: &TrainArgs, t: &TrainedGp, rows: &[HeldOutRow], timing: (f64, f64), in_sample: bool) -> String {
    let h = &t.exact.hyper;
    let mut s = String::new();
    let _ = writeln!(s, "# GP training report");
    let _ = writeln!(s, "rows_total = {}", t.total_rows);
    let _ = writeln!(s, "rows_train = {}", t.exact.dataset.len());
    let _ = writeln!(s, "fraction = {}", numfmt::out(args.fraction));
    let _ = writeln!(s, "seed = {}", args.seed);
    let _ = writeln!(s, "inducing = {}", t.sparse.n_inducing());
    let _ = writeln!(s, "signal_variance = {}", numfmt::out(h.signal_variance));
    let _ = writeln!(s, "length_scales = {}", h.length_scales.iter().map(|l| numfmt::out(*l)).collect::<Vec<_>>().join(","));
    let _ = writeln!(s, "noise_variance = {}", numfmt::out(h.noise_variance));
    let _ = writeln!(s, "lml_initial = {}", numfmt::out(t.report.initial_lml));
    let _ = writeln!(s, "lml_final = {}", numfmt::out(t.report.final_lml));
    let _ = writeln!(s, "iterations = {}", t.report.iterations);
    let _ = writeln!(s, "converged = {}", t.report.converged);
    let _ = writeln!(s);
    let _ = writeln!(s, "# one-step velocity RMSE [m/s]{}", if in_sample { " (training traces, no held-out data given)" } else { " on held-out traces" });
    s.push_str(&rmse_table(rows));
    let _ = writeln!(s);
    let _ = writeln!(s, "# prediction time per query [s]");
    let _ = writeln!(s, "exact_prediction_s = {}", numfmt::out(timing.0));
    let _ = writeln!(s, "sparse_prediction_s = {}", numfmt::out(timing.1));
    let _ = writeln!(s, "speedup = {}", numfmt::out(timing.0 / timing.1));
    s
}

pub fn train(args: &TrainArgs) -> Result<TrainOutcome> {
    if !(args.fraction > 0.0 && args.fraction <= 1.0) {
        bail!("--fraction must lie in (0, 1]");
    }
    if args.inducing == 0 {
        bail!("-m must be at least 1");
    }
    let arx = ArxParams::default();
    let named = traces_from(&args.data, args.seed, "train")?;
    let traces: Vec<DriverTrace> = named.iter().map(|(_, t)| t.clone()).collect();

    let (held, in_sample) = if args.data.synthetic.is_some() {
        let n = args.data.synthetic.unwrap_or(1).max(1);
        let cfg = synthetic_config(&args.data, n, args.seed + HELD_OUT_SEED_OFFSET);
        let t = synthetic_traces(&cfg)?;
        (t.into_iter().enumerate().map(|(i, t)| (format!("held_out{}", i + 1), t)).collect::<Vec<_>>(), false)
    } else if !args.held_out.is_empty() {
        (args.held_out.iter().map(|p| p.display().to_string()).zip(load_traces(&args.held_out)?).collect(), false)
    } else {
        (named.clone(), true)
    };

    if let Some(dir) = &args.save_traces {
        std::fs::create_dir_all(dir)?;
        for (name, t) in named.iter().chain(&held) {
            if args.data.synthetic.is_some() {
                t.save_csv(&dir.join(format!("{name}.csv")))?;
            }
        }
    }

    let cfg = GpTrainConfig {
        fraction: args.fraction,
        seed: args.seed,
        inducing: args.inducing,
        optimize_inducing: !args.fixed_inducing,
        ..GpTrainConfig::default()
    };
    info!("training on {} trace(s)", traces.len());
    let trained = train_gp(&traces, &arx, &cfg)?;
    let rows = held_out_rows(&held, &trained.sparse)?;

    let queries: Vec<Vec<f64>> = (0..trained.exact.dataset.len().min(200)).map(|i| trained.exact.dataset.input(i)).collect();
    let timing = prediction_timing(&trained.exact, &trained.sparse, &queries, 5)?;
    let report = report_text(args, &trained, &rows, timing, in_sample);

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_sparse(&trained.sparse, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let report_path = args.report.clone().unwrap_or_else(|| sibling(&args.out, "report.txt"));
    std::fs::write(&report_path, &report).with_context(|| format!("writing {}", report_path.display()))?;

    let mut m = RunManifest::new("train-gp");
    m.set("seed", args.seed.to_string());
    m.set("fraction", numfmt::out(args.fraction));
    m.set("inducing", args.inducing.to_string());
    m.set("optimize_inducing", (!args.fixed_inducing).to_string());
    match args.data.synthetic {
        Some(n) => {
            let c = synthetic_config(&args.data, n, args.seed);
            m.set("synthetic_traces", n.to_string());
            m.set("synthetic_duration", numfmt::out(c.duration));
            m.set("synthetic_noise_std", numfmt::out(c.noise_std));
            m.set("g_gain", numfmt::out(c.g_gain));
            m.set("g_slope", numfmt::out(c.g_slope));
            m.set("g_drift", numfmt::out(c.g_drift));
        }
        None => {
            for (i, p) in args.data.traces.iter().enumerate() {
                m.add_input(&format!("trace{}", i + 1), p)?;
            }
            for (i, p) in args.held_out.iter().enumerate() {
                m.add_input(&format!("held_out{}", i + 1), p)?;
            }
        }
    }
    m.add_input("output_model", &args.out)?;
    m.save(&sibling(&args.out, "manifest.txt"))?;

    Ok(TrainOutcome { trained, rows, timing, report })
}

/// `dir/model.txt` -> `dir/model.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// RMSE table for a saved model on the given traces.
pub fn evaluate(gp: &SparseGpModel, data: &TraceArgs, seed: u64) -> Result<String> {
    let traces = traces_from(data, seed, "trace")?;
    let rows = held_out_rows(&traces, gp)?;
    Ok(rmse_table(&rows))
}
