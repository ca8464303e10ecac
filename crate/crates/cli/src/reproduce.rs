//! Benchmark experiments end to end, with every artifact written to one directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Subcommand;
use lsi_core::analysis::EnergyTrace;
use lsi_core::discretize::fmt_f64;
use lsi_core::experiments::{
    run_henon_heiles, run_pendulum, thin_prediction, HenonHeilesConfig, HenonHeilesRun, HenonHeilesSummary, Outcome,
    PendulumConfig, PendulumRun, PendulumSummary, TraceStats,
};
use lsi_core::learn::{FlowPrediction, SavedModel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::input::{write_text, write_with};
use crate::settings::resolve;

#[derive(Subcommand)]
pub enum Command {
    /// Pendulum: ν table, modified-energy bands and energy behaviour of each learner.
    Pendulum(PendulumArgs),
    /// Hénon–Heiles: divergence times of LSI, LGP and the flow-map baseline.
    HenonHeiles(HenonHeilesArgs),
}

/// Overrides shared by both experiments.
#[derive(clap::Args)]
pub struct Common {
    /// Artifact directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    traj_len: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    /// Internal Störmer–Verlet step (default h/500).
    #[arg(long)]
    h_fine: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    ck: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    rcond: Option<f64>,
}

impl Common {
    fn flags(&self) -> Value {
        json!({
            "data": {
                "n_traj": self.n_traj,
                "traj_len": self.traj_len,
                "h": self.h,
                "h_fine": self.h_fine.or(self.h.map(|h| h / 500.0)),
            },
            "learner": { "epsilon": self.epsilon, "c_k": self.ck, "c": self.c, "rcond": self.rcond },
        })
    }
}

#[derive(clap::Args)]
pub struct PendulumArgs {
    #[command(flatten)]
    common: Common,
    /// Prediction length in steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(clap::Args)]
pub struct HenonHeilesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    alpha: Option<f64>,
    /// Integration horizon.
    #[arg(long)]
    t_max: Option<f64>,
    /// Divergence radius on the position norm.
    #[arg(long)]
    bound: Option<f64>,
    /// Keep every k-th snapshot in exported trajectories and energy traces.
    #[arg(long)]
    stride: Option<usize>,
}

pub fn run(cmd: Command, config: &Value) -> CliResult {
    match cmd {
        Command::Pendulum(args) => {
            let mut flags = args.common.flags();
            flags["steps"] = json!(args.steps);
            let cfg: PendulumConfig = resolve(&PendulumConfig::default(), config, flags)?;
            let run = run_pendulum(&cfg)?;
            let table = write_pendulum(&args.common.out, &run)?;
            print!("{table}");
        }
        Command::HenonHeiles(args) => {
            let mut flags = args.common.flags();
            flags["alpha"] = json!(args.alpha);
            flags["t_max"] = json!(args.t_max);
            flags["bound"] = json!(args.bound);
            flags["output_stride"] = json!(args.stride);
            let cfg: HenonHeilesConfig = resolve(&HenonHeilesConfig::default(), config, flags)?;
            let run = run_henon_heiles(&cfg)?;
            let table = write_henon_heiles(&args.common.out, &run)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

fn write_trace(dir: &Path, name: &str, trace: &EnergyTrace) -> CliResult {
    write_with(&dir.join(name), |w| trace.write_csv(w))
}

fn positions_csv(h: f64, positions: &[Vec<f64>]) -> String {
    let n = positions.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for i in 1..=n {
        let _ = write!(s, ",q{i}");
    }
    s.push('\n');
    for (j, q) in positions.iter().enumerate() {
        s.push_str(&fmt_f64(j as f64 * h));
        for x in q {
            s.push(',');
            s.push_str(&fmt_f64(*x));
        }
        s.push('\n');
    }
    s
}

fn row(out: &mut String, label: &str, value: &str, target: &str) {
    let line = format!("{label:<30}{value:<26}{target}");
    let _ = writeln!(out, "{}", line.trim_end());
}

fn trace_rows(out: &mut String, label: &str, t: &TraceStats, target: Option<f64>) {
    row(out, &format!("{label} band"), &fmt_f64(t.band), &target.map(fmt_f64).unwrap_or_default());
    row(out, &format!("{label} slope"), &fmt_f64(t.slope), "");
    row(out, &format!("{label} drift"), if t.drift { "yes" } else { "no" }, "");
}

fn pendulum_table(s: &PendulumSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pendulum: {} trajectories, {} triples", s.trajectories, s.triples);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12}{:>9}{:>7}  residual", "model", "centers", "rank");
    for (name, m) in &s.models {
        let _ = writeln!(out, "{name:<12}{:>9}{:>7}  {}", m.centers, m.rank, fmt_f64(m.residual));
    }
    let _ = writeln!(out);
    row(&mut out, "quantity", "value", "target");
    let nu = [s.nu.lsi_bea, s.nu.lgp_bea, s.nu.lgp_exact_bea, s.nu.lgp_direct, s.nu.lgp_exact_direct];
    for ((name, target), r) in s.target_nu.iter().zip(nu) {
        row(&mut out, &format!("nu {name}"), &fmt_f64(r.nu), &fmt_f64(*target));
    }
    trace_rows(&mut out, "lsi H0", &s.lsi_h0, Some(s.target_bands[0].1));
    trace_rows(&mut out, "lsi H2", &s.lsi_h2, Some(s.target_bands[1].1));
    for (name, t) in &s.href {
        trace_rows(&mut out, &format!("{name} Href"), t, None);
    }
    for (name, e) in &s.snapshot_errors {
        row(&mut out, &format!("{name} snapshot error"), &fmt_f64(*e), "");
    }
    for (name, step, msg) in &s.failures {
        let _ = writeln!(out, "failure {name} at step {step}: {msg}");
    }
    out
}

fn write_pendulum(dir: &Path, run: &PendulumRun) -> CliResult<String> {
    create_dir(dir)?;
    write_text(&dir.join("config.json"), &pretty(&run.config)?)?;
    write_text(&dir.join("dataset.json"), &run.dataset.to_json()?)?;
    let runs = [
        ("lsi", &run.lsi, &run.lsi_run),
        ("lgp", &run.lgp, &run.lgp_run),
        ("lgp-exact", &run.lgp_exact, &run.lgp_exact_run),
    ];
    for (name, model, eval) in runs {
        write_text(&dir.join(format!("model-{name}.json")), &SavedModel::Kernel(model.clone()).to_json()?)?;
        write_with(&dir.join(format!("prediction-{name}.csv")), |w| eval.prediction.write_csv(w))?;
        write_trace(dir, &format!("energy-href-{name}.csv"), &eval.reference_energy)?;
    }
    write_trace(dir, "energy-lsi-h0.csv", &run.lsi_modified_energy[0])?;
    write_trace(dir, "energy-lsi-h2.csv", &run.lsi_modified_energy[1])?;
    write_text(&dir.join("reference.csv"), &positions_csv(run.dataset.h, &run.reference_positions))?;
    for (name, grid) in &run.contours {
        write_with(&dir.join(format!("contour-{name}.csv")), |w| grid.write_csv(w))?;
    }
    let summary = run.summary();
    write_text(&dir.join("summary.json"), &pretty(&summary)?)?;
    let table = pendulum_table(&summary);
    write_text(&dir.join("summary.txt"), &table)?;
    Ok(table)
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Diverged => "diverged",
        Outcome::StepFailure => "step-failure",
        Outcome::Censored => "censored",
    }
}

fn henon_heiles_table(s: &HenonHeilesSummary, stride: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "henon-heiles: {} trajectories, {} triples", s.trajectories, s.triples);
    let _ = writeln!(out, "initial energy {}, escape energy {}", fmt_f64(s.initial_energy), fmt_f64(s.escape_energy));
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12}{:>9}{:>7}  residual", "model", "centers", "rank");
    for (name, m) in &s.models {
        let _ = writeln!(out, "{name:<12}{:>9}{:>7}  {}", m.centers, m.rank, fmt_f64(m.residual));
    }
    let _ = writeln!(
        out,
        "gpflow epsilon {}, log marginal likelihood {}",
        fmt_f64(s.gpflow_epsilon),
        fmt_f64(s.gpflow_log_marginal_likelihood)
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<10}{:<14}{:<26}target", "method", "outcome", "time");
    for ((name, d), (_, target)) in s.divergence.iter().zip(&s.target_divergence) {
        let _ = writeln!(out, "{name:<10}{:<14}{:<26}{}", outcome_name(d.outcome), fmt_f64(d.time), fmt_f64(*target));
    }
    let t = |name: &str| s.divergence.iter().find(|(n, _)| n == name).map_or(f64::NAN, |(_, d)| d.time);
    let yes = |b: bool| if b { "yes" } else { "no" };
    let _ = writeln!(out, "t(gpflow) < t(lgp) < t(lsi): {}", yes(t("gpflow") < t("lgp") && t("lgp") < t("lsi")));
    let _ = writeln!(out, "t(lsi) >= 2 t(lgp): {}", yes(t("lsi") >= 2.0 * t("lgp")));
    let _ = writeln!(out);
    let _ = writeln!(out, "reference energy along each motion (every {stride}th snapshot):");
    for (name, tr) in &s.energy {
        trace_rows(&mut out, &format!("{name} Href"), tr, None);
    }
    for (name, step, msg) in &s.failures {
        let _ = writeln!(out, "failure {name} at step {step}: {msg}");
    }
    out
}

fn write_henon_heiles(dir: &Path, run: &HenonHeilesRun) -> CliResult<String> {
    create_dir(dir)?;
    let stride = run.config.output_stride.max(1);
    write_text(&dir.join("config.json"), &pretty(&run.config)?)?;
    write_text(&dir.join("dataset.json"), &run.dataset.to_json()?)?;
    write_text(&dir.join("model-lsi.json"), &SavedModel::Kernel(run.lsi.clone()).to_json()?)?;
    write_text(&dir.join("model-lgp.json"), &SavedModel::Kernel(run.lgp.clone()).to_json()?)?;
    write_text(&dir.join("model-gpflow.json"), &SavedModel::Flow(run.gpflow.clone()).to_json()?)?;
    for (name, pred) in [("lsi", &run.lsi_prediction), ("lgp", &run.lgp_prediction)] {
        let thin = thin_prediction(pred, stride);
        write_with(&dir.join(format!("prediction-{name}.csv")), |w| thin.write_csv(w))?;
    }
    let gp = &run.gpflow_prediction;
    let gp_thin = FlowPrediction {
        h: gp.h * stride as f64,
        positions: gp.positions.iter().step_by(stride).cloned().collect(),
        velocities: gp.velocities.iter().step_by(stride).cloned().collect(),
    };
    write_with(&dir.join("prediction-gpflow.csv"), |w| gp_thin.write_csv(w))?;
    for (name, trace) in &run.energy {
        write_trace(dir, &format!("energy-href-{name}.csv"), trace)?;
    }
    for (name, grid) in &run.contours {
        write_with(&dir.join(format!("contour-{name}.csv")), |w| grid.write_csv(w))?;
    }
    let summary = run.summary();
    write_text(&dir.join("summary.json"), &pretty(&summary)?)?;
    let table = henon_heiles_table(&summary, stride);
    write_text(&dir.join("summary.txt"), &table)?;
    Ok(table)
}
