use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use lsi_core::bea::bea_correct;
use lsi_core::discretize::integrate;
use lsi_core::learn::SavedModel;
use lsi_core::NewtonOptions;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::input::{default_order, load_model, model_direction, write_with};
use crate::settings::resolve;

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Initial position, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    /// Initial velocity, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    qdot0: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<usize>,
    /// Also write recovered velocities and discrete momenta.
    #[arg(long)]
    with_velocities: bool,
    /// Correction order of the continuous Lagrangian used for the initial
    /// momentum and velocity recovery (default 2 for LSI models, 0 otherwise).
    #[arg(long, value_parser = PossibleValuesParser::new(["0", "2"]).map(|s| s.parse::<usize>().unwrap()))]
    bea_order: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Settings {
    model: Option<PathBuf>,
    q0: Vec<f64>,
    qdot0: Vec<f64>,
    steps: Option<usize>,
    with_velocities: bool,
    bea_order: Option<usize>,
    newton: NewtonOptions,
    out: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            model: None,
            q0: Vec::new(),
            qdot0: Vec::new(),
            steps: None,
            with_velocities: false,
            bea_order: None,
            newton: NewtonOptions::default(),
            out: None,
        }
    }
}

pub fn run(args: Args, config: &Value) -> CliResult {
    let flags = json!({
        "model": args.model,
        "q0": args.q0,
        "qdot0": args.qdot0,
        "steps": args.steps,
        "with_velocities": args.with_velocities.then_some(true),
        "bea_order": args.bea_order,
        "out": args.out,
    });
    let s: Settings = resolve(&Settings::default(), config, flags)?;
    let model = s.model.as_ref().ok_or_else(|| CliError::usage("missing --model"))?;
    let out = s.out.as_ref().ok_or_else(|| CliError::usage("missing --out"))?;
    let steps = s.steps.ok_or_else(|| CliError::usage("missing --steps"))?;

    match load_model(model)? {
        SavedModel::Kernel(m) => {
            let order = s.bea_order.unwrap_or(default_order(m.kind));
            let cont = bea_correct(&m, m.scheme, m.h, order, model_direction(m.kind))?;
            let pred = integrate(&m, &cont, m.scheme, &s.q0, &s.qdot0, m.h, steps, s.with_velocities, &s.newton)?;
            write_with(out, |w| pred.write_csv(w))?;
            println!("snapshots {}", pred.len());
            if let Some((step, msg)) = &pred.failure {
                return Err(CliError::runtime(format!("step {step} failed: {msg} ({} snapshots written)", pred.len())));
            }
        }
        SavedModel::Flow(f) => {
            if s.bea_order.is_some_and(|k| k != 0) {
                return Err(CliError::usage("flow-map models take no correction order"));
            }
            let pred = f.rollout(&s.q0, &s.qdot0, steps)?;
            write_with(out, |w| pred.write_csv(w))?;
            println!("snapshots {}", pred.len());
        }
    }
    Ok(())
}
