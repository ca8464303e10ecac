use std::f64::consts::PI;
use std::path::PathBuf;

use lsi_core::datagen::{generate_dataset, GroundTruthSpec, SamplerSpec};
use lsi_core::Bounds;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::input::{write_text, SystemName};
use crate::settings::resolve;

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    system: Option<SystemName>,
    /// Hénon–Heiles coupling.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of trajectories.
    #[arg(long)]
    n_traj: Option<usize>,
    /// Snapshots per trajectory.
    #[arg(long)]
    traj_len: Option<usize>,
    /// Snapshot spacing.
    #[arg(long)]
    h: Option<f64>,
    /// Internal Störmer–Verlet step; must divide `h` (default h/500).
    #[arg(long)]
    h_fine: Option<f64>,
    /// Initial-state box over (q, q̇) as lo1,hi1,lo2,hi2,...
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    domain: Option<Vec<f64>>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Settings {
    system: SystemName,
    alpha: f64,
    n_traj: usize,
    traj_len: usize,
    h: f64,
    h_fine: Option<f64>,
    domain: Vec<f64>,
    out: Option<PathBuf>,
}

impl Settings {
    fn preset(system: SystemName) -> Self {
        match system {
            SystemName::Pendulum => Self {
                system,
                alpha: 0.8,
                n_traj: 400,
                traj_len: 6,
                h: 0.5,
                h_fine: None,
                domain: vec![-PI, PI, -1.2, 1.2],
                out: None,
            },
            SystemName::HenonHeiles => Self {
                system,
                alpha: 0.8,
                n_traj: 200,
                traj_len: 5,
                h: 0.1,
                h_fine: None,
                domain: [-0.8, 0.8].repeat(4),
                out: None,
            },
        }
    }
}

fn bounds(flat: &[f64]) -> CliResult<Bounds> {
    if flat.is_empty() || flat.len() % 2 != 0 {
        return Err(CliError::usage("domain needs lo,hi pairs"));
    }
    let lower = flat.iter().step_by(2).copied().collect();
    let upper = flat.iter().skip(1).step_by(2).copied().collect();
    Ok(Bounds::new(lower, upper)?)
}

pub fn run(args: Args, config: &Value) -> CliResult {
    let system = match args.system {
        Some(s) => s,
        None => match config.get("system") {
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| CliError::usage(format!("invalid system: {e}")))?
            }
            None => SystemName::Pendulum,
        },
    };
    let flags = json!({
        "system": system,
        "alpha": args.alpha,
        "n_traj": args.n_traj,
        "traj_len": args.traj_len,
        "h": args.h,
        "h_fine": args.h_fine,
        "domain": args.domain,
        "out": args.out,
    });
    let s: Settings = resolve(&Settings::preset(system), config, flags)?;
    let out = s.out.as_ref().ok_or_else(|| CliError::usage("missing --out"))?;

    let sampler = SamplerSpec { bounds: bounds(&s.domain)?, count: s.n_traj, skip: 0 };
    let gt = GroundTruthSpec { h: s.h, steps_per_sample: s.traj_len, h_fine: s.h_fine.unwrap_or(s.h / 500.0) };
    let dataset = generate_dataset(&s.system.system(s.alpha)?, &sampler, &gt)?;
    write_text(out, &dataset.to_json()?)?;
    println!("trajectories {}", dataset.trajectories.len());
    println!("triples {}", dataset.triple_count());
    Ok(())
}
