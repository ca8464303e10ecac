use std::path::PathBuf;

use clap::ValueEnum;
use lsi_core::discretize::fmt_f64;
use lsi_core::learn::{train_gpflow, train_lgp, train_lsi, GpFlowConfig, LgpMode, SavedModel, DEFAULT_EPSILON_GRID};
use lsi_core::{KernelParams, Scheme, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::input::{load_dataset, write_text, SystemName};
use crate::settings::resolve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
enum Method {
    Lsi,
    Lgp,
    LgpExact,
    Gpflow,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// RBF length scale.
    #[arg(long)]
    epsilon: Option<f64>,
    /// RBF amplitude.
    #[arg(long)]
    ck: Option<f64>,
    /// Normalisation constant of the non-triviality row.
    #[arg(long)]
    c: Option<f64>,
    /// Relative singular-value cutoff of the least-squares solve.
    #[arg(long)]
    rcond: Option<f64>,
    /// System supplying exact accelerations for `lgp-exact`.
    #[arg(long, value_enum)]
    system: Option<SystemName>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Candidate length scales for `gpflow`.
    #[arg(long, value_delimiter = ',')]
    epsilon_grid: Option<Vec<f64>>,
    /// Diagonal jitter for `gpflow`.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Settings {
    method: Method,
    scheme: Scheme,
    epsilon: f64,
    c_k: f64,
    c: f64,
    rcond: f64,
    system: Option<SystemName>,
    alpha: f64,
    epsilon_grid: Vec<f64>,
    jitter: f64,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        let gp = GpFlowConfig::default();
        Self {
            method: Method::Lsi,
            scheme: Scheme::Midpoint,
            epsilon: 5.0,
            c_k: 1.0,
            c: 1.0,
            rcond: 1e-8,
            system: None,
            alpha: 0.8,
            epsilon_grid: DEFAULT_EPSILON_GRID.to_vec(),
            jitter: gp.jitter,
            data: None,
            out: None,
        }
    }
}

pub fn run(args: Args, config: &Value) -> CliResult {
    let flags = json!({
        "method": args.method,
        "scheme": args.scheme,
        "epsilon": args.epsilon,
        "c_k": args.ck,
        "c": args.c,
        "rcond": args.rcond,
        "system": args.system,
        "alpha": args.alpha,
        "epsilon_grid": args.epsilon_grid,
        "jitter": args.jitter,
        "data": args.data,
        "out": args.out,
    });
    let s: Settings = resolve(&Settings::default(), config, flags)?;
    let data = s.data.as_ref().ok_or_else(|| CliError::usage("missing --data"))?;
    let out = s.out.as_ref().ok_or_else(|| CliError::usage("missing --out"))?;
    let exact_system = match (s.method, s.system) {
        (Method::LgpExact, None) => {
            return Err(CliError::usage("lgp-exact needs --system to compute exact accelerations"));
        }
        (Method::LgpExact, Some(name)) => Some(name.system(s.alpha)?),
        _ => None,
    };
    let dataset = load_dataset(data)?;

    let model = if s.method == Method::Gpflow {
        let cfg = GpFlowConfig { epsilon_grid: s.epsilon_grid.clone(), c_k: s.c_k, jitter: s.jitter };
        SavedModel::Flow(train_gpflow(&dataset, &cfg)?)
    } else {
        let mut cfg = TrainConfig::new(KernelParams::new(s.epsilon, s.c_k)?, s.scheme);
        cfg.c = s.c;
        cfg.rcond = s.rcond;
        cfg.validate()?;
        SavedModel::Kernel(match (s.method, exact_system) {
            (Method::Lsi, _) => train_lsi(&dataset, &cfg)?,
            (Method::LgpExact, Some(system)) => train_lgp(&dataset, &cfg, LgpMode::Exact(system))?,
            _ => train_lgp(&dataset, &cfg, LgpMode::FiniteDifference)?,
        })
    };
    write_text(out, &model.to_json()?)?;

    match &model {
        SavedModel::Kernel(m) => {
            println!("method {}", m.kind);
            println!("centers {}", m.centers.len());
            println!("rank {}", m.diagnostics.rank);
            println!("residual {}", fmt_f64(m.diagnostics.residual));
        }
        SavedModel::Flow(f) => {
            println!("method gpflow");
            println!("samples {}", f.inputs.len());
            println!("epsilon {}", fmt_f64(f.kernel.epsilon));
            println!("log_marginal_likelihood {}", fmt_f64(f.log_marginal_likelihood));
        }
    }
    Ok(())
}
