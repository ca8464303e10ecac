use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::Subcommand;
use lsi_core::analysis::{contour_grid, divergence_time, nu_metric, Energy, EnergyTrace, GridAxis, GridSpec};
use lsi_core::discretize::{fmt_f64, recover_velocity};
use lsi_core::NewtonOptions;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::input::{build_field, parse_field, parse_grid, read_trajectory, same_dim, write_with};
use crate::settings::resolve;

fn order_parser() -> impl TypedValueParser<Value = usize> {
    PossibleValuesParser::new(["0", "2"]).map(|s| s.parse::<usize>().unwrap())
}

fn grid_parser(s: &str) -> Result<GridSpec, String> {
    parse_grid(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
pub enum Command {
    /// Energy of a Lagrangian along a trajectory CSV.
    Energy(EnergyArgs),
    /// Mean sine of the angle between two energy gradients over a grid.
    Nu(NuArgs),
    /// Energy of a Lagrangian tabulated over a grid with one or two free axes.
    Contour(ContourArgs),
    /// First time the position norm of a trajectory exceeds a bound.
    Divergence(DivergenceArgs),
}

pub fn run(cmd: Command, config: &Value) -> CliResult {
    match cmd {
        Command::Energy(a) => energy(a, config),
        Command::Nu(a) => nu(a, config),
        Command::Contour(a) => contour(a, config),
        Command::Divergence(a) => divergence(a, config),
    }
}

/// Grid used when none is given: the pendulum ν region for `n = 1`, the
/// position plane at rest for `n = 2`.
fn default_grid(dim: usize) -> CliResult<GridSpec> {
    match dim {
        2 => Ok(GridSpec::new(vec![
            GridAxis::Free { lo: -1.2, hi: 1.2, count: 30 },
            GridAxis::Free { lo: -0.6, hi: 0.6, count: 30 },
        ])?),
        4 => Ok(GridSpec::new(vec![
            GridAxis::Free { lo: -1.0, hi: 1.0, count: 41 },
            GridAxis::Free { lo: -1.0, hi: 1.0, count: 41 },
            GridAxis::Fixed(0.0),
            GridAxis::Fixed(0.0),
        ])?),
        _ => Err(CliError::usage("no default grid for this dimension; pass --grid")),
    }
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| CliError::usage(format!("missing --{flag}")))
}

#[derive(clap::Args)]
pub struct EnergyArgs {
    /// Trajectory CSV with positions and velocities (or momenta).
    #[arg(long, value_name = "PATH")]
    trajectory: Option<PathBuf>,
    /// `ref:pendulum`, `ref:henon-heiles[:ALPHA]` or a model file.
    #[arg(long)]
    field: Option<String>,
    /// Correction order applied to a model field.
    #[arg(long, value_parser = order_parser())]
    bea_order: Option<usize>,
    /// Recover velocities from the momentum columns with the field itself.
    #[arg(long)]
    from_momenta: bool,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct EnergySettings {
    trajectory: Option<PathBuf>,
    field: Option<String>,
    bea_order: Option<usize>,
    from_momenta: bool,
    newton: NewtonOptions,
    out: Option<PathBuf>,
}

fn energy(args: EnergyArgs, config: &Value) -> CliResult {
    let flags = json!({
        "trajectory": args.trajectory,
        "field": args.field,
        "bea_order": args.bea_order,
        "from_momenta": args.from_momenta.then_some(true),
        "out": args.out,
    });
    let s: EnergySettings = resolve(&EnergySettings::default(), config, flags)?;
    let traj = read_trajectory(required(&s.trajectory, "trajectory")?)?;
    let field = build_field(&parse_field(required(&s.field, "field")?)?, s.bea_order)?;
    let out = required(&s.out, "out")?;
    same_dim(field.dim(), traj.q[0].len())?;

    let velocities = if s.from_momenta {
        let momenta = traj.p.as_ref().ok_or_else(|| CliError::usage("trajectory has no momentum columns"))?;
        let mut v = Vec::with_capacity(momenta.len());
        for (j, (q, p)) in traj.q.iter().zip(momenta).enumerate() {
            match recover_velocity(&field, q, p, &s.newton) {
                Ok(x) => v.push(x),
                Err(e) => {
                    eprintln!("warning: velocity recovery failed at row {j}: {e}; trace truncated");
                    break;
                }
            }
        }
        v
    } else {
        traj.qd.clone().ok_or_else(|| CliError::usage("trajectory has no velocity columns"))?
    };
    let k = velocities.len();
    let trace = EnergyTrace {
        times: traj.t[..k].to_vec(),
        values: traj.q[..k].iter().zip(&velocities).map(|(q, v)| field.energy(q, v)).collect(),
    };
    write_with(out, |w| trace.write_csv(w))?;
    println!("band {}", fmt_f64(trace.band()));
    println!("slope {}", fmt_f64(trace.slope()));
    println!("drift {}", trace.has_linear_drift());
    Ok(())
}

#[derive(clap::Args)]
pub struct NuArgs {
    /// First field: `ref:...` or a model file.
    #[arg(long)]
    a: Option<String>,
    /// Second field.
    #[arg(long)]
    b: Option<String>,
    /// Correction order of the first field when it is a model.
    #[arg(long, value_parser = order_parser())]
    order_a: Option<usize>,
    #[arg(long, value_parser = order_parser())]
    order_b: Option<usize>,
    /// Axes `lo:hi:count` or fixed values over (q, q̇), comma-separated.
    #[arg(long, value_parser = grid_parser, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct NuSettings {
    a: Option<String>,
    b: Option<String>,
    order_a: Option<usize>,
    order_b: Option<usize>,
    grid: Option<GridSpec>,
}

fn nu(args: NuArgs, config: &Value) -> CliResult {
    let flags = json!({
        "a": args.a, "b": args.b, "order_a": args.order_a, "order_b": args.order_b, "grid": args.grid,
    });
    let s: NuSettings = resolve(&NuSettings::default(), config, flags)?;
    let a = build_field(&parse_field(required(&s.a, "a")?)?, s.order_a)?;
    let b = build_field(&parse_field(required(&s.b, "b")?)?, s.order_b)?;
    same_dim(a.dim(), b.dim())?;
    let grid = match s.grid {
        Some(g) => g,
        None => default_grid(2 * a.dim())?,
    };
    let r = nu_metric(&Energy(&a), &Energy(&b), &grid)?;
    println!("{}", fmt_f64(r.nu));
    println!("skipped {} of {} nodes", r.skipped, r.nodes);
    Ok(())
}

#[derive(clap::Args)]
pub struct ContourArgs {
    #[arg(long)]
    field: Option<String>,
    #[arg(long, value_parser = order_parser())]
    bea_order: Option<usize>,
    #[arg(long, value_parser = grid_parser, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ContourSettings {
    field: Option<String>,
    bea_order: Option<usize>,
    grid: Option<GridSpec>,
    out: Option<PathBuf>,
}

fn contour(args: ContourArgs, config: &Value) -> CliResult {
    let flags = json!({ "field": args.field, "bea_order": args.bea_order, "grid": args.grid, "out": args.out });
    let s: ContourSettings = resolve(&ContourSettings::default(), config, flags)?;
    let field = build_field(&parse_field(required(&s.field, "field")?)?, s.bea_order)?;
    let out = required(&s.out, "out")?;
    let grid = match s.grid {
        Some(g) => g,
        None => default_grid(2 * field.dim())?,
    };
    let c = contour_grid(&Energy(&field), &grid)?;
    write_with(out, |w| c.write_csv(w))?;
    println!("nodes {}", c.x.len() * c.values.len());
    Ok(())
}

#[derive(clap::Args)]
pub struct DivergenceArgs {
    #[arg(long, value_name = "PATH")]
    trajectory: Option<PathBuf>,
    /// Radius on the position norm.
    #[arg(long)]
    bound: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DivergenceSettings {
    trajectory: Option<PathBuf>,
    bound: f64,
}

fn divergence(args: DivergenceArgs, config: &Value) -> CliResult {
    let flags = json!({ "trajectory": args.trajectory, "bound": args.bound });
    let s: DivergenceSettings = resolve(&DivergenceSettings { trajectory: None, bound: 2.0 }, config, flags)?;
    let traj = read_trajectory(required(&s.trajectory, "trajectory")?)?;
    // Index-based search; the time comes from the CSV so thinned files work too.
    match divergence_time(&traj.q, s.bound, 1.0)? {
        Some(j) => println!("{}", fmt_f64(traj.t[j as usize])),
        None => println!("none"),
    }
    Ok(())
}
