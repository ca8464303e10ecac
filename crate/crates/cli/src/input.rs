use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use lsi_core::analysis::{GridAxis, GridSpec};
use lsi_core::bea::{bea_correct, BeaDirection};
use lsi_core::learn::{ModelKind, SavedModel};
use lsi_core::{BenchmarkSystem, KernelModel, LagrangianField, TrajectoryDataset};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, PathContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum SystemName {
    Pendulum,
    HenonHeiles,
}

impl SystemName {
    pub fn system(self, alpha: f64) -> CliResult<BenchmarkSystem> {
        Ok(match self {
            SystemName::Pendulum => BenchmarkSystem::Pendulum,
            SystemName::HenonHeiles => BenchmarkSystem::henon_heiles(alpha)?,
        })
    }
}

pub fn same_dim(expected: usize, found: usize) -> CliResult {
    if expected == found {
        Ok(())
    } else {
        Err(lsi_core::Error::DimensionMismatch { expected, found }.into())
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).at(path)
}

pub fn load_model(path: &Path) -> CliResult<SavedModel> {
    SavedModel::from_json(&read_text(path)?).at(path)
}

pub fn load_dataset(path: &Path) -> CliResult<TrajectoryDataset> {
    TrajectoryDataset::from_json(&read_text(path)?).at(path)
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> lsi_core::Result<()>) -> CliResult {
    let mut out = BufWriter::new(File::create(path).at(path)?);
    body(&mut out).at(path)?;
    out.flush().at(path)
}

pub fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).at(path)
}

/// Where a Lagrangian comes from: an analytic system or a trained kernel model.
#[derive(Debug, Clone)]
pub enum FieldSource {
    Reference(BenchmarkSystem),
    Model(KernelModel),
}

/// `ref:pendulum`, `ref:henon-heiles[:ALPHA]` or the path of a kernel model.
pub fn parse_field(spec: &str) -> CliResult<FieldSource> {
    if let Some(name) = spec.strip_prefix("ref:") {
        let mut parts = name.splitn(2, ':');
        let system = match (parts.next(), parts.next()) {
            (Some("pendulum"), None) => BenchmarkSystem::Pendulum,
            (Some("henon-heiles"), None) => BenchmarkSystem::henon_heiles(0.8)?,
            (Some("henon-heiles"), Some(a)) => BenchmarkSystem::henon_heiles(
                a.parse().map_err(|_| CliError::usage(format!("invalid alpha in field `{spec}`")))?,
            )?,
            _ => return Err(CliError::usage(format!("unknown reference field `{spec}`"))),
        };
        return Ok(FieldSource::Reference(system));
    }
    match load_model(Path::new(spec))? {
        SavedModel::Kernel(m) => Ok(FieldSource::Model(m)),
        SavedModel::Flow(_) => Err(CliError::usage(format!("{spec}: flow-map models have no Lagrangian"))),
    }
}

/// Direction of the backward error correction applied to a learned model.
///
/// LSI models learn the inverse modified Lagrangian and are mapped to the exact
/// one; the other learners target the exact Lagrangian and are mapped to the
/// modified Lagrangian that their discrete motion follows.
pub fn model_direction(kind: ModelKind) -> BeaDirection {
    match kind {
        ModelKind::Lsi => BeaDirection::InverseToExact,
        ModelKind::Lgp | ModelKind::LgpExact => BeaDirection::ExactToModified,
    }
}

/// Default correction order: 2 for LSI models, 0 otherwise.
pub fn default_order(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Lsi => 2,
        ModelKind::Lgp | ModelKind::LgpExact => 0,
    }
}

/// The Lagrangian of a field source, corrected to `order` for models.
pub fn build_field(source: &FieldSource, order: Option<usize>) -> CliResult<Box<dyn LagrangianField>> {
    match source {
        FieldSource::Reference(system) => match order {
            None | Some(0) => Ok(Box::new(system.lagrangian())),
            Some(k) => Err(CliError::usage(format!("reference fields take no correction (got order {k})"))),
        },
        FieldSource::Model(m) => {
            let order = order.unwrap_or(default_order(m.kind));
            Ok(Box::new(bea_correct(m.clone(), m.scheme, m.h, order, model_direction(m.kind))?))
        }
    }
}

/// Comma-separated axes, each `lo:hi:count` (free) or a single value (fixed).
pub fn parse_grid(spec: &str) -> CliResult<GridSpec> {
    let bad = || CliError::usage(format!("invalid grid `{spec}`: expected axes `lo:hi:count` or `value`"));
    let axes = spec
        .split(',')
        .map(|axis| {
            let parts: Vec<&str> = axis.trim().split(':').collect();
            match parts.as_slice() {
                [v] => Ok(GridAxis::Fixed(v.parse().map_err(|_| bad())?)),
                [lo, hi, n] => Ok(GridAxis::Free {
                    lo: lo.parse().map_err(|_| bad())?,
                    hi: hi.parse().map_err(|_| bad())?,
                    count: n.parse().map_err(|_| bad())?,
                }),
                _ => Err(bad()),
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(GridSpec::new(axes)?)
}

/// Columns of a trajectory CSV as written by `predict`.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryCsv {
    pub t: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub qd: Option<Vec<Vec<f64>>>,
    pub p: Option<Vec<Vec<f64>>>,
}

fn indexed(prefix: &str, name: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    rest.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| i - 1)
}

/// Reads `t,q1..qn[,qd1..qdn][,p1..pn]`.
pub fn read_trajectory(path: &Path) -> CliResult<TrajectoryCsv> {
    let mut reader = csv::Reader::from_path(path).at(path)?;
    let header = reader.headers().at(path)?.clone();
    let mut t_col = None;
    let (mut q_cols, mut qd_cols, mut p_cols) = (Vec::new(), Vec::new(), Vec::new());
    for (c, name) in header.iter().enumerate() {
        let name = name.trim();
        if name == "t" {
            t_col = Some(c);
        } else if let Some(i) = indexed("qd", name) {
            qd_cols.push((i, c));
        } else if let Some(i) = indexed("q", name) {
            q_cols.push((i, c));
        } else if let Some(i) = indexed("p", name) {
            p_cols.push((i, c));
        }
    }
    for cols in [&mut q_cols, &mut qd_cols, &mut p_cols] {
        cols.sort_unstable();
    }
    let t_col = t_col.ok_or_else(|| CliError::usage(format!("{}: missing `t` column", path.display())))?;
    let n = q_cols.len();
    let complete = |cols: &[(usize, usize)]| cols.iter().enumerate().all(|(k, &(i, _))| k == i);
    if n == 0 || !complete(&q_cols) {
        return Err(CliError::usage(format!("{}: expected position columns q1..qn", path.display())));
    }
    for (cols, label) in [(&qd_cols, "qd"), (&p_cols, "p")] {
        if !cols.is_empty() && (cols.len() != n || !complete(cols)) {
            return Err(CliError::usage(format!("{}: expected {label}1..{label}{n}", path.display())));
        }
    }

    let mut out = TrajectoryCsv {
        qd: (!qd_cols.is_empty()).then(Vec::new),
        p: (!p_cols.is_empty()).then(Vec::new),
        ..Default::default()
    };
    for (row, record) in reader.records().enumerate() {
        let record = record.at(path)?;
        let num = |c: usize| -> CliResult<f64> {
            record.get(c).and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
                CliError::usage(format!("{}: row {}: bad number in column {}", path.display(), row + 2, c + 1))
            })
        };
        let pick = |cols: &[(usize, usize)]| cols.iter().map(|&(_, c)| num(c)).collect::<CliResult<Vec<_>>>();
        out.t.push(num(t_col)?);
        out.q.push(pick(&q_cols)?);
        if let Some(qd) = out.qd.as_mut() {
            qd.push(pick(&qd_cols)?);
        }
        if let Some(p) = out.p.as_mut() {
            p.push(pick(&p_cols)?);
        }
    }
    if out.t.is_empty() {
        return Err(CliError::usage(format!("{}: trajectory has no rows", path.display())));
    }
    Ok(out)
}
