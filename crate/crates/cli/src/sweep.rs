//! Parameter sweeps: a grid over at most two scalar parameters, run in
//! parallel with per-point isolation and a deterministic long-format CSV.

use antilimit::error::{Error, Result};
use rayon::prelude::*;

use crate::commands::{error_cells, metric_columns, run_sweep_point};
use crate::config::{CommandSpec, RunConfig, SweepAxis};
use crate::output::{fmt_float, OutputBundle};

pub fn run_sweep(
    cfg: &RunConfig,
    axes: &[SweepAxis],
    inner: &CommandSpec,
    out: &mut OutputBundle,
) -> Result<Vec<(&'static str, String)>> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::Config(format!(
            "sweeps cover one or two scalar parameters, got {}",
            axes.len()
        )));
    }
    if matches!(inner, CommandSpec::Sweep { .. } | CommandSpec::Continue { .. }) {
        return Err(Error::Config(format!(
            "command {:?} cannot run inside a sweep",
            inner.cli_name()
        )));
    }
    let columns = metric_columns(inner)?;

    let mut values: Vec<Vec<f64>> = Vec::new();
    for axis in axes {
        let v = axis.path.values()?;
        if v.is_empty() {
            return Err(Error::Config(format!("sweep axis {} has no values", axis.param)));
        }
        values.push(v);
    }
    // lexicographic grid order: axis 0 outer, axis 1 inner
    let mut points: Vec<Vec<(String, f64)>> = Vec::new();
    match values.len() {
        1 => {
            for &a in &values[0] {
                points.push(vec![(axes[0].param.clone(), a)]);
            }
        }
        _ => {
            for &a in &values[0] {
                for &b in &values[1] {
                    points.push(vec![
                        (axes[0].param.clone(), a),
                        (axes[1].param.clone(), b),
                    ]);
                }
            }
        }
    }

    // rows computed in parallel; indexed collect keeps the order fixed
    let results: Vec<Result<Vec<(&'static str, String)>>> = points
        .par_iter()
        .map(|assignments| run_sweep_point(cfg, inner, assignments))
        .collect();

    let mut header: Vec<String> = axes.iter().map(|a| a.param.clone()).collect();
    header.push("status".into());
    header.push("error_kind".into());
    header.push("error".into());
    header.extend(columns.iter().map(|c| c.to_string()));

    let mut rows = Vec::with_capacity(points.len());
    let mut n_errors = 0usize;
    for (assignments, result) in points.iter().zip(&results) {
        let mut cells: Vec<String> =
            assignments.iter().map(|(_, v)| fmt_float(*v)).collect();
        match result {
            Ok(metrics) => {
                cells.push("ok".into());
                cells.push(String::new());
                cells.push(String::new());
                // metrics arrive in column order from run_single
                let mut by_name: Vec<(&str, &String)> =
                    metrics.iter().map(|(k, v)| (*k, v)).collect();
                for col in &columns {
                    let pos = by_name.iter().position(|(k, _)| k == col);
                    match pos {
                        Some(i) => {
                            cells.push(by_name[i].1.clone());
                            by_name.remove(i);
                        }
                        None => cells.push(String::new()),
                    }
                }
            }
            Err(e) => {
                n_errors += 1;
                let (kind, msg) = error_cells(e);
                cells.push("error".into());
                cells.push(kind);
                cells.push(msg);
                for _ in &columns {
                    cells.push(String::new());
                }
            }
        }
        rows.push(cells.join(","));
    }
    out.add_csv("sweep.csv", &header.join(","), rows);

    Ok(vec![
        ("points", points.len().to_string()),
        ("errors", n_errors.to_string()),
    ])
}
