//! One runner per subcommand: execute against the model, stage files into
//! the output bundle.

use antilimit::cantor::{certify, refine_1d};
use antilimit::error::{Error, Result};
use antilimit::fhim::{
    continue_parameter, gradient_flow, iterate_skew, lyapunov_exponents, newton_solve_k,
    ContinuationOptions, Interpolation, TorusGrid,
};
use antilimit::levelset::{scan_fiber_1d, scan_fiber_2d, FiberReport};
use antilimit::model::{verify_conditions, Mode, ModelInstance};
use antilimit::orbits::{solve_window_2d, MultistartSpec, OrbitSegment};
use antilimit::rotation::{construct_rotation_orbit, measure_rotation_number};
use serde::Serialize;

use crate::config::{CommandSpec, OutputSpec, RunConfig};
use crate::output::{csv_text, fmt_float, OutputBundle};

fn parse_interpolation(name: &str) -> Result<Interpolation> {
    match name {
        "trigonometric" | "trig" => Ok(Interpolation::Trigonometric),
        "linear" => Ok(Interpolation::Linear),
        other => Err(Error::Config(format!(
            "unknown interpolation {other:?}; expected trigonometric or linear"
        ))),
    }
}

fn theta_list(thetas: &Option<Vec<f64>>, theta_grid: usize) -> Vec<Vec<f64>> {
    match thetas {
        Some(list) => list.iter().map(|&t| vec![t]).collect(),
        None => (0..theta_grid).map(|i| vec![i as f64 / theta_grid as f64]).collect(),
    }
}

fn theta_header(dim: usize) -> String {
    (0..dim.max(1)).map(|j| format!("theta_{j}")).collect::<Vec<_>>().join(",")
}

fn theta_cells(theta: &[f64]) -> String {
    theta.iter().map(|t| fmt_float(*t)).collect::<Vec<_>>().join(",")
}

/// Per-θ scan outcome for the fiber report file.
#[derive(Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
enum ScanOutcome {
    Ok { theta: Vec<f64>, report: FiberReport },
    Error { theta: Vec<f64>, kind: String, message: String },
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Contract(_) => "contract",
        Error::Hypothesis(_) => "hypothesis",
        Error::Resolution(_) => "resolution",
        Error::BoundaryEscape(_) => "boundary-escape",
        Error::NoConvergence(_) => "no-convergence",
        Error::Existence(_) => "existence",
        Error::Degenerate(_) => "degenerate",
    }
}

fn segment_rows(m: &ModelInstance, seg: &OrbitSegment, prefix: &str) -> Result<Vec<String>> {
    let mut rows = Vec::with_capacity(seg.values.len());
    for (i, v) in seg.values.iter().enumerate() {
        let k = seg.k_min + i as i64;
        let theta = m.base.theta_at(k)?;
        let res = seg.residuals.get(i).copied();
        rows.push(format!(
            "{prefix}{k},{},{},{}",
            theta_cells(&theta),
            fmt_float(*v),
            res.map(fmt_float).unwrap_or_default()
        ));
    }
    Ok(rows)
}

/// Execute one (non-sweep) command against a model; stage files when
/// `out` is given, and always return sweep metric columns.
pub fn run_single(
    m: &ModelInstance,
    cmd: &CommandSpec,
    output: &OutputSpec,
    bundle: Option<&mut OutputBundle>,
) -> Result<Vec<(&'static str, String)>> {
    let dim = m.base.dim();
    let mut metrics: Vec<(&'static str, String)> = Vec::new();
    let mut sink = OutputBundle::default();
    let out = bundle.unwrap_or(&mut sink);

    match cmd {
        CommandSpec::Verify { grid } => {
            let rep = verify_conditions(m, *grid)?;
            metrics.push(("c0", rep.c0_pass.to_string()));
            metrics.push(("c1", rep.c1_pass.to_string()));
            metrics.push(("c2", rep.c2_pass.to_string()));
            metrics.push(("max_abs_z", fmt_float(rep.max_abs_z.value)));
            if output.wants("json") {
                out.add_json("conditions.json", &rep)?;
            }
        }
        CommandSpec::ScanFiber { thetas, theta_grid, grid, sheets, slices } => {
            let points = theta_list(thetas, *theta_grid);
            if *sheets {
                if m.mode() != Mode::TwoD {
                    return Err(Error::Contract("sheet scans need a two-dimensional model".into()));
                }
                let reports: Vec<_> = points
                    .iter()
                    .map(|t| scan_fiber_2d(m, t, *slices, *grid))
                    .collect();
                let n_err = reports.iter().filter(|r| r.is_err()).count();
                let counts: Vec<usize> = reports
                    .iter()
                    .filter_map(|r| r.as_ref().ok().map(|x| x.n_almost_horizontal))
                    .collect();
                metrics.push(("n_theta", points.len().to_string()));
                metrics.push(("errors", n_err.to_string()));
                metrics.push(("count_min", counts.iter().min().map_or_else(String::new, |v| v.to_string())));
                metrics.push(("count_max", counts.iter().max().map_or_else(String::new, |v| v.to_string())));
                if output.wants("json") {
                    let entries: Vec<serde_json::Value> = points
                        .iter()
                        .zip(&reports)
                        .map(|(t, r)| match r {
                            Ok(rep) => serde_json::json!({"status": "ok", "theta": t, "report": rep}),
                            Err(e) => serde_json::json!({
                                "status": "error", "theta": t,
                                "kind": error_kind(e), "message": format!("{e}"),
                            }),
                        })
                        .collect();
                    out.add_json("fibers.json", &entries)?;
                }
            } else {
                let reports: Vec<std::result::Result<FiberReport, Error>> =
                    points.iter().map(|t| scan_fiber_1d(m, t, *grid)).collect();
                let n_err = reports.iter().filter(|r| r.is_err()).count();
                let counts: Vec<usize> = reports
                    .iter()
                    .filter_map(|r| r.as_ref().ok().map(|x| x.n_almost_horizontal))
                    .collect();
                let n_multi = counts.iter().filter(|c| **c >= 2).count();
                let max_slope = reports
                    .iter()
                    .filter_map(|r| r.as_ref().ok())
                    .flat_map(|r| r.almost_horizontal().map(|c| c.max_abs_slope))
                    .fold(0.0_f64, f64::max);
                let min_width = reports
                    .iter()
                    .filter_map(|r| r.as_ref().ok().and_then(|x| x.min_projection_width))
                    .fold(f64::INFINITY, f64::min);
                metrics.push(("n_theta", points.len().to_string()));
                metrics.push(("errors", n_err.to_string()));
                metrics.push(("count_min", counts.iter().min().map_or_else(String::new, |v| v.to_string())));
                metrics.push(("count_max", counts.iter().max().map_or_else(String::new, |v| v.to_string())));
                metrics.push(("n_multi", n_multi.to_string()));
                metrics.push(("max_slope", if max_slope > 0.0 { fmt_float(max_slope) } else { String::new() }));
                metrics.push((
                    "min_width",
                    if min_width.is_finite() { fmt_float(min_width) } else { String::new() },
                ));

                if output.wants("json") {
                    let entries: Vec<ScanOutcome> = points
                        .iter()
                        .zip(&reports)
                        .map(|(t, r)| match r {
                            Ok(rep) => ScanOutcome::Ok { theta: t.clone(), report: rep.clone() },
                            Err(e) => ScanOutcome::Error {
                                theta: t.clone(),
                                kind: error_kind(e).into(),
                                message: format!("{e}"),
                            },
                        })
                        .collect();
                    out.add_json("fibers.json", &entries)?;
                }
                if output.wants("csv") {
                    let mut rows = Vec::new();
                    for (t, r) in points.iter().zip(&reports) {
                        if let Ok(rep) = r {
                            for (ci, comp) in rep.components.iter().enumerate() {
                                for &(x, y) in &comp.points {
                                    rows.push(format!(
                                        "{},{ci},{},{}",
                                        theta_cells(t),
                                        fmt_float(x),
                                        fmt_float(y)
                                    ));
                                }
                            }
                        }
                    }
                    out.add_csv(
                        "polylines.csv",
                        &format!("{},component,x,y", theta_header(dim)),
                        rows,
                    );
                }
            }
        }
        CommandSpec::SolveWindow { l, a, b, zeros_grid, max_seeds, itinerary } => {
            let spec = MultistartSpec {
                zeros_grid: *zeros_grid,
                max_seeds: *max_seeds,
                itinerary: itinerary.clone(),
            };
            let set = solve_window_2d(m, *l, *a, *b, &spec)?;
            metrics.push(("n_solutions", set.segments.len().to_string()));
            metrics.push(("complete", set.complete.to_string()));
            let max_res = set
                .segments
                .iter()
                .map(|s| s.max_residual())
                .fold(0.0_f64, f64::max);
            metrics.push(("max_residual", fmt_float(max_res)));
            if output.wants("json") {
                out.add_json("solutions.json", &set)?;
            }
            if output.wants("csv") {
                let mut rows = Vec::new();
                for (si, seg) in set.segments.iter().enumerate() {
                    rows.extend(segment_rows(m, seg, &format!("{si},"))?);
                }
                out.add_csv(
                    "solutions.csv",
                    &format!("solution,k,{},x_k,residual_k", theta_header(dim)),
                    rows,
                );
            }
        }
        CommandSpec::Refine { depth, grid, itinerary } => match m.mode() {
            Mode::OneD => {
                let tree = run_refine(m, *depth, *grid, itinerary.as_deref())?;
                metrics.push(("leaf_count", tree.component_counts[tree.depth].to_string()));
                metrics.push(("max_diameter", fmt_float(tree.max_diameter[tree.depth])));
                stage_tree(out, output, &tree)?;
            }
            Mode::TwoD => {
                let mut fibers = Vec::with_capacity(2 * depth + 1);
                for site in -(*depth as i64)..=(*depth as i64) {
                    let theta = m.base.theta_at(site)?;
                    fibers.push(scan_fiber_2d(m, &theta, 9, *grid)?);
                }
                let tree = antilimit::cantor::refine_2d(
                    m,
                    &fibers,
                    0,
                    0,
                    *depth,
                    None,
                    antilimit::cantor::RegionSampling::default(),
                )?;
                let counts = tree.w_counts();
                metrics.push(("leaf_count", counts[tree.depth].to_string()));
                metrics.push(("max_diameter", fmt_float(tree.forward_y_width[tree.depth])));
                if output.wants("json") {
                    out.add_json("tree.json", &tree)?;
                }
                if output.wants("csv") {
                    let rows = (0..=tree.depth)
                        .map(|d| {
                            format!(
                                "{d},{},{},{}",
                                counts[d],
                                fmt_float(tree.forward_y_width[d]),
                                fmt_float(tree.backward_z_width[d])
                            )
                        })
                        .collect();
                    out.add_csv(
                        "tree.csv",
                        "depth,count,forward_strip_width,backward_strip_width",
                        rows,
                    );
                }
            }
        },
        CommandSpec::Certify { depth, grid, delta, rho } => {
            let tree = run_refine(m, *depth, *grid, None)?;
            let delta = delta.unwrap_or(1.0 - tree.max_slope);
            let cert = certify(&tree, delta, *rho)?;
            metrics.push(("pass", cert.pass().to_string()));
            metrics.push((
                "box_dim",
                cert.box_dim_estimate.map(fmt_float).unwrap_or_default(),
            ));
            stage_tree(out, output, &tree)?;
            if output.wants("json") {
                out.add_json("certificate.json", &cert)?;
            }
        }
        CommandSpec::RotationOrbit { omega, l, a, b } => {
            let orbit = construct_rotation_orbit(m, *omega, *l, *a, *b, &MultistartSpec::default())?;
            metrics.push(("forward", fmt_float(orbit.forward_rotation)));
            metrics.push(("max_deviation", fmt_float(orbit.max_deviation)));
            if output.wants("json") {
                out.add_json(
                    "rotation.json",
                    &serde_json::json!({
                        "omega": orbit.omega,
                        "forward": orbit.forward_rotation,
                        "backward": orbit.backward_rotation,
                        "max_deviation": orbit.max_deviation,
                        "window": [orbit.segment.k_min, orbit.segment.k_max],
                    }),
                )?;
            }
            if output.wants("csv") {
                let measure = measure_rotation_number(&orbit.y, (*l) as usize)?;
                let mut rows = Vec::new();
                for (i, y) in orbit.y.iter().enumerate() {
                    let k = -*l + i as i64;
                    let rho = if k > 0 {
                        fmt_float(measure.profile[(k - 1) as usize])
                    } else {
                        String::new()
                    };
                    rows.push(format!(
                        "{k},{},{},{},{rho}",
                        fmt_float(orbit.staircase[i]),
                        fmt_float(orbit.segment.values[i]),
                        fmt_float(*y)
                    ));
                }
                out.add_csv("rotation.csv", "k,m_k,x_k,y_k,rho_partial", rows);
            }
        }
        CommandSpec::SolveK { n, interpolation, guess } => {
            let grid = TorusGrid::new(*n, parse_interpolation(interpolation)?)?;
            let g = newton_solve_k(m, &grid, &vec![*guess; *n])?;
            metrics.push(("residual", fmt_float(g.residual_norm)));
            metrics.push(("deriv_estimate", fmt_float(g.deriv_estimate)));
            metrics.push(("newton_iters", g.newton_iterations.to_string()));
            if output.wants("json") {
                out.add_json("graph_k.json", &g)?;
            }
            if output.wants("csv") {
                let derivs = grid.derivative_values(&g.values);
                let rows = grid
                    .thetas()
                    .iter()
                    .zip(g.values.iter().zip(&derivs))
                    .map(|(t, (k, d))| {
                        format!("{},{},{}", fmt_float(*t), fmt_float(*k), fmt_float(*d))
                    })
                    .collect();
                out.add_csv("graph_k.csv", "theta,K,dK_dtheta", rows);
            }
        }
        CommandSpec::Continue { .. } => {
            return Err(Error::Contract(
                "continuation needs the full run context; handled in run_command".into(),
            ))
        }
        CommandSpec::Iterate { theta0, x0, x_minus1, steps } => {
            let t0 = if theta0.is_empty() { vec![0.0; dim.max(1)] } else { theta0.clone() };
            let traj = iterate_skew(m, &t0, *x0, *x_minus1, *steps)?;
            metrics.push(("steps_completed", traj.steps_completed.to_string()));
            metrics.push(("truncated", traj.truncated.to_string()));
            if output.wants("csv") {
                let base = m.base.clone().with_theta0(t0.clone());
                let mut rows = Vec::new();
                for (i, x) in traj.x.iter().enumerate() {
                    let k = i as i64 - 1;
                    let theta = base.theta_at(k)?;
                    rows.push(format!("{k},{},{}", theta_cells(&theta), fmt_float(*x)));
                }
                out.add_csv(
                    "trajectory.csv",
                    &format!("k,{},x_k", theta_header(dim)),
                    rows,
                );
            }
            if output.wants("json") {
                out.add_json("trajectory.json", &traj)?;
            }
        }
        CommandSpec::Lyapunov { theta0, x0, x_minus1, steps } => {
            let t0 = if theta0.is_empty() { vec![0.0; dim.max(1)] } else { theta0.clone() };
            let traj = iterate_skew(m, &t0, *x0, *x_minus1, *steps)?;
            if traj.truncated {
                out.warn(format!(
                    "trajectory truncated after {} steps; exponents cover the available window",
                    traj.steps_completed
                ));
            }
            let rep = lyapunov_exponents(m, &traj, *steps)?;
            metrics.push(("lambda1", fmt_float(rep.lambda1)));
            metrics.push(("lambda2", rep.lambda2.map(fmt_float).unwrap_or_default()));
            if output.wants("json") {
                out.add_json("lyapunov.json", &rep)?;
            }
        }
        CommandSpec::GradientFlow { l, a, b, t_end, dt } => {
            let res = gradient_flow(m, *l, *a, *b, *t_end, *dt)?;
            if !res.converged {
                out.warn(format!(
                    "gradient flow stopped at rate {} after t = {}; partial result",
                    res.final_rate, res.t_end
                ));
            }
            metrics.push(("converged", res.converged.to_string()));
            metrics.push(("final_rate", fmt_float(res.final_rate)));
            if output.wants("json") {
                out.add_json("flow.json", &res)?;
            }
            if output.wants("csv") {
                let rows = segment_rows(m, &res.segment, "")?;
                out.add_csv(
                    "flow.csv",
                    &format!("k,{},x_k,residual_k", theta_header(dim)),
                    rows,
                );
            }
        }
        CommandSpec::Sweep { .. } => {
            return Err(Error::Contract("sweeps cannot nest".into()));
        }
    }
    Ok(metrics)
}

/// Fibers for the refinement: one scan per site 0 ‥ depth−1.
fn run_refine(
    m: &ModelInstance,
    depth: usize,
    grid: usize,
    itinerary: Option<&[usize]>,
) -> Result<antilimit::cantor::RefinementTree> {
    if m.mode() != Mode::OneD {
        return Err(Error::Contract(
            "refinement commands need a one-dimensional model (params.mode = \"oneD\")".into(),
        ));
    }
    let mut fibers = Vec::with_capacity(depth);
    for site in 0..depth {
        let theta = m.base.theta_at(site as i64)?;
        fibers.push(scan_fiber_1d(m, &theta, grid)?);
    }
    refine_1d(m, &fibers, itinerary)
}

fn stage_tree(
    out: &mut OutputBundle,
    output: &OutputSpec,
    tree: &antilimit::cantor::RefinementTree,
) -> Result<()> {
    if output.wants("json") {
        out.add_json("tree.json", tree)?;
    }
    if output.wants("csv") {
        let rows = (0..=tree.depth)
            .map(|d| {
                format!(
                    "{d},{},{}",
                    tree.component_counts[d],
                    fmt_float(tree.max_diameter[d])
                )
            })
            .collect();
        out.add_csv("tree.csv", "depth,count,max_diameter", rows);
    }
    Ok(())
}

/// Execute the continuation command (needs the model *spec* to rebuild the
/// model per parameter value).
pub fn run_continue(
    cfg: &RunConfig,
    output: &OutputSpec,
    out: &mut OutputBundle,
) -> Result<Vec<(&'static str, String)>> {
    let CommandSpec::Continue { param, path, n, interpolation, guess, deriv_threshold, grid_cap } =
        &cfg.command
    else {
        return Err(Error::Contract("run_continue called on a non-continuation command".into()));
    };
    let grid = TorusGrid::new(*n, parse_interpolation(interpolation)?)?;
    let values = path.values()?;
    let spec = cfg.model.clone();
    let pname = param.clone();
    let scan = continue_parameter(
        move |v| spec.with_param(&pname, v)?.build(),
        &grid,
        &values,
        &vec![*guess; *n],
        &ContinuationOptions { deriv_threshold: *deriv_threshold, grid_cap: *grid_cap },
    )?;
    let metrics: Vec<(&'static str, String)> = vec![
        ("steps", scan.steps.len().to_string()),
        ("critical", scan.critical.map(fmt_float).unwrap_or_default()),
    ];
    if output.wants("json") {
        out.add_json("scan.json", &scan)?;
    }
    if output.wants("csv") {
        let rows = scan
            .steps
            .iter()
            .map(|s| {
                format!(
                    "{},{},{},{},{}",
                    fmt_float(s.param),
                    if s.residual.is_nan() { String::new() } else { fmt_float(s.residual) },
                    if s.deriv_estimate.is_nan() {
                        String::new()
                    } else {
                        fmt_float(s.deriv_estimate)
                    },
                    s.newton_iterations,
                    s.grid_n
                )
            })
            .collect();
        out.add_csv("scan.csv", "param,residual,deriv_estimate,newton_iters,grid_N", rows);
    }
    Ok(metrics)
}

/// Header columns a command contributes to the sweep CSV, in order.
pub fn metric_columns(cmd: &CommandSpec) -> Result<Vec<&'static str>> {
    Ok(match cmd {
        CommandSpec::Verify { .. } => vec!["c0", "c1", "c2", "max_abs_z"],
        CommandSpec::ScanFiber { sheets: true, .. } => {
            vec!["n_theta", "errors", "count_min", "count_max"]
        }
        CommandSpec::ScanFiber { .. } => vec![
            "n_theta",
            "errors",
            "count_min",
            "count_max",
            "n_multi",
            "max_slope",
            "min_width",
        ],
        CommandSpec::SolveWindow { .. } => vec!["n_solutions", "complete", "max_residual"],
        CommandSpec::SolveK { .. } => vec!["residual", "deriv_estimate", "newton_iters"],
        CommandSpec::Lyapunov { .. } => vec!["lambda1", "lambda2"],
        CommandSpec::RotationOrbit { .. } => vec!["forward", "max_deviation"],
        CommandSpec::Refine { .. } => vec!["leaf_count", "max_diameter"],
        CommandSpec::Certify { .. } => vec!["pass", "box_dim"],
        CommandSpec::GradientFlow { .. } => vec!["converged", "final_rate"],
        CommandSpec::Iterate { .. } => vec!["steps_completed", "truncated"],
        other => {
            return Err(Error::Config(format!(
                "command {:?} cannot run inside a sweep",
                other.cli_name()
            )))
        }
    })
}

/// Run one sweep point: rebuild the model with the axis values applied and
/// collect the inner command's metrics.
pub fn run_sweep_point(
    cfg: &RunConfig,
    inner: &CommandSpec,
    assignments: &[(String, f64)],
) -> Result<Vec<(&'static str, String)>> {
    let mut spec = cfg.model.clone();
    for (name, value) in assignments {
        spec = spec.with_param(name, *value)?;
    }
    let m = spec.build()?;
    // metrics only: no files from individual sweep points
    let quiet = OutputSpec { formats: vec![], ..Default::default() };
    run_single(&m, inner, &quiet, None)
}

pub fn error_cells(e: &Error) -> (String, String) {
    (error_kind(e).to_string(), csv_text(&format!("{e}")))
}
