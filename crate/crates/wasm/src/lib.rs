//! Browser bindings for three explorable views of the lattice toolkit:
//! fiber zero-set scans, interval refinement trees, and invariant graphs
//! with their derivative diagnostics.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use antilimit::cantor::{certify, refine_1d};
use antilimit::fhim::{newton_solve_k, Interpolation, TorusGrid};
use antilimit::levelset::scan_fiber_1d;
use antilimit::model::{builtin_model, BaseDynamics, BuiltinParams, Mode};

fn err_js(e: antilimit::Error) -> JsValue {
    JsValue::from_str(&format!("{e}"))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ComponentView {
    points: Vec<(f64, f64)>,
    almost_horizontal: bool,
    max_abs_slope: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FiberView {
    components: Vec<ComponentView>,
    n_almost_horizontal: usize,
    slope_margin: f64,
    min_projection_width: Option<f64>,
}

/// Scan one fiber of a built-in family and return its traced components.
/// `model` is one of "linear", "double-well", "vs-family".
#[wasm_bindgen]
pub fn scan_fiber(
    model: &str,
    epsilon: f64,
    s: f64,
    theta: f64,
    grid: u32,
) -> Result<JsValue, JsValue> {
    let params = BuiltinParams {
        epsilon: Some(epsilon),
        s: (model == "vs-family").then_some(s),
        mode: Some(Mode::OneD),
        ..Default::default()
    };
    let m = builtin_model(model, &params).map_err(err_js)?;
    let rep = scan_fiber_1d(&m, &[theta], grid.clamp(64, 1024) as usize).map_err(err_js)?;
    let view = FiberView {
        components: rep
            .components
            .iter()
            .map(|c| ComponentView {
                points: c.points.clone(),
                almost_horizontal: c.almost_horizontal,
                max_abs_slope: c.max_abs_slope,
            })
            .collect(),
        n_almost_horizontal: rep.n_almost_horizontal,
        slope_margin: rep.slope_margin,
        min_projection_width: rep.min_projection_width,
    };
    serde_wasm_bindgen::to_value(&view).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TreeView {
    /// levels[d] = list of [lo, hi] intervals.
    levels: Vec<Vec<(f64, f64)>>,
    counts: Vec<usize>,
    max_diameter: Vec<f64>,
    box_dim: Option<f64>,
    min_gap: f64,
    certificate_pass: bool,
}

/// Refine the double-well system to the given depth and return the nested
/// interval sets together with the certificate summary.
#[wasm_bindgen]
pub fn refine_intervals(epsilon: f64, depth: u32) -> Result<JsValue, JsValue> {
    let m = builtin_model(
        "double-well",
        &BuiltinParams { epsilon: Some(epsilon), mode: Some(Mode::OneD), ..Default::default() },
    )
    .map_err(err_js)?;
    let fiber = scan_fiber_1d(&m, &[0.0], 384).map_err(err_js)?;
    let depth = depth.clamp(1, 10) as usize;
    let fibers = vec![fiber; depth];
    let tree = refine_1d(&m, &fibers, None).map_err(err_js)?;
    let cert = (depth >= 3)
        .then(|| certify(&tree, 1.0 - tree.max_slope, 1.0))
        .transpose()
        .map_err(err_js)?;
    let view = TreeView {
        levels: tree
            .levels
            .iter()
            .map(|l| l.iter().map(|n| n.interval).collect())
            .collect(),
        counts: tree.component_counts.clone(),
        max_diameter: tree.max_diameter.clone(),
        box_dim: cert.as_ref().and_then(|c| c.box_dim_estimate),
        min_gap: cert.as_ref().map(|c| c.min_gap).unwrap_or(f64::NAN),
        certificate_pass: cert.as_ref().map(|c| c.pass()).unwrap_or(false),
    };
    serde_wasm_bindgen::to_value(&view).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GraphView {
    theta: Vec<f64>,
    values: Vec<f64>,
    derivative: Vec<f64>,
    residual: f64,
    deriv_estimate: f64,
    iterations: usize,
}

/// Solve the invariant graph of the forced-pendulum family near the
/// hyperbolic branch and return K with its θ-derivative.
#[wasm_bindgen]
pub fn invariant_graph(gamma: f64, kappa: f64, n: u32) -> Result<JsValue, JsValue> {
    let m = builtin_model(
        "standard-map",
        &BuiltinParams {
            epsilon: Some(8.0),
            gamma: Some(gamma),
            kappa: Some(kappa),
            base: Some(BaseDynamics::golden()),
            ..Default::default()
        },
    )
    .map_err(err_js)?;
    let n = (n.clamp(32, 512) as usize).next_power_of_two();
    let grid = TorusGrid::new(n, Interpolation::Trigonometric).map_err(err_js)?;
    let g = newton_solve_k(&m, &grid, &vec![0.5; n]).map_err(err_js)?;
    let derivative = grid.derivative_values(&g.values);
    let view = GraphView {
        theta: grid.thetas(),
        values: g.values,
        derivative,
        residual: g.residual_norm,
        deriv_estimate: g.deriv_estimate,
        iterations: g.newton_iterations,
    };
    serde_wasm_bindgen::to_value(&view).map_err(|e| JsValue::from_str(&e.to_string()))
}
