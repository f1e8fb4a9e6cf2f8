//! The smooth invariant graph K(θ) on a torus grid: damped Newton on the
//! discretized functional ε·Z(θ, K(θ+ω), K(θ), K(θ−ω)) + V(θ, K(θ)) = 0,
//! parameter continuation with breakdown detection, skew-map iteration,
//! Lyapunov exponents by QR cocycle accumulation, and the lattice gradient
//! flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BaseDynamics, Mode, ModelInstance};
use crate::numerics::{bisect, dense_lu_solve};
use crate::orbits::{OrbitSegment, SolveMethod};

/// Residual ceiling for an accepted invariant graph.
pub const GRAPH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trigonometric,
    Linear,
}

/// Uniform periodic grid θ_i = i/N with an interpolation rule for off-grid
/// evaluation of grid functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub n: usize,
    pub interpolation: Interpolation,
}

impl TorusGrid {
    pub fn new(n: usize, interpolation: Interpolation) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Contract(format!(
                "torus grid size must be a power of two ≥ 8, got {n}"
            )));
        }
        Ok(TorusGrid { n, interpolation })
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n).map(|i| i as f64 / self.n as f64).collect()
    }

    /// Modified Dirichlet kernel of the even-N trigonometric interpolant.
    fn dirichlet(&self, t: f64) -> f64 {
        let n = self.n as f64;
        let u = t - t.round();
        if u.abs() < 1e-15 {
            return 1.0;
        }
        (std::f64::consts::PI * n * u).sin() / (n * (std::f64::consts::PI * u).tan())
    }

    /// Convolution weights w with (shift_s K)_i = Σ_m w[m] · K_{(i+m) mod N}.
    pub fn shift_kernel(&self, s: f64) -> Vec<f64> {
        let n = self.n;
        match self.interpolation {
            Interpolation::Trigonometric => {
                (0..n).map(|m| self.dirichlet(s - m as f64 / n as f64)).collect()
            }
            Interpolation::Linear => {
                let mut w = vec![0.0; n];
                let sn = s.rem_euclid(1.0) * n as f64;
                let j0 = sn.floor() as usize % n;
                let frac = sn - sn.floor();
                w[j0] += 1.0 - frac;
                w[(j0 + 1) % n] += frac;
                w
            }
        }
    }

    /// Apply a shift kernel to grid values.
    pub fn apply_kernel(&self, kernel: &[f64], values: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert!(kernel.len() == n && values.len() == n);
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (m, w) in kernel.iter().enumerate() {
                    if *w != 0.0 {
                        acc += w * values[(i + m) % n];
                    }
                }
                acc
            })
            .collect()
    }

    /// Evaluate the interpolant of grid values at an arbitrary point.
    pub fn eval_at(&self, values: &[f64], theta: f64) -> f64 {
        let n = self.n;
        match self.interpolation {
            Interpolation::Trigonometric => (0..n)
                .map(|j| values[j] * self.dirichlet(theta - j as f64 / n as f64))
                .sum(),
            Interpolation::Linear => {
                let tn = theta.rem_euclid(1.0) * n as f64;
                let j0 = tn.floor() as usize % n;
                let frac = tn - tn.floor();
                (1.0 - frac) * values[j0] + frac * values[(j0 + 1) % n]
            }
        }
    }

    /// dK/dθ on the grid: spectral for trigonometric interpolation, central
    /// differences for linear.
    pub fn derivative_values(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        match self.interpolation {
            Interpolation::Trigonometric => {
                // real DFT coefficients by direct sums
                let nf = n as f64;
                let half = n / 2;
                let mut deriv = vec![0.0_f64; n];
                for m in 1..half {
                    let (mut am, mut bm) = (0.0, 0.0);
                    for (j, &v) in values.iter().enumerate() {
                        let ang = std::f64::consts::TAU * m as f64 * j as f64 / nf;
                        am += v * ang.cos();
                        bm += v * ang.sin();
                    }
                    am *= 2.0 / nf;
                    bm *= 2.0 / nf;
                    let w = std::f64::consts::TAU * m as f64;
                    for (i, d) in deriv.iter_mut().enumerate() {
                        let ang = std::f64::consts::TAU * m as f64 * i as f64 / nf;
                        *d += w * (-am * ang.sin() + bm * ang.cos());
                    }
                }
                deriv
            }
            Interpolation::Linear => {
                let nf = n as f64;
                (0..n)
                    .map(|i| (values[(i + 1) % n] - values[(i + n - 1) % n]) * nf / 2.0)
                    .collect()
            }
        }
    }

    /// Max |dK/dθ| on the grid.
    pub fn max_derivative(&self, values: &[f64]) -> f64 {
        self.derivative_values(values)
            .iter()
            .fold(0.0_f64, |mx, d| mx.max(d.abs()))
    }
}

/// Discretized invariant graph with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphK {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
    /// sup over the grid of the functional residual.
    pub residual_norm: f64,
    /// max |∂K/∂θ| under the declared interpolation.
    pub deriv_estimate: f64,
    pub newton_iterations: usize,
}

impl GraphK {
    pub fn flat(grid: TorusGrid, value: f64) -> Self {
        GraphK {
            grid,
            values: vec![value; grid.n],
            residual_norm: f64::INFINITY,
            deriv_estimate: 0.0,
            newton_iterations: 0,
        }
    }
}

fn rotation_number(m: &ModelInstance) -> Result<f64> {
    match &m.base {
        BaseDynamics::Rotation { omega, .. } if omega.len() == 1 => Ok(omega[0]),
        BaseDynamics::Rotation { .. } => Err(Error::Contract(
            "graph solves support one-dimensional rotation bases only".into(),
        )),
        _ => Err(Error::Contract("graph solves need a rotation base".into())),
    }
}

/// Functional residual of grid values under the declared interpolation.
pub fn graph_residual(m: &ModelInstance, grid: &TorusGrid, values: &[f64]) -> Result<Vec<f64>> {
    let omega = rotation_number(m)?;
    let plus = grid.apply_kernel(&grid.shift_kernel(omega), values);
    let minus = grid.apply_kernel(&grid.shift_kernel(-omega), values);
    let thetas = grid.thetas();
    let mut out = Vec::with_capacity(grid.n);
    for i in 0..grid.n {
        let th = [thetas[i]];
        let r = match m.mode() {
            Mode::TwoD => m.eval_f(&th, &[plus[i], values[i], minus[i]])?,
            Mode::OneD => m.eval_f(&th, &[plus[i], values[i]])?,
        };
        out.push(r);
    }
    Ok(out)
}

enum GraphFailure {
    Stagnated { last: Vec<f64>, residual: f64, iterations: usize },
    Singular,
}

fn newton_graph_inner(
    m: &ModelInstance,
    grid: &TorusGrid,
    guess: &[f64],
) -> std::result::Result<GraphK, GraphFailure> {
    let n = grid.n;
    let omega = rotation_number(m).expect("checked by caller");
    let kernel_plus = grid.shift_kernel(omega);
    let kernel_minus = grid.shift_kernel(-omega);
    let thetas = grid.thetas();

    let residual = |values: &[f64]| -> Vec<f64> {
        let plus = grid.apply_kernel(&kernel_plus, values);
        let minus = grid.apply_kernel(&kernel_minus, values);
        (0..n)
            .map(|i| {
                let th = [thetas[i]];
                match m.mode() {
                    Mode::TwoD => m.eval_f(&th, &[plus[i], values[i], minus[i]]).expect("arity"),
                    Mode::OneD => m.eval_f(&th, &[plus[i], values[i]]).expect("arity"),
                }
            })
            .collect()
    };
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |mx, r| mx.max(r.abs()));

    let mut values = guess.to_vec();
    let mut f = residual(&values);
    let mut fnorm = sup(&f);
    let mut slow_steps = 0usize;
    let mut iterations = 0usize;

    while fnorm > GRAPH_TOL {
        if iterations >= 60 || slow_steps >= 5 {
            return Err(GraphFailure::Stagnated { last: values, residual: fnorm, iterations });
        }
        iterations += 1;

        // assemble the dense Jacobian: diagonal + two shifted quasi-diagonals
        let plus = grid.apply_kernel(&kernel_plus, &values);
        let minus = grid.apply_kernel(&kernel_minus, &values);
        let mut jac = vec![0.0_f64; n * n];
        for i in 0..n {
            let th = [thetas[i]];
            let (dza, dzb, dzc) = match m.mode() {
                Mode::TwoD => {
                    let args = [plus[i], values[i], minus[i]];
                    (
                        m.coupling.partial(&th, &args, 0),
                        m.coupling.partial(&th, &args, 1),
                        m.coupling.partial(&th, &args, 2),
                    )
                }
                Mode::OneD => {
                    let args = [plus[i], values[i]];
                    (
                        m.coupling.partial(&th, &args, 0),
                        m.coupling.partial(&th, &args, 1),
                        0.0,
                    )
                }
            };
            let dv = m.dv_dy(&th, values[i]);
            let row = &mut jac[i * n..(i + 1) * n];
            for mshift in 0..n {
                let j = (i + mshift) % n;
                let mut entry = m.epsilon * dza * kernel_plus[mshift];
                if m.mode() == Mode::TwoD {
                    entry += m.epsilon * dzc * kernel_minus[mshift];
                }
                row[j] += entry;
            }
            row[i] += m.epsilon * dzb + dv;
        }
        let mut rhs: Vec<f64> = f.iter().map(|r| -r).collect();
        if !dense_lu_solve(&mut jac, n, &mut rhs) {
            return Err(GraphFailure::Singular);
        }

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> =
                values.iter().zip(&rhs).map(|(v, d)| v + t * d).collect();
            let ftrial = residual(&trial);
            let fnorm_trial = sup(&ftrial);
            if fnorm_trial < fnorm {
                slow_steps = if fnorm_trial > 0.9 * fnorm { slow_steps + 1 } else { 0 };
                values = trial;
                f = ftrial;
                fnorm = fnorm_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(GraphFailure::Stagnated { last: values, residual: fnorm, iterations });
        }
    }

    let deriv = grid.max_derivative(&values);
    Ok(GraphK {
        grid: *grid,
        values,
        residual_norm: fnorm,
        deriv_estimate: deriv,
        newton_iterations: iterations,
    })
}

/// Damped Newton for the invariant graph on a torus grid, starting from
/// `guess` (grid values or a flat constant).
pub fn newton_solve_k(m: &ModelInstance, grid: &TorusGrid, guess: &[f64]) -> Result<GraphK> {
    rotation_number(m)?;
    if guess.len() != grid.n {
        return Err(Error::Contract(format!(
            "guess length {} does not match grid size {}",
            guess.len(),
            grid.n
        )));
    }
    if guess.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("guess contains non-finite values".into()));
    }
    match newton_graph_inner(m, grid, guess) {
        Ok(g) => Ok(g),
        Err(GraphFailure::Stagnated { residual, iterations, .. }) => Err(Error::NoConvergence(
            format!(
                "graph Newton stagnated after {iterations} iterations at residual {residual:.3e} \
                 (grid {})",
                grid.n
            ),
        )),
        Err(GraphFailure::Singular) => Err(Error::NoConvergence(
            "graph Jacobian is numerically singular".into(),
        )),
    }
}

/// One record of a continuation scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanStep {
    pub param: f64,
    pub converged: bool,
    pub residual: f64,
    pub deriv_estimate: f64,
    pub newton_iterations: usize,
    pub grid_n: usize,
}

/// Continuation along a parameter path with breakdown detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownScan {
    pub steps: Vec<ScanStep>,
    /// First parameter value at which the smooth branch was lost (Newton
    /// failure or derivative blow-up after grid doubling up to the cap).
    /// Critical values are upper bounds at the recorded grid sizes.
    pub critical: Option<f64>,
    /// Whether the derivative estimates were nondecreasing along the path
    /// (recorded, never assumed).
    pub deriv_nondecreasing: bool,
    pub deriv_threshold: f64,
    pub grid_cap: usize,
}

/// Options for [`continue_parameter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub deriv_threshold: f64,
    /// Grid doubling stops at this size.
    pub grid_cap: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { deriv_threshold: 1e4, grid_cap: 4096 }
    }
}

/// Interpolate grid values onto a doubled grid.
fn double_grid(grid: &TorusGrid, values: &[f64]) -> (TorusGrid, Vec<f64>) {
    let fine = TorusGrid { n: grid.n * 2, interpolation: grid.interpolation };
    let vals = (0..fine.n)
        .map(|i| grid.eval_at(values, i as f64 / fine.n as f64))
        .collect();
    (fine, vals)
}

/// Secant-predictor continuation of the invariant graph along a monotone
/// parameter path. `make_model` wires the model at a given parameter value.
/// The scan never errors: it records what it found and stops at breakdown.
pub fn continue_parameter<F>(
    make_model: F,
    grid: &TorusGrid,
    path: &[f64],
    guess: &[f64],
    opts: &ContinuationOptions,
) -> Result<BreakdownScan>
where
    F: Fn(f64) -> Result<ModelInstance>,
{
    if path.is_empty() {
        return Err(Error::Contract("empty continuation path".into()));
    }
    let monotone = path.windows(2).all(|w| w[1] > w[0]) || path.windows(2).all(|w| w[1] < w[0]);
    if !monotone && path.len() > 1 {
        return Err(Error::Contract("continuation path must be strictly monotone".into()));
    }

    let mut steps: Vec<ScanStep> = Vec::with_capacity(path.len());
    let mut critical = None;
    let mut nondecreasing = true;
    let mut last_deriv = 0.0_f64;

    let mut cur_grid = *grid;
    let mut cur: Vec<f64> = guess.to_vec();
    let mut prev: Option<(f64, Vec<f64>)> = None;

    for (si, &p) in path.iter().enumerate() {
        let model = make_model(p)?;
        rotation_number(&model)?;
        // secant predictor once two accepted points exist
        let seed: Vec<f64> = match &prev {
            Some((p_prev, k_prev)) if steps.last().is_some_and(|s| s.converged) => {
                let p_cur = steps.last().map(|s| s.param).unwrap_or(p);
                let denom = p_cur - *p_prev;
                if denom != 0.0 && k_prev.len() == cur.len() {
                    let t = (p - p_cur) / denom;
                    cur.iter()
                        .zip(k_prev)
                        .map(|(kc, kp)| kc + t * (kc - kp))
                        .collect()
                } else {
                    cur.clone()
                }
            }
            _ => cur.clone(),
        };

        let mut attempt_grid = cur_grid;
        let mut attempt_seed = seed.clone();
        // on failure, first drop the secant prediction and reuse the last
        // converged graph as-is, then start doubling the grid from it
        let mut tried_plain = seed == cur;
        let mut accepted: Option<GraphK> = None;
        loop {
            match newton_graph_inner(&model, &attempt_grid, &attempt_seed) {
                Ok(g) if g.deriv_estimate <= opts.deriv_threshold => {
                    accepted = Some(g);
                    break;
                }
                Ok(g) => {
                    // derivative blow-up: refine before declaring breakdown
                    if attempt_grid.n * 2 > opts.grid_cap {
                        accepted = Some(g); // recorded, but flagged below
                        break;
                    }
                    let (fg, fv) = double_grid(&attempt_grid, &g.values);
                    attempt_grid = fg;
                    attempt_seed = fv;
                }
                Err(_) if !tried_plain => {
                    tried_plain = true;
                    attempt_seed = if attempt_grid.n == cur_grid.n {
                        cur.clone()
                    } else {
                        double_grid(&cur_grid, &cur).1
                    };
                }
                Err(GraphFailure::Stagnated { .. }) => {
                    if attempt_grid.n * 2 > opts.grid_cap {
                        break;
                    }
                    let fine = TorusGrid { n: attempt_grid.n * 2, interpolation: cur_grid.interpolation };
                    attempt_seed = (0..fine.n)
                        .map(|i| cur_grid.eval_at(&cur, i as f64 / fine.n as f64))
                        .collect();
                    attempt_grid = fine;
                }
                Err(GraphFailure::Singular) => break,
            }
        }

        match accepted {
            Some(g) if g.deriv_estimate <= opts.deriv_threshold => {
                if g.deriv_estimate < last_deriv {
                    nondecreasing = false;
                }
                last_deriv = g.deriv_estimate;
                steps.push(ScanStep {
                    param: p,
                    converged: true,
                    residual: g.residual_norm,
                    deriv_estimate: g.deriv_estimate,
                    newton_iterations: g.newton_iterations,
                    grid_n: g.grid.n,
                });
                prev = Some((
                    steps.iter().rev().nth(1).map(|s| s.param).unwrap_or(p),
                    std::mem::replace(&mut cur, g.values.clone()),
                ));
                cur_grid = g.grid;
            }
            Some(g) => {
                // derivative exceeded the threshold at the grid cap
                steps.push(ScanStep {
                    param: p,
                    converged: true,
                    residual: g.residual_norm,
                    deriv_estimate: g.deriv_estimate,
                    newton_iterations: g.newton_iterations,
                    grid_n: g.grid.n,
                });
                critical = Some(p);
                break;
            }
            None => {
                steps.push(ScanStep {
                    param: p,
                    converged: false,
                    residual: f64::NAN,
                    deriv_estimate: f64::NAN,
                    newton_iterations: 0,
                    grid_n: attempt_grid.n,
                });
                critical = Some(p);
                break;
            }
        }
        let _ = si;
    }

    Ok(BreakdownScan {
        steps,
        critical,
        deriv_nondecreasing: nondecreasing,
        deriv_threshold: opts.deriv_threshold,
        grid_cap: opts.grid_cap,
    })
}

/// Orbit of the induced skew map on M × R².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewTrajectory {
    pub theta0: Vec<f64>,
    /// x[i] = x_{i−1} for i = 0, then x_0, x_1, …; the first two entries are
    /// the seed pair (x_{−1}, x_0).
    pub x: Vec<f64>,
    pub truncated: bool,
    pub steps_completed: usize,
}

const DIVERGENCE_CAP: f64 = 1e10;

/// Iterate the induced dynamics x_{k+1} = solution of the site equation in
/// its forward argument. Affine couplings are solved directly; otherwise a
/// bisection on the bracket [−10, 10] is used per step.
pub fn iterate_skew(
    m: &ModelInstance,
    theta0: &[f64],
    x0: f64,
    x_minus1: f64,
    steps: usize,
) -> Result<SkewTrajectory> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("skew iteration needs a two-dimensional model".into()));
    }
    if m.epsilon == 0.0 {
        return Err(Error::Contract("skew iteration needs ε ≠ 0".into()));
    }
    let base = m.base.clone().with_theta0(theta0.to_vec());

    // affine probe: ∂Z/∂a constant to 1e-10 across a few sample points
    let probe = [
        m.coupling.partial(theta0, &[0.0, 0.0, 0.0], 0),
        m.coupling.partial(theta0, &[0.7, -0.3, 0.2], 0),
        m.coupling.partial(theta0, &[-0.5, 0.9, -0.8], 0),
    ];
    let affine = (probe[0] - probe[1]).abs() < 1e-10 && (probe[0] - probe[2]).abs() < 1e-10;
    let alpha = probe[0];

    let mut x = Vec::with_capacity(steps + 2);
    x.push(x_minus1);
    x.push(x0);
    let mut truncated = false;
    let mut completed = 0;
    for k in 0..steps {
        let theta = base.theta_at(k as i64)?;
        let (b, c) = (x[k + 1], x[k]);
        let next = if affine {
            let rest = m.coupling.eval(&theta, &[0.0, b, c]);
            (-m.v(&theta, b) / m.epsilon - rest) / alpha
        } else {
            let g = |a: f64| m.epsilon * m.coupling.eval(&theta, &[a, b, c]) + m.v(&theta, b);
            let (glo, ghi) = (g(-10.0), g(10.0));
            if glo * ghi > 0.0 {
                truncated = true;
                break;
            }
            bisect(g, -10.0, 10.0, 1e-12)
        };
        if !next.is_finite() || next.abs() > DIVERGENCE_CAP {
            truncated = true;
            break;
        }
        x.push(next);
        completed = k + 1;
    }
    Ok(SkewTrajectory { theta0: theta0.to_vec(), x, truncated, steps_completed: completed })
}

/// Lyapunov exponents of the induced cocycle, with a warning when the
/// trajectory was shorter than requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub lambda1: f64,
    /// Second exponent for two-dimensional cocycles.
    pub lambda2: Option<f64>,
    /// λ₁ + λ₂ − mean log |det|, which should vanish.
    pub symplectic_defect: Option<f64>,
    pub steps_used: usize,
    pub truncated: bool,
}

/// Jacobian of the induced map at one site: derivatives of x_{k+1} with
/// respect to (x_k, x_{k−1}).
fn induced_jacobian(m: &ModelInstance, theta: &[f64], a: f64, b: f64, c: f64) -> (f64, f64) {
    let args = [a, b, c];
    let dza = m.coupling.partial(theta, &args, 0);
    let dzb = m.coupling.partial(theta, &args, 1);
    let dzc = m.coupling.partial(theta, &args, 2);
    let dv = m.dv_dy(theta, b);
    let dgdb = -(m.epsilon * dzb + dv) / (m.epsilon * dza);
    let dgdc = -dzc / dza;
    (dgdb, dgdc)
}

/// QR-accumulated Lyapunov exponents along a skew trajectory.
pub fn lyapunov_exponents(m: &ModelInstance, traj: &SkewTrajectory, steps: usize) -> Result<LyapunovReport> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("the 2×2 cocycle needs a two-dimensional model".into()));
    }
    let avail = traj.x.len().saturating_sub(2);
    if avail == 0 {
        return Err(Error::Contract("trajectory carries no cocycle steps".into()));
    }
    let used = steps.min(avail);
    let base = m.base.clone().with_theta0(traj.theta0.clone());

    let mut q = [[1.0_f64, 0.0], [0.0, 1.0]]; // columns q1, q2
    let mut sum1 = 0.0_f64;
    let mut sum2 = 0.0_f64;
    let mut sum_det = 0.0_f64;
    for k in 0..used {
        let theta = base.theta_at(k as i64)?;
        let (c, b, a) = (traj.x[k], traj.x[k + 1], traj.x[k + 2]);
        let (dgdb, dgdc) = induced_jacobian(m, &theta, a, b, c);
        // M = [[dgdb, dgdc], [1, 0]]
        let m00 = dgdb;
        let m01 = dgdc;
        let v1 = [m00 * q[0][0] + m01 * q[1][0], q[0][0]];
        let v2 = [m00 * q[0][1] + m01 * q[1][1], q[0][1]];
        let r11 = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
        let q1 = [v1[0] / r11, v1[1] / r11];
        let r12 = q1[0] * v2[0] + q1[1] * v2[1];
        let w = [v2[0] - r12 * q1[0], v2[1] - r12 * q1[1]];
        let r22 = (w[0] * w[0] + w[1] * w[1]).sqrt();
        let q2 = [w[0] / r22, w[1] / r22];
        q = [[q1[0], q2[0]], [q1[1], q2[1]]];
        sum1 += r11.ln();
        sum2 += r22.ln();
        sum_det += m01.abs().ln(); // |det M| = |dgdc|
    }
    let n = used as f64;
    let l1 = sum1 / n;
    let l2 = sum2 / n;
    Ok(LyapunovReport {
        lambda1: l1,
        lambda2: Some(l2),
        symplectic_defect: Some(l1 + l2 - sum_det / n),
        steps_used: used,
        truncated: used < steps,
    })
}

/// Scalar Lyapunov exponent of a one-dimensional segment: the mean log
/// derivative of the induced map x_k ↦ x_{k+1} along the orbit.
pub fn lyapunov_exponent_1d(m: &ModelInstance, seg: &OrbitSegment) -> Result<LyapunovReport> {
    if m.mode() != Mode::OneD {
        return Err(Error::Contract("the scalar exponent needs a one-dimensional model".into()));
    }
    if seg.len() < 2 {
        return Err(Error::Contract("segment carries no cocycle steps".into()));
    }
    let mut sum = 0.0_f64;
    let steps = seg.len() - 1;
    for i in 0..steps {
        let k = seg.k_min + i as i64;
        let theta = m.base.theta_at(k)?;
        let args = [seg.values[i + 1], seg.values[i]];
        let dza = m.coupling.partial(&theta, &args, 0);
        let dzb = m.coupling.partial(&theta, &args, 1);
        let dv = m.dv_dy(&theta, seg.values[i]);
        // implicit derivative of the forward solve
        sum += ((m.epsilon * dzb + dv) / (m.epsilon * dza)).abs().ln();
    }
    Ok(LyapunovReport {
        lambda1: sum / steps as f64,
        lambda2: None,
        symplectic_defect: None,
        steps_used: steps,
        truncated: false,
    })
}

/// Lyapunov exponents along an invariant graph: the trajectory is read off
/// the graph instead of being iterated, which avoids drift away from
/// unstable objects.
pub fn lyapunov_on_graph(
    m: &ModelInstance,
    graph: &GraphK,
    theta0: f64,
    steps: usize,
) -> Result<LyapunovReport> {
    let omega = rotation_number(m)?;
    let mut xs = Vec::with_capacity(steps + 2);
    for k in -1i64..=steps as i64 {
        let t = theta0 + k as f64 * omega;
        xs.push(graph.grid.eval_at(&graph.values, t));
    }
    let traj = SkewTrajectory {
        theta0: vec![theta0],
        x: xs,
        truncated: false,
        steps_completed: steps,
    };
    lyapunov_exponents(m, &traj, steps)
}

/// Result of the lattice gradient-flow relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientFlowResult {
    pub segment: OrbitSegment,
    pub converged: bool,
    pub t_end: f64,
    /// sup |ẋ| at the final time.
    pub final_rate: f64,
}

/// Relax ẋ_k = ε·Z(θ_k, x_{k+1}, x_k, x_{k−1}) + V(θ_k, x_k) with fixed
/// boundary values by RK4 until the motion stops (sup |ẋ| < 1e−10) or
/// `t_end`. For the discrete Laplacian coupling at ε = 8 this is exactly the
/// gradient flow of the lattice action.
pub fn gradient_flow(
    m: &ModelInstance,
    l: i64,
    a: f64,
    b: f64,
    t_end: f64,
    dt: f64,
) -> Result<GradientFlowResult> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("the gradient flow needs a two-dimensional model".into()));
    }
    if dt <= 0.0 || t_end <= 0.0 {
        return Err(Error::Contract("gradient flow needs positive dt and t_end".into()));
    }
    let n = (2 * l + 1) as usize;
    let rhs = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let k = -l + i as i64;
                let next = if i + 1 < n { x[i + 1] } else { a };
                let prev = if i > 0 { x[i - 1] } else { b };
                m.eval_site(k, &[next, x[i], prev]).expect("arity")
            })
            .collect()
    };
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |mx, r| mx.max(r.abs()));

    // initial profile: linear interpolation between the boundary values
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i + 1) as f64 / (n + 1) as f64;
            b + (a - b) * t
        })
        .collect();

    let mut t = 0.0;
    let mut rate = sup(&rhs(&x));
    while rate >= 1e-10 && t < t_end {
        let h = dt.min(t_end - t);
        let k1 = rhs(&x);
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(xi, k)| xi + 0.5 * h * k).collect();
        let k2 = rhs(&x2);
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(xi, k)| xi + 0.5 * h * k).collect();
        let k3 = rhs(&x3);
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(xi, k)| xi + h * k).collect();
        let k4 = rhs(&x4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        rate = sup(&rhs(&x));
        if !rate.is_finite() {
            return Err(Error::NoConvergence(format!(
                "gradient flow diverged at t = {t}; reduce dt"
            )));
        }
    }

    let residuals: Vec<f64> = rhs(&x).iter().map(|r| r.abs()).collect();
    let segment = OrbitSegment {
        k_min: -l,
        k_max: l,
        values: x,
        boundary: Some((a, b)),
        residuals,
        itinerary: None,
        method: SolveMethod::GradientFlow,
    };
    Ok(GradientFlowResult { segment, converged: rate < 1e-10, t_end: t, final_rate: rate })
}
