//! The lattice system ε·Z + V = 0: coupling, potential, base dynamics, and
//! the standing-condition probes that gate the orbit constructions.

mod base;
mod field;

pub use base::BaseDynamics;
pub use field::{
    fold_family_coeffs, Coupling, CouplingForm, CouplingTerm, Potential, PotentialForm,
    PotentialTerm, Rescale, Trig, TrigKind, FD_STEP,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    OneD,
    TwoD,
}

/// Integer staircase shift of the coupling arguments, used to prescribe a
/// fibered rotation number. At site k the coupling is evaluated as
/// Z(a + m_{k+1} − m_k, b, c + m_{k−1} − m_k) with m_k = ⌊kω⌋.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingShift {
    pub omega: f64,
}

impl CouplingShift {
    pub fn floor_at(&self, k: i64) -> f64 {
        (k as f64 * self.omega).floor()
    }

    /// Offsets (d_a, d_c) applied to the outer coupling arguments at site k.
    pub fn offsets(&self, k: i64) -> (f64, f64) {
        let m = self.floor_at(k);
        (self.floor_at(k + 1) - m, self.floor_at(k - 1) - m)
    }
}

/// One fully wired lattice system.
///
/// Immutable after construction; cheap to clone; safe to share across worker
/// threads. All evaluation is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    pub coupling: Coupling,
    pub potential: Potential,
    pub base: BaseDynamics,
    pub epsilon: f64,
    /// Validated coupling bound, when one could be established. Orbit
    /// constructions give existence guarantees only for |ε| < ε₀.
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub shift: Option<CouplingShift>,
}

impl ModelInstance {
    pub fn new(coupling: Coupling, potential: Potential, base: BaseDynamics, epsilon: f64) -> Result<Self> {
        coupling.validate()?;
        Ok(ModelInstance { coupling, potential, base, epsilon, epsilon0: None, shift: None })
    }

    pub fn mode(&self) -> Mode {
        if self.coupling.arity == 2 {
            Mode::OneD
        } else {
            Mode::TwoD
        }
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }

    pub fn with_base(mut self, base: BaseDynamics) -> Self {
        self.base = base;
        self
    }

    pub fn with_shift(mut self, omega: f64) -> Self {
        self.shift = Some(CouplingShift { omega });
        self
    }

    /// True when ε sits strictly inside the validated coupling bound, so the
    /// existence guarantees for orbit constructions apply.
    pub fn in_validated_regime(&self) -> bool {
        self.epsilon0.is_some_and(|e0| self.epsilon.abs() < e0)
    }

    /// V(θ, y) in internal coordinates.
    pub fn v(&self, theta: &[f64], y: f64) -> f64 {
        self.potential.eval(theta, y)
    }

    pub fn dv_dy(&self, theta: &[f64], y: f64) -> f64 {
        self.potential.dx(theta, y)
    }

    /// The fiber function f_θ(args) = ε·Z(θ, args) + V(θ, y), where y is the
    /// middle lattice argument: args = (x_{k+1}, x_k) in one-dimensional mode
    /// and (x_{k+1}, x_k, x_{k−1}) in two-dimensional mode.
    pub fn eval_f(&self, theta: &[f64], args: &[f64]) -> Result<f64> {
        if args.len() != self.coupling.arity {
            return Err(Error::Contract(format!(
                "eval_f expects {} lattice arguments, got {}",
                self.coupling.arity,
                args.len()
            )));
        }
        Ok(self.epsilon * self.coupling.eval(theta, args) + self.v(theta, args[1]))
    }

    /// Coupling arguments at site k with the staircase shift applied.
    fn shifted_args(&self, k: i64, args: &[f64]) -> Vec<f64> {
        match self.shift {
            None => args.to_vec(),
            Some(sh) => {
                let (da, dc) = sh.offsets(k);
                let mut out = args.to_vec();
                out[0] += da;
                if out.len() == 3 {
                    out[2] += dc;
                }
                out
            }
        }
    }

    /// Site equation f_k(args) = ε·Z_k(θ_k, args) + V(θ_k, y). Z_k carries
    /// the per-site staircase shift when one is installed.
    pub fn eval_site(&self, k: i64, args: &[f64]) -> Result<f64> {
        let theta = self.base.theta_at(k)?;
        if args.len() != self.coupling.arity {
            return Err(Error::Contract(format!(
                "site equation expects {} lattice arguments, got {}",
                self.coupling.arity,
                args.len()
            )));
        }
        let zargs = self.shifted_args(k, args);
        Ok(self.epsilon * self.coupling.eval(&theta, &zargs) + self.v(&theta, args[1]))
    }

    /// ∂/∂args[slot] of the site equation.
    pub fn site_partial(&self, k: i64, args: &[f64], slot: usize) -> Result<f64> {
        let theta = self.base.theta_at(k)?;
        let zargs = self.shifted_args(k, args);
        let mut d = self.epsilon * self.coupling.partial(&theta, &zargs, slot);
        if slot == 1 {
            d += self.dv_dy(&theta, args[1]);
        }
        Ok(d)
    }
}

/// Construct one of the named model families.
///
/// Recognised names: `linear`, `double-well`, `standard-map`, `vs-family`.
/// `params.epsilon` is always required; family parameters are checked and a
/// configuration error lists anything missing.
pub fn builtin_model(name: &str, params: &BuiltinParams) -> Result<ModelInstance> {
    let eps = params
        .epsilon
        .ok_or_else(|| Error::Config("missing parameter: epsilon".into()))?;
    let arity = match params.mode.unwrap_or(Mode::TwoD) {
        Mode::OneD => 2,
        Mode::TwoD => 3,
    };
    let mut m = match name {
        "linear" => ModelInstance::new(
            Coupling::laplacian(arity),
            Potential::new(PotentialForm::Linear),
            params.base.clone().unwrap_or_else(|| BaseDynamics::fixed1(0.0)),
            eps,
        )?,
        "double-well" => ModelInstance::new(
            Coupling::laplacian(arity),
            Potential::new(PotentialForm::DoubleWell),
            params.base.clone().unwrap_or_else(|| BaseDynamics::fixed1(0.0)),
            eps,
        )?,
        "standard-map" => {
            let missing: Vec<&str> = [("gamma", params.gamma), ("kappa", params.kappa)]
                .iter()
                .filter_map(|(n, v)| v.is_none().then_some(*n))
                .collect();
            if !missing.is_empty() {
                return Err(Error::Config(format!(
                    "missing parameters for standard-map: {}",
                    missing.join(", ")
                )));
            }
            ModelInstance::new(
                Coupling::laplacian(arity),
                Potential::new(PotentialForm::StandardMap {
                    gamma: params.gamma.unwrap(),
                    kappa: params.kappa.unwrap(),
                }),
                params.base.clone().unwrap_or_else(BaseDynamics::golden),
                eps,
            )?
        }
        "vs-family" => {
            let s = params
                .s
                .ok_or_else(|| Error::Config("missing parameter for vs-family: s".into()))?;
            ModelInstance::new(
                Coupling::laplacian(arity),
                Potential::new(PotentialForm::FoldFamily { s }).with_rescale(3.0, 0.0),
                params.base.clone().unwrap_or_else(BaseDynamics::golden),
                eps,
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model name {other:?}; expected linear, double-well, standard-map or vs-family"
            )))
        }
    };
    m.epsilon0 = params
        .epsilon0
        .or_else(|| estimate_epsilon0(&m, 0.1).ok());
    Ok(m)
}

/// Parameters accepted by [`builtin_model`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuiltinParams {
    pub epsilon: Option<f64>,
    pub epsilon0: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub s: Option<f64>,
    pub mode: Option<Mode>,
    pub base: Option<BaseDynamics>,
}

/// Location-tagged extremum of a probed quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub theta: f64,
    pub args: [f64; 3],
}

/// Band of one sampled fiber: the y-values with |V(θ, y)| ≤ ε₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBand {
    pub theta: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Numeric report of the standing conditions on a sampled grid. Failures are
/// reported, never thrown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub grid: usize,
    pub epsilon0_used: f64,
    /// min |∂Z/∂a| over the grid (first lattice argument).
    pub min_abs_dz_first: Extremum,
    /// min |∂Z/∂c| over the grid; `None` in one-dimensional mode.
    pub min_abs_dz_last: Option<Extremum>,
    pub max_abs_z: Extremum,
    pub max_abs_dz_mid: f64,
    pub max_abs_dv: f64,
    /// Hull [t0, t1] of the sampled band V⁻¹([−ε₀, ε₀]).
    pub band_t0: f64,
    pub band_t1: f64,
    /// True when every sampled base point has a nonempty band.
    pub band_surjective: bool,
    pub bands: Vec<ThetaBand>,
    pub c0_pass: bool,
    pub c1_pass: bool,
    pub c2_pass: bool,
    /// Analytic partials agree with central differences to 1e-4 relative on
    /// a 32-point probe.
    pub partials_consistent: bool,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.c0_pass && self.c1_pass && self.c2_pass && self.partials_consistent
    }
}

fn sample_thetas(base: &BaseDynamics, n: usize) -> Vec<Vec<f64>> {
    match base {
        BaseDynamics::FixedPoint { theta } => vec![theta.clone()],
        BaseDynamics::Explicit { thetas, .. } => thetas.clone(),
        BaseDynamics::Rotation { .. } => (0..n).map(|i| vec![i as f64 / n as f64]).collect(),
    }
}

/// Scan the band V⁻¹([−bound, bound]) ∩ I at one base point.
fn band_intervals(m: &ModelInstance, theta: &[f64], bound: f64, res: usize) -> Vec<(f64, f64)> {
    let mut intervals = Vec::new();
    let mut cur: Option<(f64, f64)> = None;
    for i in 0..=res {
        let y = -1.0 + 2.0 * i as f64 / res as f64;
        if m.v(theta, y).abs() <= bound {
            cur = match cur {
                None => Some((y, y)),
                Some((a, _)) => Some((a, y)),
            };
        } else if let Some(iv) = cur.take() {
            intervals.push(iv);
        }
    }
    if let Some(iv) = cur {
        intervals.push(iv);
    }
    intervals
}

/// Probe the standing conditions on a grid with `grid` points per axis
/// (minimum 64).
pub fn verify_conditions(m: &ModelInstance, grid: usize) -> Result<ConditionReport> {
    if grid < 64 {
        return Err(Error::Contract(format!(
            "condition probe needs at least 64 points per axis, got {grid}"
        )));
    }
    let eps0 = m.epsilon0.unwrap_or(m.epsilon.abs().max(1e-3));
    let thetas = sample_thetas(&m.base, grid.min(128));
    let arity = m.coupling.arity;

    let axis: Vec<f64> = (0..=grid).map(|i| -1.0 + 2.0 * i as f64 / grid as f64).collect();
    // coarser inner grid keeps the 3-argument probe affordable
    let inner: Vec<f64> = {
        let n = if arity == 3 { grid.min(64) } else { grid };
        (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()
    };

    let mut min_first = Extremum { value: f64::INFINITY, theta: 0.0, args: [0.0; 3] };
    let mut min_last = Extremum { value: f64::INFINITY, theta: 0.0, args: [0.0; 3] };
    let mut max_z = Extremum { value: 0.0, theta: 0.0, args: [0.0; 3] };
    let mut max_dz_mid = 0.0_f64;
    let mut max_dv = 0.0_f64;

    let mut args = vec![0.0; arity];
    for theta in &thetas {
        let t0 = theta.first().copied().unwrap_or(0.0);
        for &a in &inner {
            for &b in &inner {
                let slices: &[f64] = if arity == 3 { &inner } else { &[0.0] };
                for &c in slices {
                    args[0] = a;
                    args[1] = b;
                    if arity == 3 {
                        args[2] = c;
                    }
                    let z = m.coupling.eval(theta, &args);
                    if z.abs() > max_z.value {
                        max_z = Extremum { value: z.abs(), theta: t0, args: [a, b, c] };
                    }
                    let dza = m.coupling.partial(theta, &args, 0).abs();
                    if dza < min_first.value {
                        min_first = Extremum { value: dza, theta: t0, args: [a, b, c] };
                    }
                    max_dz_mid = max_dz_mid.max(m.coupling.partial(theta, &args, 1).abs());
                    if arity == 3 {
                        let dzc = m.coupling.partial(theta, &args, 2).abs();
                        if dzc < min_last.value {
                            min_last = Extremum { value: dzc, theta: t0, args: [a, b, c] };
                        }
                    }
                }
            }
        }
        for &y in &axis {
            max_dv = max_dv.max(m.dv_dy(theta, y).abs());
        }
    }

    // band scan per base point
    let mut bands = Vec::with_capacity(thetas.len());
    let mut t0_hull = f64::INFINITY;
    let mut t1_hull = f64::NEG_INFINITY;
    let mut surjective = true;
    for theta in &thetas {
        let intervals = band_intervals(m, theta, eps0, grid.max(512));
        if intervals.is_empty() {
            surjective = false;
        }
        for &(a, b) in &intervals {
            t0_hull = t0_hull.min(a);
            t1_hull = t1_hull.max(b);
        }
        bands.push(ThetaBand { theta: theta.first().copied().unwrap_or(0.0), intervals });
    }
    if !t0_hull.is_finite() {
        t0_hull = f64::NAN;
        t1_hull = f64::NAN;
    }

    // partial consistency probe: 32 points, analytic vs central differences
    let mut consistent = true;
    for i in 0..32 {
        let u = -0.96875 + 2.0 * i as f64 / 32.0;
        let th = thetas[i % thetas.len()].clone();
        let dv = m.potential.dx(&th, u);
        let dv_fd = m.potential.dx_fd(&th, u);
        if (dv - dv_fd).abs() / dv.abs().max(1.0) > 1e-4 {
            consistent = false;
        }
        let mut pargs = vec![u, -u];
        if arity == 3 {
            pargs.push(0.5 * u);
        }
        for slot in 0..arity {
            let d = m.coupling.partial(&th, &pargs, slot);
            let d_fd = m.coupling.partial_fd(&th, &pargs, slot);
            if (d - d_fd).abs() / d.abs().max(1.0) > 1e-4 {
                consistent = false;
            }
        }
    }

    let c0_pass = surjective && t0_hull > -1.0 && t1_hull < 1.0;
    let c1_pass = max_z.value < 1.0;
    let c2_pass = min_first.value > 0.0 && (arity == 2 || min_last.value > 0.0);

    Ok(ConditionReport {
        grid,
        epsilon0_used: eps0,
        min_abs_dz_first: min_first,
        min_abs_dz_last: (arity == 3).then_some(min_last),
        max_abs_z: max_z,
        max_abs_dz_mid: max_dz_mid,
        max_abs_dv: max_dv,
        band_t0: t0_hull,
        band_t1: t1_hull,
        band_surjective: surjective,
        bands,
        c0_pass,
        c1_pass,
        c2_pass,
        partials_consistent: consistent,
    })
}

/// Largest ε₀ (bisection ladder, relative precision 1e-3) such that the
/// sampled band V⁻¹([−ε₀, ε₀]) stays inside M × [−1+margin, 1−margin] and is
/// nonempty over every sampled base point.
pub fn estimate_epsilon0(m: &ModelInstance, margin: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&margin) || margin == 0.0 {
        return Err(Error::Contract(format!("margin must lie in (0, 1), got {margin}")));
    }
    let thetas = sample_thetas(&m.base, 128);
    let res = 1024;
    let cap = 1.0 - margin;

    // A band is nonempty at any level e > 0 wherever V changes sign, so
    // zeros are located by bracketing rather than by |V| <= e sampling alone
    // (a hairline band slips between grid points).
    let feasible = |e: f64| -> bool {
        for theta in &thetas {
            let mut nonempty = false;
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..=res {
                let y = -1.0 + 2.0 * i as f64 / res as f64;
                let v = m.v(theta, y);
                if v.abs() <= e {
                    if y.abs() > cap {
                        return false; // band escapes the margin box
                    }
                    nonempty = true;
                }
                if let Some((py, pv)) = prev {
                    if pv * v < 0.0 {
                        let root = crate::numerics::bisect(|u| m.v(theta, u), py, y, 1e-12);
                        if root.abs() > cap {
                            return false;
                        }
                        nonempty = true;
                    }
                }
                prev = Some((y, v));
            }
            if !nonempty {
                return false;
            }
        }
        true
    };

    if !feasible(1e-12) {
        return Err(Error::Degenerate(
            "no admissible coupling bound down to 1e-12: the potential has no zero inside the \
             margin box over some sampled base point"
                .into(),
        ));
    }
    let mut lo = 1e-12;
    let mut hi = 1.0;
    if feasible(hi) {
        return Ok(hi);
    }
    while (hi - lo) / hi.max(1e-300) > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> BuiltinParams {
        BuiltinParams { epsilon: Some(eps), ..Default::default() }
    }

    #[test]
    fn eval_f_vanishes_on_diagonal() {
        let m = builtin_model("double-well", &params(0.1)).unwrap();
        // Z vanishes on constant triples and V(1/2) = 0
        let got = m.eval_f(&[0.0], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn eval_f_laplacian_annihilates_arithmetic() {
        let m = builtin_model("double-well", &params(0.1)).unwrap();
        let got = m.eval_f(&[0.0], &[1.0, 0.0, -1.0]).unwrap();
        assert!((got - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn eval_f_checks_arity() {
        let m = builtin_model("linear", &params(0.1)).unwrap();
        assert!(m.eval_f(&[0.0], &[0.0, 0.0]).is_err());
        assert_eq!(m.eval_f(&[0.0], &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn fold_family_cross_checks_against_direct_polynomial() {
        let m = builtin_model("vs-family", &{
            let mut p = params(0.05);
            p.s = Some(1.0);
            p
        })
        .unwrap();
        // deterministic probe points in I
        for i in 0..10 {
            let u = -0.9 + 0.2 * i as f64;
            let x = 3.0 * u;
            let (a, b) = fold_family_coeffs(0.37);
            let direct = (x * x + a) * (x - b) + 2.0 + 0.15;
            let via_field = m.v(&[0.37], u);
            assert!((direct - via_field).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_name_and_missing_params_are_config_errors() {
        assert!(matches!(
            builtin_model("cubic", &params(0.1)),
            Err(Error::Config(_))
        ));
        let err = builtin_model("standard-map", &params(0.1)).unwrap_err();
        match err {
            Error::Config(msg) => {
                assert!(msg.contains("gamma") && msg.contains("kappa"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
        assert!(builtin_model("vs-family", &params(0.1)).is_err());
    }

    #[test]
    fn linear_conditions_all_pass() {
        let mut m = builtin_model("linear", &params(0.1)).unwrap();
        m.epsilon0 = Some(0.5);
        let rep = verify_conditions(&m, 64).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
        // band of V = x at bound e is exactly [-e, e]
        assert!((rep.band_t0 + 0.5).abs() < 0.01);
        assert!((rep.band_t1 - 0.5).abs() < 0.01);
    }

    #[test]
    fn laplacian_extrema() {
        let m = builtin_model("linear", &params(0.1)).unwrap();
        let rep = verify_conditions(&m, 64).unwrap();
        assert!((rep.max_abs_z.value - 0.5).abs() < 1e-12);
        assert!((rep.min_abs_dz_first.value - 0.125).abs() < 1e-12);
        assert!((rep.min_abs_dz_last.unwrap().value - 0.125).abs() < 1e-12);
        assert!((rep.max_abs_dz_mid - 0.25).abs() < 1e-12);
    }

    #[test]
    fn double_well_band_is_two_intervals() {
        let mut m = builtin_model("double-well", &params(0.05)).unwrap();
        m.epsilon0 = Some(0.1);
        let rep = verify_conditions(&m, 64).unwrap();
        let band = &rep.bands[0];
        assert_eq!(band.intervals.len(), 2, "{band:?}");
        // analytic endpoints ±sqrt(1/4 ± 0.1)
        let outer = (0.25_f64 + 0.1).sqrt();
        let inner = (0.25_f64 - 0.1).sqrt();
        let (a, b) = band.intervals[1];
        assert!((a - inner).abs() < 5e-3, "{a} vs {inner}");
        assert!((b - outer).abs() < 5e-3, "{b} vs {outer}");
    }

    #[test]
    fn epsilon0_linear_is_point_nine() {
        let m = builtin_model("linear", &params(0.1)).unwrap();
        let e0 = estimate_epsilon0(&m, 0.1).unwrap();
        assert!((e0 - 0.9).abs() < 5e-3, "{e0}");
    }

    #[test]
    fn epsilon0_double_well_solves_band_edge() {
        let m = builtin_model("double-well", &params(0.1)).unwrap();
        let e0 = estimate_epsilon0(&m, 0.1).unwrap();
        // sqrt(1/4 + e) = 0.9  =>  e = 0.56
        assert!((e0 - 0.56).abs() < 0.02, "{e0}");
    }

    #[test]
    fn epsilon0_fold_family_positive() {
        let m = builtin_model("vs-family", &{
            let mut p = params(0.01);
            p.s = Some(1.0);
            p
        })
        .unwrap();
        let e0 = estimate_epsilon0(&m, 0.1).unwrap();
        assert!(e0 > 0.0, "{e0}");
    }

    #[test]
    fn scaled_coupling_passes_range_check() {
        // any bounded series coupling scaled by 0.9/max|Z| must satisfy the
        // range condition
        let raw = Coupling {
            form: CouplingForm::Series {
                terms: vec![CouplingTerm { coeff: 5.0, pows: [1, 1, 1], trig: None }],
            },
            arity: 3,
            force_fd: false,
        };
        let mut max = 0.0_f64;
        for &a in &[-1.0, 1.0] {
            for &b in &[-1.0, 1.0] {
                for &c in &[-1.0, 1.0] {
                    max = max.max(raw.eval(&[0.0], &[a, b, c]).abs());
                }
            }
        }
        let scaled = Coupling {
            form: CouplingForm::Series {
                terms: vec![CouplingTerm { coeff: 5.0 * 0.9 / max, pows: [1, 1, 1], trig: None }],
            },
            arity: 3,
            force_fd: false,
        };
        let m = ModelInstance::new(
            scaled,
            Potential::new(PotentialForm::Linear),
            BaseDynamics::fixed1(0.0),
            0.1,
        )
        .unwrap();
        let rep = verify_conditions(&m, 64).unwrap();
        assert!(rep.c1_pass);
    }

    #[test]
    fn determinism_bit_identical() {
        let m = builtin_model("standard-map", &{
            let mut p = params(8.0);
            p.gamma = Some(0.1);
            p.kappa = Some(0.3);
            p
        })
        .unwrap();
        let a = m.eval_f(&[0.3215], &[0.11, -0.42, 0.73]).unwrap();
        let b = m.eval_f(&[0.3215], &[0.11, -0.42, 0.73]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn staircase_shift_offsets() {
        let sh = CouplingShift { omega: 0.5 };
        // m = (0, 0, 1, 1, 2) for k = 0..4
        assert_eq!(sh.floor_at(0), 0.0);
        assert_eq!(sh.floor_at(2), 1.0);
        let (da, dc) = sh.offsets(1);
        assert_eq!((da, dc), (1.0, -0.0));
    }
}
