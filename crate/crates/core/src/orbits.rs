//! Finite-window solutions of the lattice system: backward root recursion
//! and forward solves in one-dimensional mode, and damped Newton with
//! complete multistart seeding for two-dimensional windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::FiberReport;
use crate::model::{Mode, ModelInstance};
use crate::numerics::{bisect, bracketed_roots, tridiag_solve, ROOT_XTOL};

/// Iterates leaving this box kill a Newton seed; solutions are guaranteed
/// inside I, so clamping would corrupt solution counts.
const DOMAIN_SLACK: f64 = 1e-9;

/// Residual ceiling every returned segment must satisfy on re-evaluation.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Sup-distance below which two converged solutions count as one.
pub const DISTINCT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Recursive,
    Newton,
    NestedInterval,
    GradientFlow,
}

/// A finite window {x_k} of lattice values with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub k_min: i64,
    pub k_max: i64,
    /// values[i] = x_{k_min + i}, all inside I.
    pub values: Vec<f64>,
    /// Two-dimensional windows carry (a, b) with x_{k_max+1} = a and
    /// x_{k_min−1} = b; one-dimensional segments carry none.
    pub boundary: Option<(f64, f64)>,
    /// |f_k| re-evaluated independently of the solver. For one-dimensional
    /// segments the topmost site has no equation yet, so the list is one
    /// shorter than `values`.
    pub residuals: Vec<f64>,
    /// Root choices recorded at sites where several branches existed.
    pub itinerary: Option<Vec<(i64, usize)>>,
    pub method: SolveMethod,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, k: i64) -> Option<f64> {
        let idx = k.checked_sub(self.k_min)?;
        if idx < 0 {
            return None;
        }
        self.values.get(idx as usize).copied()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0_f64, |m, &r| m.max(r))
    }

    /// Recompute all site residuals from scratch.
    pub fn revalidate(&mut self, m: &ModelInstance) -> Result<()> {
        self.residuals = compute_residuals(m, self.k_min, &self.values, self.boundary)?;
        Ok(())
    }

    pub fn sup_distance(&self, other: &OrbitSegment) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
    }
}

fn compute_residuals(
    m: &ModelInstance,
    k_min: i64,
    values: &[f64],
    boundary: Option<(f64, f64)>,
) -> Result<Vec<f64>> {
    let n = values.len();
    match m.mode() {
        Mode::OneD => {
            let mut res = Vec::with_capacity(n.saturating_sub(1));
            for i in 0..n.saturating_sub(1) {
                let k = k_min + i as i64;
                res.push(m.eval_site(k, &[values[i + 1], values[i]])?.abs());
            }
            Ok(res)
        }
        Mode::TwoD => {
            let (a, b) = boundary.ok_or_else(|| {
                Error::Contract("two-dimensional segments need boundary values".into())
            })?;
            let mut res = Vec::with_capacity(n);
            for i in 0..n {
                let k = k_min + i as i64;
                let next = if i + 1 < n { values[i + 1] } else { a };
                let prev = if i > 0 { values[i - 1] } else { b };
                res.push(m.eval_site(k, &[next, values[i], prev])?.abs());
            }
            Ok(res)
        }
    }
}

/// All orbit windows found for one window and boundary pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub segments: Vec<OrbitSegment>,
    /// True when the multistart covered every branch combination.
    pub complete: bool,
    pub diagnostics: MultistartDiagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultistartDiagnostics {
    pub seeds_total: usize,
    pub converged: usize,
    pub left_domain: usize,
    pub stagnated: usize,
    pub duplicates: usize,
}

/// Multistart control for [`solve_window_2d`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartSpec {
    /// Bracketing cells for the per-site zero scan of V.
    pub zeros_grid: usize,
    /// Enumerate all branch combinations up to this many seeds.
    pub max_seeds: usize,
    /// Solve only this branch pattern (one index per site) instead of
    /// enumerating.
    pub itinerary: Option<Vec<usize>>,
}

impl Default for MultistartSpec {
    fn default() -> Self {
        MultistartSpec { zeros_grid: 512, max_seeds: 4096, itinerary: None }
    }
}

/// All roots x_k ∈ I of the site-k equation ε·Z(θ_k, x_{k+1}, x) + V(θ_k, x)
/// given the forward value x_{k+1} = `x_next`. With `component`, only the
/// root lying on that component of the supplied fiber report is returned.
pub fn solve_backward_1d(
    m: &ModelInstance,
    k: i64,
    x_next: f64,
    component: Option<(&FiberReport, usize)>,
) -> Result<Vec<f64>> {
    if m.mode() != Mode::OneD {
        return Err(Error::Contract("backward root recursion is a one-dimensional operation".into()));
    }
    if x_next.abs() > 1.0 {
        return Err(Error::Contract(format!("x_next must lie in I, got {x_next}")));
    }
    let roots = bracketed_roots(
        |x| m.eval_site(k, &[x_next, x]).expect("arity"),
        -1.0,
        1.0,
        512,
        ROOT_XTOL,
    );
    if roots.is_empty() {
        return Err(Error::Resolution(format!(
            "no backward root at site {k} for x_next = {x_next}; either the coupling bound is \
             violated (ε = {}, ε₀ = {:?}) or the zero scan needs a finer grid",
            m.epsilon, m.epsilon0
        )));
    }
    match component {
        None => Ok(roots),
        Some((report, idx)) => {
            let comp = report.components.get(idx).ok_or_else(|| {
                Error::Contract(format!(
                    "component index {idx} out of range ({} components)",
                    report.components.len()
                ))
            })?;
            let tol = 4.0 / report.grid as f64;
            let (lo, hi) = comp.y_range;
            let picked: Vec<f64> = roots
                .iter()
                .copied()
                .filter(|r| *r >= lo - tol && *r <= hi + tol)
                .collect();
            if picked.is_empty() {
                return Err(Error::Resolution(format!(
                    "no backward root on component {idx} (y ∈ [{lo:.4}, {hi:.4}]) at site {k}"
                )));
            }
            Ok(picked)
        }
    }
}

/// The unique x_{k+1} ∈ I solving the site-k equation for a given x_k.
/// Uniqueness comes from strict monotonicity in the forward argument.
pub fn solve_forward_1d(m: &ModelInstance, k: i64, x_k: f64) -> Result<f64> {
    if m.mode() != Mode::OneD {
        return Err(Error::Contract("forward solves are a one-dimensional operation".into()));
    }
    if m.epsilon == 0.0 {
        return Err(Error::Contract("forward solves need ε ≠ 0".into()));
    }
    let g = |x: f64| m.eval_site(k, &[x, x_k]).expect("arity");
    let (g_lo, g_hi) = (g(-1.0), g(1.0));
    if g_lo == 0.0 {
        // an exact wall root means the orbit is leaving I
        return Err(Error::BoundaryEscape(format!(
            "forward value at site {k} sits on the wall x = -1"
        )));
    }
    if g_hi == 0.0 {
        return Err(Error::BoundaryEscape(format!(
            "forward value at site {k} sits on the wall x = +1"
        )));
    }
    if g_lo * g_hi > 0.0 {
        return Err(Error::BoundaryEscape(format!(
            "no forward value in I at site {k} for x_k = {x_k}: the orbit leaves the working \
             square"
        )));
    }
    Ok(bisect(g, -1.0, 1.0, ROOT_XTOL))
}

/// Grow a one-dimensional segment by one site. Backward growth can branch;
/// the chosen root index is recorded in the itinerary (smallest |x| when no
/// component is requested).
pub fn extend_segment(
    m: &ModelInstance,
    seg: &OrbitSegment,
    forward: bool,
    component: Option<usize>,
) -> Result<OrbitSegment> {
    if m.mode() != Mode::OneD {
        return Err(Error::Contract(
            "extend_segment is one-dimensional; grow two-dimensional windows by re-solving with \
             a larger half-window".into(),
        ));
    }
    let mut out = seg.clone();
    if forward {
        let x_last = *seg.values.last().ok_or_else(|| Error::Contract("empty segment".into()))?;
        let x_new = solve_forward_1d(m, seg.k_max, x_last)?;
        out.values.push(x_new);
        out.k_max += 1;
    } else {
        let x_first = *seg.values.first().ok_or_else(|| Error::Contract("empty segment".into()))?;
        let k_new = seg.k_min - 1;
        let roots = solve_backward_1d(m, k_new, x_first, None)?;
        let idx = match component {
            Some(i) => {
                if i >= roots.len() {
                    return Err(Error::Contract(format!(
                        "component index {i} out of range ({} backward roots)",
                        roots.len()
                    )));
                }
                i
            }
            None => {
                // smallest-|x| root, ties to the smaller value
                let mut best = 0;
                for (j, r) in roots.iter().enumerate() {
                    if r.abs() < roots[best].abs() {
                        best = j;
                    }
                }
                best
            }
        };
        out.values.insert(0, roots[idx]);
        out.k_min = k_new;
        let mut it = out.itinerary.take().unwrap_or_default();
        it.insert(0, (k_new, idx));
        out.itinerary = Some(it);
    }
    out.revalidate(m)?;
    if out.max_residual() > RESIDUAL_TOL {
        return Err(Error::Resolution(format!(
            "extension residual {} exceeds {RESIDUAL_TOL}",
            out.max_residual()
        )));
    }
    Ok(out)
}

/// Damped Newton on the (2l+1)-site window with boundary x_{l+1} = a,
/// x_{−l−1} = b, from one seed. Returns the converged window or a reason.
fn newton_window(
    m: &ModelInstance,
    l: i64,
    a: f64,
    b: f64,
    seed: &[f64],
) -> std::result::Result<Vec<f64>, SeedFailure> {
    let n = seed.len();
    let mut x = seed.to_vec();
    let residual = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let k = -l + i as i64;
                let next = if i + 1 < n { x[i + 1] } else { a };
                let prev = if i > 0 { x[i - 1] } else { b };
                m.eval_site(k, &[next, x[i], prev]).expect("window residual")
            })
            .collect()
    };
    let norm = |f: &[f64]| f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let mut f = residual(&x);
    let mut fnorm = norm(&f);
    for _ in 0..100 {
        if fnorm <= 1e-12 {
            return Ok(x);
        }
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 0..n {
            let k = -l + i as i64;
            let next = if i + 1 < n { x[i + 1] } else { a };
            let prev = if i > 0 { x[i - 1] } else { b };
            let args = [next, x[i], prev];
            diag[i] = m.site_partial(k, &args, 1).expect("jacobian");
            if i + 1 < n {
                sup[i] = m.site_partial(k, &args, 0).expect("jacobian");
            }
            if i > 0 {
                sub[i] = m.site_partial(k, &args, 2).expect("jacobian");
            }
        }
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let Some(delta) = tridiag_solve(&sub, &diag, &sup, &rhs) else {
            return Err(SeedFailure::Stagnated);
        };
        // halve the step until the residual decreases
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + t * di).collect();
            if trial.iter().any(|v| v.abs() > 1.0 + DOMAIN_SLACK) {
                t *= 0.5;
                continue;
            }
            let ftrial = residual(&trial);
            let fnorm_trial = norm(&ftrial);
            if fnorm_trial < fnorm {
                x = trial;
                f = ftrial;
                fnorm = fnorm_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // the full step may still have left the domain outright
            let full: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + di).collect();
            if full.iter().any(|v| v.abs() > 1.0 + DOMAIN_SLACK) {
                return Err(SeedFailure::LeftDomain);
            }
            return Err(SeedFailure::Stagnated);
        }
    }
    if fnorm <= 1e-12 {
        Ok(x)
    } else {
        Err(SeedFailure::Stagnated)
    }
}

enum SeedFailure {
    LeftDomain,
    Stagnated,
}

/// Mixed-radix enumeration of branch patterns.
fn pattern(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(radices.len());
    for &r in radices {
        out.push(index % r);
        index /= r;
    }
    out
}

/// Solve the two-dimensional window system f_k = 0 for −l ≤ k ≤ l with
/// boundary x_{l+1} = a, x_{−l−1} = b. Seeds come from every combination of
/// the per-site zeros of V at ε = 0; the returned set is `complete` when all
/// combinations were tried.
pub fn solve_window_2d(
    m: &ModelInstance,
    l: i64,
    a: f64,
    b: f64,
    spec: &MultistartSpec,
) -> Result<SolutionSet> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("window solves need a two-dimensional model".into()));
    }
    if l < 0 {
        return Err(Error::Contract("half-window must be nonnegative".into()));
    }
    if a.abs() > 1.0 || b.abs() > 1.0 {
        return Err(Error::Contract(format!("boundary values must lie in I, got ({a}, {b})")));
    }
    let n = (2 * l + 1) as usize;

    // per-site branch values: zeros of V(θ_k, ·)
    let mut site_zeros: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let k = -l + i as i64;
        let theta = m.base.theta_at(k)?;
        let zeros = bracketed_roots(|y| m.v(&theta, y), -1.0, 1.0, spec.zeros_grid, ROOT_XTOL);
        if zeros.is_empty() {
            return Err(Error::Resolution(format!(
                "the potential has no zero in I over θ_{k}; the decoupled seed construction \
                 cannot start"
            )));
        }
        site_zeros.push(zeros);
    }
    let radices: Vec<usize> = site_zeros.iter().map(|z| z.len()).collect();
    let combos: usize = radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r)).unwrap_or(usize::MAX);

    let (seeds, complete): (Vec<Vec<usize>>, bool) = match &spec.itinerary {
        Some(it) => {
            if it.len() != n {
                return Err(Error::Contract(format!(
                    "itinerary length {} does not match window size {n}",
                    it.len()
                )));
            }
            for (i, &j) in it.iter().enumerate() {
                if j >= radices[i] {
                    return Err(Error::Contract(format!(
                        "itinerary index {j} out of range at site {} ({} branches)",
                        -l + i as i64,
                        radices[i]
                    )));
                }
            }
            (vec![it.clone()], false)
        }
        None if combos <= spec.max_seeds => {
            ((0..combos).map(|c| pattern(c, &radices)).collect(), true)
        }
        None => {
            // too many combinations: fall back to the default branch rule
            // (smallest-|x| zero per site)
            let default: Vec<usize> = site_zeros
                .iter()
                .map(|zeros| {
                    let mut best = 0;
                    for (j, z) in zeros.iter().enumerate() {
                        if z.abs() < zeros[best].abs() {
                            best = j;
                        }
                    }
                    best
                })
                .collect();
            (vec![default], false)
        }
    };

    type SeedResult = (Option<Vec<f64>>, Option<SeedFailure>, Vec<usize>);
    let solve_one = |pat: &Vec<usize>| -> SeedResult {
        let seed: Vec<f64> = pat.iter().enumerate().map(|(i, &j)| site_zeros[i][j]).collect();
        match newton_window(m, l, a, b, &seed) {
            Ok(x) => (Some(x), None, pat.clone()),
            Err(e) => (None, Some(e), pat.clone()),
        }
    };

    #[cfg(feature = "parallel")]
    let raw: Vec<SeedResult> = {
        use rayon::prelude::*;
        seeds.par_iter().map(solve_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let raw: Vec<SeedResult> = seeds.iter().map(solve_one).collect();

    let mut diagnostics = MultistartDiagnostics { seeds_total: seeds.len(), ..Default::default() };
    let mut accepted: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for (sol, fail, pat) in raw {
        match (sol, fail) {
            (Some(x), _) => {
                diagnostics.converged += 1;
                let dup = accepted.iter().any(|(y, _)| {
                    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max)
                        <= DISTINCT_TOL
                });
                if dup {
                    diagnostics.duplicates += 1;
                } else {
                    accepted.push((x, pat));
                }
            }
            (None, Some(SeedFailure::LeftDomain)) => diagnostics.left_domain += 1,
            (None, _) => diagnostics.stagnated += 1,
        }
    }

    accepted.sort_by(|(x, _), (y, _)| {
        x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut segments = Vec::with_capacity(accepted.len());
    for (values, pat) in accepted {
        let residuals = compute_residuals(m, -l, &values, Some((a, b)))?;
        let max_r = residuals.iter().fold(0.0_f64, |mx, &r| mx.max(r));
        if max_r > RESIDUAL_TOL {
            return Err(Error::NoConvergence(format!(
                "accepted window has residual {max_r} > {RESIDUAL_TOL} on re-evaluation"
            )));
        }
        segments.push(OrbitSegment {
            k_min: -l,
            k_max: l,
            values,
            boundary: Some((a, b)),
            residuals,
            itinerary: Some(pat.iter().enumerate().map(|(i, &j)| (-l + i as i64, j)).collect()),
            method: SolveMethod::Newton,
        });
    }

    if segments.is_empty() && m.in_validated_regime() {
        return Err(Error::Existence(format!(
            "no window solution found at ε = {} inside the validated bound ε₀ = {:?}; this \
             contradicts the existence guarantee",
            m.epsilon, m.epsilon0
        )));
    }
    Ok(SolutionSet { segments, complete, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinParams, Mode};

    fn dw(eps: f64, mode: Mode) -> ModelInstance {
        builtin_model(
            "double-well",
            &BuiltinParams { epsilon: Some(eps), mode: Some(mode), ..Default::default() },
        )
        .unwrap()
    }

    fn lin(eps: f64, mode: Mode) -> ModelInstance {
        builtin_model(
            "linear",
            &BuiltinParams { epsilon: Some(eps), mode: Some(mode), ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn backward_roots_double_well() {
        let m = dw(0.01, Mode::OneD);
        let roots = solve_backward_1d(&m, 0, 0.0, None).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] + 0.5).abs() < 0.02, "{roots:?}");
        assert!((roots[1] - 0.5).abs() < 0.02, "{roots:?}");
    }

    #[test]
    fn backward_roots_at_epsilon_zero_are_potential_zeros() {
        let m = dw(0.0, Mode::OneD);
        let roots = solve_backward_1d(&m, 0, 0.7, None).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] + 0.5).abs() < 1e-10);
        assert!((roots[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn backward_root_linear_unique() {
        let m = lin(0.1, Mode::OneD);
        let roots = solve_backward_1d(&m, 0, 0.3, None).unwrap();
        assert_eq!(roots.len(), 1);
        // ε(x_next − 2x)/8 + x = 0  =>  x = −ε·x_next/(8 − 2ε)
        let want = -0.1 * 0.3 / (8.0 - 0.2);
        assert!((roots[0] - want).abs() < 1e-10, "{} vs {want}", roots[0]);
    }

    #[test]
    fn forward_solve_linear_zero_stays_zero() {
        let m = lin(0.1, Mode::OneD);
        let x = solve_forward_1d(&m, 0, 0.0).unwrap();
        assert!(x.abs() < 1e-12);
    }

    #[test]
    fn forward_wall_root_is_boundary_escape() {
        // double-well at x_k = 1/2: ε(x − 1)/8 = 0 has its root on the wall
        let m = dw(0.1, Mode::OneD);
        let err = solve_forward_1d(&m, 0, 0.5).unwrap_err();
        assert!(matches!(err, Error::BoundaryEscape(_)), "{err:?}");
    }

    #[test]
    fn forward_root_is_monotone_in_perturbation() {
        // ε(x − 2y)/8 + y = 0 gives x = (2 − 8/ε)·y: the root moves opposite
        // to a positive shift of f because ∂xZ > 0
        let m = lin(0.1, Mode::OneD);
        let x0 = solve_forward_1d(&m, 0, 0.005).unwrap();
        let x1 = solve_forward_1d(&m, 0, 0.01).unwrap();
        assert!((x0 - (-78.0 * 0.005)).abs() < 1e-9, "{x0}");
        assert!(x1 < x0);
    }

    #[test]
    fn window_linear_unique_zero() {
        let m = lin(0.1, Mode::TwoD);
        let set = solve_window_2d(&m, 3, 0.0, 0.0, &MultistartSpec::default()).unwrap();
        assert!(set.complete);
        assert_eq!(set.segments.len(), 1);
        let seg = &set.segments[0];
        assert!(seg.values.iter().all(|v| v.abs() < 1e-12));
        assert!(seg.max_residual() < 1e-12);
    }

    #[test]
    fn window_double_well_counts() {
        let m = dw(0.01, Mode::TwoD);
        let set = solve_window_2d(&m, 2, 0.0, 0.0, &MultistartSpec::default()).unwrap();
        assert!(set.complete);
        assert_eq!(set.segments.len(), 32);
        for seg in &set.segments {
            assert!(seg.max_residual() <= RESIDUAL_TOL);
            for v in &seg.values {
                assert!((v.abs() - 0.5).abs() < 0.05, "{v}");
            }
        }
        // pairwise distinct
        for i in 0..set.segments.len() {
            for j in i + 1..set.segments.len() {
                assert!(set.segments[i].sup_distance(&set.segments[j]) > DISTINCT_TOL);
            }
        }
    }

    #[test]
    fn window_epsilon_zero_decouples() {
        let m = dw(0.0, Mode::TwoD);
        let set = solve_window_2d(&m, 1, 0.9, -0.9, &MultistartSpec::default()).unwrap();
        assert_eq!(set.segments.len(), 8);
        for seg in &set.segments {
            for v in &seg.values {
                assert!((v.abs() - 0.5).abs() < 1e-10, "boundary must not matter at ε = 0");
            }
        }
    }

    #[test]
    fn window_single_itinerary() {
        let m = dw(0.01, Mode::TwoD);
        let spec = MultistartSpec { itinerary: Some(vec![1, 0, 1]), ..Default::default() };
        let set = solve_window_2d(&m, 1, 0.0, 0.0, &spec).unwrap();
        assert!(!set.complete);
        assert_eq!(set.segments.len(), 1);
        let seg = &set.segments[0];
        assert!(seg.values[0] > 0.0 && seg.values[1] < 0.0 && seg.values[2] > 0.0);
    }

    #[test]
    fn window_rejects_bad_boundary() {
        let m = dw(0.01, Mode::TwoD);
        assert!(matches!(
            solve_window_2d(&m, 1, 1.5, 0.0, &MultistartSpec::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn extend_double_well_stays_on_branch() {
        let m = dw(0.01, Mode::OneD);
        let mut seg = OrbitSegment {
            k_min: 0,
            k_max: 0,
            values: vec![0.5],
            boundary: None,
            residuals: vec![],
            itinerary: None,
            method: SolveMethod::Recursive,
        };
        for _ in 0..5 {
            // pick the branch near +1/2 each time (larger root)
            seg = extend_segment(&m, &seg, false, Some(1)).unwrap();
        }
        assert_eq!(seg.k_min, -5);
        for v in &seg.values {
            assert!((v - 0.5).abs() < 0.02, "{v}");
        }
        assert!(seg.max_residual() <= RESIDUAL_TOL);
        assert_eq!(seg.itinerary.as_ref().unwrap().len(), 5);
    }

    #[test]
    fn extend_linear_zero_stays_zero() {
        let m = lin(0.1, Mode::OneD);
        let seg = OrbitSegment {
            k_min: 0,
            k_max: 0,
            values: vec![0.0],
            boundary: None,
            residuals: vec![],
            itinerary: None,
            method: SolveMethod::Recursive,
        };
        let seg = extend_segment(&m, &seg, true, None).unwrap();
        let seg = extend_segment(&m, &seg, false, None).unwrap();
        assert_eq!((seg.k_min, seg.k_max), (-1, 1));
        assert!(seg.values.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn extend_with_invalid_component_errors() {
        let m = dw(0.01, Mode::OneD);
        let seg = OrbitSegment {
            k_min: 0,
            k_max: 0,
            values: vec![0.5],
            boundary: None,
            residuals: vec![],
            itinerary: None,
            method: SolveMethod::Recursive,
        };
        assert!(matches!(
            extend_segment(&m, &seg, false, Some(7)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn epsilon_continuity_same_itinerary() {
        // windows at ε and ε/2 with one itinerary converge linearly in ε
        let solve = |eps: f64| {
            let m = dw(eps, Mode::TwoD);
            let spec = MultistartSpec { itinerary: Some(vec![1, 0, 1, 0, 1]), ..Default::default() };
            solve_window_2d(&m, 2, 0.3, -0.3, &spec).unwrap().segments[0].clone()
        };
        let (s4, s2, s1) = (solve(0.04), solve(0.02), solve(0.01));
        let d1 = s4.sup_distance(&s2);
        let d2 = s2.sup_distance(&s1);
        assert!(d2 / d1 <= 0.75, "ratio {} (d1 = {d1}, d2 = {d2})", d2 / d1);
    }
}
