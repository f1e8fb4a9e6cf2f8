//! Scalar fields over the base manifold and lattice coordinates.
//!
//! Fields come in two flavours: closed-form built-ins with exact partial
//! derivatives, and user-supplied series (polynomials in the lattice
//! variables times trigonometric factors in θ and x). No runtime code is
//! ever loaded; a series is plain data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Central finite-difference step used when analytic partials are disabled.
pub const FD_STEP: f64 = 1e-6;

/// Affine substitution u ↦ alpha·u + beta taking the working interval
/// I = [-1, 1] onto a field's region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub alpha: f64,
    pub beta: f64,
}

impl Rescale {
    pub const IDENTITY: Rescale = Rescale { alpha: 1.0, beta: 0.0 };

    pub fn apply(&self, u: f64) -> f64 {
        self.alpha * u + self.beta
    }
}

impl Default for Rescale {
    fn default() -> Self {
        Rescale::IDENTITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigKind {
    Sin,
    Cos,
}

/// Trigonometric factor sin/cos(2π(x_freq·x + theta_freq·θ + phase)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trig {
    pub kind: TrigKind,
    #[serde(default)]
    pub x_freq: f64,
    #[serde(default)]
    pub theta_freq: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Trig {
    fn arg(&self, theta: f64, x: f64) -> f64 {
        std::f64::consts::TAU * (self.x_freq * x + self.theta_freq * theta + self.phase)
    }

    fn eval(&self, theta: f64, x: f64) -> f64 {
        match self.kind {
            TrigKind::Sin => self.arg(theta, x).sin(),
            TrigKind::Cos => self.arg(theta, x).cos(),
        }
    }

    /// Derivative with respect to x.
    fn dx(&self, theta: f64, x: f64) -> f64 {
        let scale = std::f64::consts::TAU * self.x_freq;
        match self.kind {
            TrigKind::Sin => scale * self.arg(theta, x).cos(),
            TrigKind::Cos => -scale * self.arg(theta, x).sin(),
        }
    }
}

/// One additive term coeff · x^x_pow · trig(...) of a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialTerm {
    pub coeff: f64,
    #[serde(default)]
    pub x_pow: u32,
    #[serde(default)]
    pub trig: Option<Trig>,
}

/// Closed-form potential families. `x` below is the physical coordinate,
/// i.e. after the rescale has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialForm {
    /// V(θ, x) = x
    Linear,
    /// V(θ, x) = x² − 1/4
    DoubleWell,
    /// V(θ, x) = γ sin(2πθ) + (κ/2π) sin(2πx), the x-gradient of the forced
    /// pendulum generating function.
    StandardMap { gamma: f64, kappa: f64 },
    /// V(θ, x) = (x² + a(θ))(x − b(θ)) + 2 + 0.15·s with
    /// a(θ) = 1.1 − 1.2 sin(2π(θ + 0.2)) and b(θ) = 1.2 + 1.2 cos²(πθ).
    /// The zero level set is a single graph at s = 1 and folds over part of
    /// the circle by s = 0.
    FoldFamily { s: f64 },
    /// Sum of polynomial-times-trigonometric terms.
    Series { terms: Vec<PotentialTerm> },
}

/// Coefficients of the fold family at one base point.
pub fn fold_family_coeffs(theta: f64) -> (f64, f64) {
    let a = 1.1 - 1.2 * (std::f64::consts::TAU * (theta + 0.2)).sin();
    let b = 1.2 + 1.2 * (std::f64::consts::PI * theta).cos().powi(2);
    (a, b)
}

impl PotentialForm {
    fn eval(&self, theta: f64, x: f64) -> f64 {
        match self {
            PotentialForm::Linear => x,
            PotentialForm::DoubleWell => x * x - 0.25,
            PotentialForm::StandardMap { gamma, kappa } => {
                gamma * (std::f64::consts::TAU * theta).sin()
                    + kappa / std::f64::consts::TAU * (std::f64::consts::TAU * x).sin()
            }
            PotentialForm::FoldFamily { s } => {
                let (a, b) = fold_family_coeffs(theta);
                (x * x + a) * (x - b) + 2.0 + 0.15 * s
            }
            PotentialForm::Series { terms } => terms
                .iter()
                .map(|t| {
                    t.coeff
                        * x.powi(t.x_pow as i32)
                        * t.trig.map_or(1.0, |tr| tr.eval(theta, x))
                })
                .sum(),
        }
    }

    fn dx(&self, theta: f64, x: f64) -> f64 {
        match self {
            PotentialForm::Linear => 1.0,
            PotentialForm::DoubleWell => 2.0 * x,
            PotentialForm::StandardMap { kappa, .. } => {
                kappa * (std::f64::consts::TAU * x).cos()
            }
            PotentialForm::FoldFamily { s: _ } => {
                let (a, b) = fold_family_coeffs(theta);
                3.0 * x * x - 2.0 * b * x + a
            }
            PotentialForm::Series { terms } => terms
                .iter()
                .map(|t| {
                    let poly = x.powi(t.x_pow as i32);
                    let dpoly = if t.x_pow == 0 {
                        0.0
                    } else {
                        t.x_pow as f64 * x.powi(t.x_pow as i32 - 1)
                    };
                    match t.trig {
                        None => t.coeff * dpoly,
                        Some(tr) => t.coeff * (dpoly * tr.eval(theta, x) + poly * tr.dx(theta, x)),
                    }
                })
                .sum(),
        }
    }
}

/// A potential V(θ, x): scalar over base point × lattice coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub form: PotentialForm,
    #[serde(default)]
    pub rescale: Rescale,
    /// When set, partials come from central differences even if the form has
    /// analytic ones. Used to exercise and cross-check the fallback path.
    #[serde(default)]
    pub force_fd: bool,
}

impl Potential {
    pub fn new(form: PotentialForm) -> Self {
        Potential { form, rescale: Rescale::IDENTITY, force_fd: false }
    }

    pub fn with_rescale(mut self, alpha: f64, beta: f64) -> Self {
        self.rescale = Rescale { alpha, beta };
        self
    }

    /// Evaluate at internal coordinate u ∈ I.
    pub fn eval(&self, theta: &[f64], u: f64) -> f64 {
        let t = theta.first().copied().unwrap_or(0.0);
        self.form.eval(t, self.rescale.apply(u))
    }

    /// ∂/∂u of the internal-coordinate field (chain rule through the rescale).
    pub fn dx(&self, theta: &[f64], u: f64) -> f64 {
        if self.force_fd {
            return self.dx_fd(theta, u);
        }
        let t = theta.first().copied().unwrap_or(0.0);
        self.rescale.alpha * self.form.dx(t, self.rescale.apply(u))
    }

    /// Central-difference partial, always available.
    pub fn dx_fd(&self, theta: &[f64], u: f64) -> f64 {
        (self.eval(theta, u + FD_STEP) - self.eval(theta, u - FD_STEP)) / (2.0 * FD_STEP)
    }
}

/// One additive term of a coupling: coeff · a^p · b^q · c^r · trig(θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingTerm {
    pub coeff: f64,
    #[serde(default)]
    pub pows: [u32; 3],
    #[serde(default)]
    pub trig: Option<Trig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CouplingForm {
    /// (a − 2b + c)/8 in two-sided mode, (a − 2b)/8 in one-sided mode.
    /// The 1/8 keeps the range inside I on I³.
    LaplacianEighth,
    Series { terms: Vec<CouplingTerm> },
}

/// The coupling Z. `arity` is the number of lattice arguments: 2 for the
/// one-dimensional system Z(θ, x_{k+1}, x_k), 3 for the two-dimensional
/// system Z(θ, x_{k+1}, x_k, x_{k−1}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub form: CouplingForm,
    pub arity: usize,
    #[serde(default)]
    pub force_fd: bool,
}

impl Coupling {
    pub fn laplacian(arity: usize) -> Self {
        Coupling { form: CouplingForm::LaplacianEighth, arity, force_fd: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arity != 2 && self.arity != 3 {
            return Err(Error::Config(format!(
                "coupling arity must be 2 or 3, got {}",
                self.arity
            )));
        }
        if let CouplingForm::Series { terms } = &self.form {
            if self.arity == 2 && terms.iter().any(|t| t.pows[2] != 0) {
                return Err(Error::Config(
                    "arity-2 coupling uses the third lattice argument".into(),
                ));
            }
        }
        Ok(())
    }

    /// Evaluate Z(θ, args). `args` length must equal the arity.
    pub fn eval(&self, theta: &[f64], args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.arity);
        let t = theta.first().copied().unwrap_or(0.0);
        match &self.form {
            CouplingForm::LaplacianEighth => {
                if self.arity == 2 {
                    (args[0] - 2.0 * args[1]) / 8.0
                } else {
                    (args[0] - 2.0 * args[1] + args[2]) / 8.0
                }
            }
            CouplingForm::Series { terms } => {
                let c = if self.arity == 3 { args[2] } else { 0.0 };
                terms
                    .iter()
                    .map(|tm| {
                        tm.coeff
                            * args[0].powi(tm.pows[0] as i32)
                            * args[1].powi(tm.pows[1] as i32)
                            * c.powi(tm.pows[2] as i32)
                            * tm.trig.map_or(1.0, |tr| tr.eval(t, 0.0))
                    })
                    .sum()
            }
        }
    }

    /// Analytic partial with respect to lattice argument `slot`.
    pub fn partial(&self, theta: &[f64], args: &[f64], slot: usize) -> f64 {
        debug_assert!(slot < self.arity);
        if self.force_fd {
            return self.partial_fd(theta, args, slot);
        }
        let t = theta.first().copied().unwrap_or(0.0);
        match &self.form {
            CouplingForm::LaplacianEighth => match slot {
                0 => 0.125,
                1 => -0.25,
                _ => 0.125,
            },
            CouplingForm::Series { terms } => {
                let c = if self.arity == 3 { args[2] } else { 0.0 };
                let xs = [args[0], args[1], c];
                terms
                    .iter()
                    .map(|tm| {
                        let p = tm.pows[slot];
                        if p == 0 {
                            return 0.0;
                        }
                        let mut v = tm.coeff * p as f64 * xs[slot].powi(p as i32 - 1);
                        for (j, xj) in xs.iter().enumerate() {
                            if j != slot {
                                v *= xj.powi(tm.pows[j] as i32);
                            }
                        }
                        v * tm.trig.map_or(1.0, |tr| tr.eval(t, 0.0))
                    })
                    .sum()
            }
        }
    }

    /// Central-difference partial, always available.
    pub fn partial_fd(&self, theta: &[f64], args: &[f64], slot: usize) -> f64 {
        let mut hi = args.to_vec();
        let mut lo = args.to_vec();
        hi[slot] += FD_STEP;
        lo[slot] -= FD_STEP;
        (self.eval(theta, &hi) - self.eval(theta, &lo)) / (2.0 * FD_STEP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_family_coefficients_at_zero() {
        let (a, b) = fold_family_coeffs(0.0);
        assert!((a - (1.1 - 1.2 * (0.4 * std::f64::consts::PI).sin())).abs() < 1e-15);
        assert!((b - 2.4).abs() < 1e-15);
    }

    #[test]
    fn rescale_maps_region_of_interest() {
        let v = Potential::new(PotentialForm::FoldFamily { s: 1.0 }).with_rescale(3.0, 0.0);
        // internal 0.8 is physical 2.4 = b(0): the cubic factor vanishes there
        let got = v.eval(&[0.0], 0.8);
        assert!((got - (2.0 + 0.15)).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn series_matches_closed_form_double_well() {
        let series = Potential::new(PotentialForm::Series {
            terms: vec![
                PotentialTerm { coeff: 1.0, x_pow: 2, trig: None },
                PotentialTerm { coeff: -0.25, x_pow: 0, trig: None },
            ],
        });
        let builtin = Potential::new(PotentialForm::DoubleWell);
        for i in 0..=20 {
            let x = -1.0 + 0.1 * i as f64;
            assert!((series.eval(&[0.3], x) - builtin.eval(&[0.3], x)).abs() < 1e-15);
            assert!((series.dx(&[0.3], x) - builtin.dx(&[0.3], x)).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_partials_match_central_differences() {
        let fields = [
            Potential::new(PotentialForm::Linear),
            Potential::new(PotentialForm::StandardMap { gamma: 0.3, kappa: 0.7 }),
            Potential::new(PotentialForm::FoldFamily { s: 0.4 }).with_rescale(3.0, 0.0),
        ];
        for f in &fields {
            for i in 0..32 {
                let u = -1.0 + 2.0 * i as f64 / 31.0;
                let th = [0.17 * i as f64 % 1.0];
                let a = f.dx(&th, u);
                let d = f.dx_fd(&th, u);
                let scale = a.abs().max(1.0);
                assert!((a - d).abs() / scale < 1e-4, "{a} vs {d}");
            }
        }
    }

    #[test]
    fn laplacian_partials() {
        let z = Coupling::laplacian(3);
        let args = [0.3, -0.2, 0.9];
        assert_eq!(z.partial(&[0.0], &args, 0), 0.125);
        assert_eq!(z.partial(&[0.0], &args, 1), -0.25);
        assert_eq!(z.partial(&[0.0], &args, 2), 0.125);
        for slot in 0..3 {
            let fd = z.partial_fd(&[0.0], &args, slot);
            assert!((fd - z.partial(&[0.0], &args, slot)).abs() < 1e-9);
        }
    }

    #[test]
    fn trig_x_derivative() {
        let tr = Trig { kind: TrigKind::Sin, x_freq: 1.0, theta_freq: 0.0, phase: 0.25 };
        let h = 1e-7;
        let x = 0.3;
        let fd = (tr.eval(0.0, x + h) - tr.eval(0.0, x - h)) / (2.0 * h);
        assert!((tr.dx(0.0, x) - fd).abs() < 1e-5);
    }
}
