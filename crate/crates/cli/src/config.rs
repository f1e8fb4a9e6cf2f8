//! Run configuration: one JSON document describing the model, the command,
//! and the output policy. Configs round-trip (parse → serialize → parse)
//! to an identical structure.

use serde::{Deserialize, Serialize};

use antilimit::error::{Error, Result};
use antilimit::model::{
    builtin_model, estimate_epsilon0, BaseDynamics, BuiltinParams, Coupling, ModelInstance,
    Potential,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub command: CommandSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Worker count, 0 = auto.
    #[serde(default)]
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// One of the built-in family names, or "custom".
    pub name: String,
    #[serde(default)]
    pub params: BuiltinParams,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseDynamics>,
    /// Affine rescale [alpha, beta] applied to the potential's x-domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<(f64, f64)>,
    /// Custom models: the potential as polynomial/trigonometric data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    /// Custom models: the coupling as polynomial data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
    /// Staircase shift of the coupling arguments (prescribed rotation
    /// number machinery).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_omega: Option<f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelInstance> {
        let mut m = if self.name == "custom" {
            let potential = self.potential.clone().ok_or_else(|| {
                Error::Config("custom model needs a `potential` block".into())
            })?;
            let coupling = self.coupling.clone().ok_or_else(|| {
                Error::Config("custom model needs a `coupling` block".into())
            })?;
            let base = self.base.clone().unwrap_or_else(|| BaseDynamics::fixed1(0.0));
            let mut m = ModelInstance::new(coupling, potential, base, self.epsilon)?;
            m.epsilon0 = self.epsilon0.or_else(|| estimate_epsilon0(&m, 0.1).ok());
            m
        } else {
            let mut params = self.params.clone();
            params.epsilon = Some(self.epsilon);
            params.epsilon0 = self.epsilon0.or(params.epsilon0);
            if params.base.is_none() {
                params.base = self.base.clone();
            }
            builtin_model(&self.name, &params)?
        };
        if let Some((alpha, beta)) = self.rescale {
            m.potential = m.potential.clone().with_rescale(alpha, beta);
        }
        if let Some(w) = self.shift_omega {
            m = m.with_shift(w);
        }
        Ok(m)
    }

    /// Patch one scalar sweep/continuation parameter by name.
    pub fn with_param(&self, name: &str, value: f64) -> Result<ModelSpec> {
        let mut out = self.clone();
        match name {
            "epsilon" => out.epsilon = value,
            "s" => out.params.s = Some(value),
            "gamma" => out.params.gamma = Some(value),
            "kappa" => out.params.kappa = Some(value),
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter {other:?}; expected epsilon, s, gamma or kappa"
                )))
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
    pub formats: Vec<String>,
    pub overwrite: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: "out".into(), formats: vec!["csv".into(), "json".into()], overwrite: true }
    }
}

impl OutputSpec {
    pub fn wants(&self, fmt: &str) -> bool {
        self.formats.iter().any(|f| f == fmt)
    }
}

/// One subcommand with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CommandSpec {
    Verify {
        #[serde(default = "default_verify_grid")]
        grid: usize,
    },
    ScanFiber {
        /// Explicit base points; takes precedence over theta_grid.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thetas: Option<Vec<f64>>,
        #[serde(default = "default_theta_grid")]
        theta_grid: usize,
        #[serde(default = "default_scan_grid")]
        grid: usize,
        /// Scan full two-dimensional fibers (sheets) instead of the central
        /// slice.
        #[serde(default)]
        sheets: bool,
        #[serde(default = "default_slices")]
        slices: usize,
    },
    SolveWindow {
        l: i64,
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default = "default_zeros_grid")]
        zeros_grid: usize,
        #[serde(default = "default_max_seeds")]
        max_seeds: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        itinerary: Option<Vec<usize>>,
    },
    Refine {
        depth: usize,
        #[serde(default = "default_scan_grid")]
        grid: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        itinerary: Option<Vec<usize>>,
    },
    Certify {
        depth: usize,
        #[serde(default = "default_scan_grid")]
        grid: usize,
        /// Claimed slope margin; measured from the scans when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    RotationOrbit {
        omega: f64,
        l: i64,
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    SolveK {
        #[serde(default = "default_graph_n")]
        n: usize,
        #[serde(default = "default_interpolation")]
        interpolation: String,
        /// Flat initial guess value.
        #[serde(default)]
        guess: f64,
    },
    Continue {
        param: String,
        path: PathSpec,
        #[serde(default = "default_graph_n")]
        n: usize,
        #[serde(default = "default_interpolation")]
        interpolation: String,
        #[serde(default)]
        guess: f64,
        #[serde(default = "default_deriv_threshold")]
        deriv_threshold: f64,
        #[serde(default = "default_grid_cap")]
        grid_cap: usize,
    },
    Iterate {
        #[serde(default)]
        theta0: Vec<f64>,
        x0: f64,
        x_minus1: f64,
        steps: usize,
    },
    Lyapunov {
        #[serde(default)]
        theta0: Vec<f64>,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        x_minus1: f64,
        #[serde(default = "default_lyapunov_steps")]
        steps: usize,
    },
    GradientFlow {
        l: i64,
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
        #[serde(default = "default_t_end")]
        t_end: f64,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    Sweep {
        grid: Vec<SweepAxis>,
        inner: Box<CommandSpec>,
    },
}

fn default_verify_grid() -> usize {
    64
}
fn default_theta_grid() -> usize {
    64
}
fn default_scan_grid() -> usize {
    512
}
fn default_slices() -> usize {
    17
}
fn default_zeros_grid() -> usize {
    512
}
fn default_max_seeds() -> usize {
    4096
}
fn default_rho() -> f64 {
    1.0
}
fn default_graph_n() -> usize {
    1024
}
fn default_interpolation() -> String {
    "trigonometric".into()
}
fn default_deriv_threshold() -> f64 {
    1e4
}
fn default_grid_cap() -> usize {
    4096
}
fn default_lyapunov_steps() -> usize {
    10_000
}
fn default_t_end() -> f64 {
    1e4
}
fn default_dt() -> f64 {
    0.1
}

impl CommandSpec {
    pub fn cli_name(&self) -> &'static str {
        match self {
            CommandSpec::Verify { .. } => "verify",
            CommandSpec::ScanFiber { .. } => "scan-fiber",
            CommandSpec::SolveWindow { .. } => "solve-window",
            CommandSpec::Refine { .. } => "refine",
            CommandSpec::Certify { .. } => "certify",
            CommandSpec::RotationOrbit { .. } => "rotation-orbit",
            CommandSpec::SolveK { .. } => "solve-k",
            CommandSpec::Continue { .. } => "continue",
            CommandSpec::Iterate { .. } => "iterate",
            CommandSpec::Lyapunov { .. } => "lyapunov",
            CommandSpec::GradientFlow { .. } => "gradient-flow",
            CommandSpec::Sweep { .. } => "sweep",
        }
    }
}

/// Parameter path: an explicit value list (bare array or `{"values": […]}`)
/// or a uniform range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathSpec {
    List(Vec<f64>),
    Values { values: Vec<f64> },
    Range { from: f64, to: f64, steps: usize },
}

impl PathSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            PathSpec::List(v) => Ok(v.clone()),
            PathSpec::Values { values } => Ok(values.clone()),
            PathSpec::Range { from, to, steps } => {
                if *steps < 1 {
                    return Err(Error::Config("path range needs at least one step".into()));
                }
                Ok((0..=*steps)
                    .map(|i| from + (to - from) * i as f64 / *steps as f64)
                    .collect())
            }
        }
    }
}

/// One sweep axis: a named scalar parameter and its values.
/// (No unknown-field check here: the flattened path shape precludes it.)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: String,
    #[serde(flatten)]
    pub path: PathSpec,
}

/// Parse a config document, reporting the offending key path on failure.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config(format!("config key `{}`: {}", e.path(), e.inner())))
}
