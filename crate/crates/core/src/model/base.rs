//! Base dynamics θ_k over the manifold: torus rotations, a fixed point, or
//! an explicitly tabulated sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fract_mul, wrap_unit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseDynamics {
    /// θ_k = θ_0 + kω mod 1 per coordinate. Evaluation is direct (no step
    /// composition), with a split product so k·ω keeps full precision for
    /// |k| up to 2^26.
    Rotation {
        omega: Vec<f64>,
        #[serde(default)]
        theta0: Vec<f64>,
    },
    /// θ_k ≡ θ* for all k.
    FixedPoint { theta: Vec<f64> },
    /// θ_{first_index + i} = thetas[i]; lookups outside the window are a
    /// contract violation, never extrapolation.
    Explicit {
        first_index: i64,
        thetas: Vec<Vec<f64>>,
    },
}

impl BaseDynamics {
    pub fn rotation1(omega: f64) -> Self {
        BaseDynamics::Rotation { omega: vec![omega], theta0: vec![0.0] }
    }

    pub fn fixed1(theta: f64) -> Self {
        BaseDynamics::FixedPoint { theta: vec![theta] }
    }

    /// Golden-mean rotation, the default quasiperiodic forcing.
    pub fn golden() -> Self {
        BaseDynamics::rotation1((5.0_f64.sqrt() - 1.0) / 2.0)
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseDynamics::Rotation { omega, .. } => omega.len(),
            BaseDynamics::FixedPoint { theta } => theta.len(),
            BaseDynamics::Explicit { thetas, .. } => {
                thetas.first().map_or(0, |t| t.len())
            }
        }
    }

    /// The rotation vector, when this base is a rotation.
    pub fn omega(&self) -> Option<&[f64]> {
        match self {
            BaseDynamics::Rotation { omega, .. } => Some(omega),
            _ => None,
        }
    }

    pub fn theta_at(&self, k: i64) -> Result<Vec<f64>> {
        match self {
            BaseDynamics::Rotation { omega, theta0 } => Ok(omega
                .iter()
                .enumerate()
                .map(|(j, &w)| {
                    let t0 = theta0.get(j).copied().unwrap_or(0.0);
                    wrap_unit(t0 + fract_mul(k, w))
                })
                .collect()),
            BaseDynamics::FixedPoint { theta } => Ok(theta.clone()),
            BaseDynamics::Explicit { first_index, thetas } => {
                let idx = k - first_index;
                if idx < 0 || idx as usize >= thetas.len() {
                    return Err(Error::Contract(format!(
                        "explicit base sequence covers [{}, {}], requested k = {k}",
                        first_index,
                        first_index + thetas.len() as i64 - 1
                    )));
                }
                Ok(thetas[idx as usize].clone())
            }
        }
    }

    /// Replace the rotation's starting point (no-op for other kinds).
    pub fn with_theta0(mut self, t0: Vec<f64>) -> Self {
        if let BaseDynamics::Rotation { theta0, .. } = &mut self {
            *theta0 = t0;
        }
        self
    }
}
