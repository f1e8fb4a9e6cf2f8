//! Orbits with a prescribed fibered rotation number via the integer floor
//! staircase: shift the coupling arguments by m_k = ⌊kω⌋, solve the shifted
//! system inside I, and add the staircase back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mode, ModelInstance};
use crate::orbits::{solve_window_2d, MultistartSpec, OrbitSegment};

/// The floor staircase m_k = ⌊kω⌋ on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Staircase {
    pub omega: f64,
    pub k_min: i64,
    pub k_max: i64,
    /// m[i] = ⌊(k_min + i)·ω⌋ as exact integer-valued floats.
    pub m: Vec<f64>,
    /// delta[i] = m_{k+1} − m_k, in {0, 1, −1} whenever |ω| ≤ 1.
    pub delta: Vec<f64>,
}

/// Exact floors of kω over [k_min, k_max].
pub fn staircase(omega: f64, k_min: i64, k_max: i64) -> Result<Staircase> {
    if k_max < k_min {
        return Err(Error::Contract(format!("empty staircase window [{k_min}, {k_max}]")));
    }
    let m: Vec<f64> = (k_min..=k_max).map(|k| (k as f64 * omega).floor()).collect();
    let delta = m.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(Staircase { omega, k_min, k_max, m, delta })
}

impl Staircase {
    pub fn m_at(&self, k: i64) -> f64 {
        (k as f64 * self.omega).floor()
    }
}

/// Probe report for the shifted-coupling hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    /// max |Z(θ, a+1, b+1, c+1) − Z(θ, a, b, c)| on the probe grid.
    pub z_periodicity_defect: f64,
    /// max |V(θ, x+1) − V(θ, x)| on the probe grid.
    pub v_periodicity_defect: f64,
    /// max |Z| over the probe of M × [−2, 2]³.
    pub z_sup_on_double_cube: f64,
    /// max |Ẑ_k − Z| over probed sites and arguments.
    pub max_abs_g: f64,
}

const PERIODICITY_TOL: f64 = 1e-10;

/// Install the staircase shift Ẑ_k(a, b, c) = Z(a + m_{k+1} − m_k, b,
/// c + m_{k−1} − m_k) after probing the periodicity and range hypotheses:
/// Z(θ, a+1, b+1, c+1) = Z(θ, a, b, c), V(θ, x+1) = V(θ, x), and
/// Z(M × [−2, 2]³) ⊂ [−1, 1].
pub fn shifted_coupling(m: &ModelInstance, omega: f64) -> Result<(ModelInstance, ShiftReport)> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("the staircase shift needs a two-dimensional model".into()));
    }
    let probes = 16usize;
    let thetas: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 8.0]).collect();
    let axis: Vec<f64> = (0..=probes).map(|i| -1.0 + 2.0 * i as f64 / probes as f64).collect();
    let wide: Vec<f64> = (0..=probes).map(|i| -2.0 + 4.0 * i as f64 / probes as f64).collect();

    let mut zdef = 0.0_f64;
    let mut vdef = 0.0_f64;
    let mut zsup = 0.0_f64;
    for theta in &thetas {
        for &a in &axis {
            vdef = vdef.max((m.v(theta, a + 1.0) - m.v(theta, a)).abs());
            for &b in &axis {
                for &c in &axis {
                    let z0 = m.coupling.eval(theta, &[a, b, c]);
                    let z1 = m.coupling.eval(theta, &[a + 1.0, b + 1.0, c + 1.0]);
                    zdef = zdef.max((z1 - z0).abs());
                }
            }
        }
        for &a in &wide {
            for &b in &wide {
                for &c in &wide {
                    zsup = zsup.max(m.coupling.eval(theta, &[a, b, c]).abs());
                }
            }
        }
    }
    if zdef > PERIODICITY_TOL {
        return Err(Error::Hypothesis(format!(
            "coupling is not 1-periodic under the simultaneous shift (defect {zdef:.3e})"
        )));
    }
    if vdef > PERIODICITY_TOL {
        return Err(Error::Hypothesis(format!(
            "potential is not 1-periodic in x (defect {vdef:.3e})"
        )));
    }
    if zsup > 1.0 + PERIODICITY_TOL {
        return Err(Error::Hypothesis(format!(
            "coupling exceeds 1 on the doubled cube (sup {zsup:.6}); the shifted system would \
             not satisfy the range condition"
        )));
    }

    let shifted = m.clone().with_shift(omega);
    // G_k = Ẑ_k − Z sampled over representative sites and arguments
    let mut max_g = 0.0_f64;
    for k in -8i64..=8 {
        for theta in &thetas {
            for &a in &axis {
                for &b in &axis {
                    for &c in &axis {
                        let z = m.coupling.eval(theta, &[a, b, c]);
                        let sh = shifted.shift.expect("just installed");
                        let (da, dc) = sh.offsets(k);
                        let zh = m.coupling.eval(theta, &[a + da, b, c + dc]);
                        max_g = max_g.max((zh - z).abs());
                    }
                }
            }
        }
    }
    let report = ShiftReport {
        z_periodicity_defect: zdef,
        v_periodicity_defect: vdef,
        z_sup_on_double_cube: zsup,
        max_abs_g: max_g,
    };
    Ok((shifted, report))
}

/// A lattice orbit with prescribed fibered rotation number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationOrbit {
    pub omega: f64,
    /// Window solution of the shifted system, values in I.
    pub segment: OrbitSegment,
    /// m_k per site.
    pub staircase: Vec<f64>,
    /// y_k = x_k + m_k.
    pub y: Vec<f64>,
    /// max_k |y_k − kω| (bounded by 2).
    pub max_deviation: f64,
    pub forward_rotation: f64,
    pub backward_rotation: f64,
    /// Partial means ρ_N = (y_N − y_0)/N for N = 1 ‥ k_max.
    pub profile: Vec<f64>,
}

/// Construct an orbit with fibered rotation number ω on the window
/// [−l, l] by solving the staircase-shifted system with boundary (a, b).
pub fn construct_rotation_orbit(
    m: &ModelInstance,
    omega: f64,
    l: i64,
    a: f64,
    b: f64,
    spec: &MultistartSpec,
) -> Result<RotationOrbit> {
    let (shifted, _report) = shifted_coupling(m, omega)?;
    let set = solve_window_2d(&shifted, l, a, b, spec)?;
    let segment = set
        .segments
        .first()
        .cloned()
        .ok_or_else(|| Error::Existence("shifted window system produced no solution".into()))?;
    let st = staircase(omega, -l, l)?;
    let y: Vec<f64> = segment.values.iter().zip(&st.m).map(|(x, m)| x + m).collect();
    let max_dev = y
        .iter()
        .enumerate()
        .map(|(i, yk)| {
            let k = (-l + i as i64) as f64;
            (yk - k * omega).abs()
        })
        .fold(0.0_f64, f64::max);
    if max_dev > 2.0 {
        return Err(Error::Existence(format!(
            "constructed orbit deviates {max_dev} > 2 from the prescribed drift; the shifted \
             solve returned values outside I"
        )));
    }
    let origin = l as usize; // index of k = 0
    let measure = measure_rotation_number(&y, origin)?;
    Ok(RotationOrbit {
        omega,
        segment,
        staircase: st.m,
        y,
        max_deviation: max_dev,
        forward_rotation: measure.forward,
        backward_rotation: measure.backward.unwrap_or(measure.forward),
        profile: measure.profile,
    })
}

/// Telescoped partial rotation numbers of a value sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationMeasure {
    /// (y_last − y_origin)/(last − origin).
    pub forward: f64,
    /// (y_origin − y_first)/(origin − first), when the origin is interior.
    pub backward: Option<f64>,
    /// ρ_N = (y_{origin+N} − y_origin)/N for N = 1 ‥.
    pub profile: Vec<f64>,
}

/// Measure forward/backward mean drift of a sequence around `origin`.
pub fn measure_rotation_number(values: &[f64], origin: usize) -> Result<RotationMeasure> {
    if values.len() < 2 {
        return Err(Error::Contract("rotation measurement needs at least two values".into()));
    }
    if origin >= values.len() {
        return Err(Error::Contract(format!(
            "origin {origin} outside the sequence (length {})",
            values.len()
        )));
    }
    let y0 = values[origin];
    let fwd_span = values.len() - 1 - origin;
    let forward = if fwd_span > 0 {
        (values[values.len() - 1] - y0) / fwd_span as f64
    } else {
        // degenerate: only backward data; report the backward mean
        (y0 - values[0]) / origin as f64
    };
    let backward = (origin > 0).then(|| (y0 - values[0]) / origin as f64);
    let profile = (1..=fwd_span)
        .map(|n| (values[origin + n] - y0) / n as f64)
        .collect();
    Ok(RotationMeasure { forward, backward, profile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        builtin_model, BaseDynamics, BuiltinParams, Coupling, Potential, PotentialForm,
        PotentialTerm, Trig, TrigKind,
    };

    /// 1-periodic potential −cos(2πx)/(2π): zeros at ±1/4 and ±3/4 inside I.
    pub(crate) fn periodic_cosine_model(eps: f64) -> ModelInstance {
        let v = Potential::new(PotentialForm::Series {
            terms: vec![PotentialTerm {
                coeff: -1.0 / std::f64::consts::TAU,
                x_pow: 0,
                trig: Some(Trig { kind: TrigKind::Cos, x_freq: 1.0, theta_freq: 0.0, phase: 0.0 }),
            }],
        });
        let mut m = ModelInstance::new(
            Coupling::laplacian(3),
            v,
            BaseDynamics::fixed1(0.0),
            eps,
        )
        .unwrap();
        m.epsilon0 = crate::model::estimate_epsilon0(&m, 0.1).ok();
        m
    }

    #[test]
    fn staircase_half() {
        let st = staircase(0.5, 0, 4).unwrap();
        assert_eq!(st.m, vec![0.0, 0.0, 1.0, 1.0, 2.0]);
        assert!(st.delta.iter().all(|d| *d == 0.0 || *d == 1.0));
    }

    #[test]
    fn staircase_zero_and_negative() {
        assert_eq!(staircase(0.0, 0, 3).unwrap().m, vec![0.0; 4]);
        let st = staircase(-0.5, 0, 3).unwrap();
        assert_eq!(st.m, vec![0.0, -1.0, -1.0, -2.0]);
    }

    #[test]
    fn staircase_dyadic_matches_integer_arithmetic() {
        // for dyadic ω = p/2^q the floats are exact, so floors must agree
        // with integer arithmetic
        for (p, q) in [(1i64, 4u32), (3, 2), (-5, 3), (7, 1)] {
            let omega = p as f64 / (1u64 << q) as f64;
            let st = staircase(omega, -50, 50).unwrap();
            for (i, k) in (-50i64..=50).enumerate() {
                let exact = (k * p).div_euclid(1i64 << q);
                assert_eq!(st.m[i], exact as f64, "k={k}, ω={omega}");
            }
        }
    }

    #[test]
    fn shifted_laplacian_g_values() {
        let m = periodic_cosine_model(0.05);
        let (shifted, report) = shifted_coupling(&m, 0.5).unwrap();
        // k = 1, ω = 1/2: offsets (m_2 − m_1, m_0 − m_1) = (1, 0), so
        // G = 1/8 for the Laplacian coupling
        let sh = shifted.shift.unwrap();
        assert_eq!(sh.offsets(1), (1.0, 0.0));
        let z = m.coupling.eval(&[0.0], &[0.2, -0.1, 0.3]);
        let zh = m.coupling.eval(&[0.0], &[0.2 + 1.0, -0.1, 0.3]);
        assert!((zh - z - 0.125).abs() < 1e-15);
        assert!(report.max_abs_g <= 2.0);
        assert!(report.z_sup_on_double_cube <= 1.0);
    }

    #[test]
    fn integer_omega_has_zero_g_for_laplacian() {
        let m = periodic_cosine_model(0.05);
        let (shifted, _) = shifted_coupling(&m, 1.0).unwrap();
        let sh = shifted.shift.unwrap();
        for k in -5i64..=5 {
            let (da, dc) = sh.offsets(k);
            // second difference of the exact staircase m_k = k vanishes
            assert_eq!(da + dc, 0.0, "k = {k}");
        }
    }

    #[test]
    fn non_periodic_potential_is_rejected() {
        let m = builtin_model(
            "double-well",
            &BuiltinParams { epsilon: Some(0.05), ..Default::default() },
        )
        .unwrap();
        let err = shifted_coupling(&m, 0.5).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(_)), "{err:?}");
    }

    #[test]
    fn rotation_orbit_zero_omega() {
        let m = periodic_cosine_model(0.05);
        let orbit =
            construct_rotation_orbit(&m, 0.0, 10, 0.0, 0.0, &MultistartSpec::default()).unwrap();
        assert!(orbit.max_deviation <= 2.0);
        // ω = 0: y ≡ x stays bounded and the measured drift vanishes
        assert!(orbit.forward_rotation.abs() < 0.1, "{}", orbit.forward_rotation);
    }

    #[test]
    fn rotation_orbit_golden_mean() {
        let m = periodic_cosine_model(0.05);
        let omega = (5.0_f64.sqrt() - 1.0) / 2.0;
        let orbit =
            construct_rotation_orbit(&m, omega, 15, 0.0, 0.0, &MultistartSpec::default()).unwrap();
        assert!(orbit.max_deviation <= 2.0, "{}", orbit.max_deviation);
        for (i, rho) in orbit.profile.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((rho - omega).abs() <= 4.0 / n + 1e-12, "N={n}: {rho}");
        }
        // shift identity: the y-sequence solves the original system
        for i in 1..orbit.y.len() - 1 {
            let k = -15 + i as i64;
            let theta = m.base.theta_at(k).unwrap();
            let r = m.epsilon
                * m.coupling.eval(&theta, &[orbit.y[i + 1], orbit.y[i], orbit.y[i - 1]])
                + m.v(&theta, orbit.y[i]);
            assert!(r.abs() <= 1e-9, "site {k}: residual {r}");
        }
    }

    #[test]
    fn rotation_orbit_omega_one_measures_one() {
        let m = periodic_cosine_model(0.05);
        let orbit =
            construct_rotation_orbit(&m, 1.0, 10, 0.0, 0.0, &MultistartSpec::default()).unwrap();
        // y_k = x_k + k: the telescoped mean tends to 1
        assert!((orbit.forward_rotation - 1.0).abs() < 0.15, "{}", orbit.forward_rotation);
        assert!(orbit.max_deviation <= 2.0);
    }

    #[test]
    fn measure_exact_linear_drift() {
        let omega = 0.37;
        let y: Vec<f64> = (0..=20).map(|k| k as f64 * omega).collect();
        let got = measure_rotation_number(&y, 0).unwrap();
        assert!((got.forward - omega).abs() < 1e-14);
        assert!(got.backward.is_none());
    }

    #[test]
    fn measure_constant_is_zero() {
        let y = vec![0.3; 12];
        let got = measure_rotation_number(&y, 5).unwrap();
        assert_eq!(got.forward, 0.0);
        assert_eq!(got.backward, Some(0.0));
    }

    #[test]
    fn measure_bounded_noise_converges() {
        // y_k = kω + bounded wobble of amplitude ≤ 2 ⇒ |ρ_N − ω| ≤ 4/N
        let omega = 0.618;
        let y: Vec<f64> = (0..=200)
            .map(|k| k as f64 * omega + 2.0 * (0.7 * k as f64).sin())
            .collect();
        let got = measure_rotation_number(&y, 0).unwrap();
        for (i, rho) in got.profile.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((rho - omega).abs() <= 4.0 / n + 1e-12);
        }
    }
}
