//! Nonlinear planar truth model.
//!
//! Relative kinematics are written in polar form around the line of sight:
//!
//! ```text
//! ρ̇ = V_ρ,  λ̇ = V_λ/ρ,  γ̇_T = a_T/V_T,  ȧ_T = (u_T − a_T)/τ_T
//! γ̇_M = a_M/V_M,  ȧ_M = (u_M − a_M)/τ_M
//! V_ρ = −(V_M cos δ_M + V_T cos δ_T),  V_λ = −V_M sin δ_M + V_T sin δ_T
//! δ_M = γ_M − λ,  δ_T = γ_T + λ
//! ```
//!
//! The target path angle is measured in the mirrored sense, so its inertial
//! heading is `π − γ_T`. Inertial positions ride along for miss-distance
//! bookkeeping; the last fraction of a sensor interval before closest
//! approach is integrated in Cartesian form, where `λ̇` is not singular.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity used to convert g-units, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speeds {
    pub v_m: f64,
    pub v_t: f64,
}

/// Interceptor path angle and lateral acceleration, known from its own
/// navigation system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OwnState {
    pub gamma_m: f64,
    pub a_m: f64,
}

/// The estimated part of the state: `[ρ, λ, γ_T, a_T]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetState {
    pub rho: f64,
    pub lambda: f64,
    pub gamma_t: f64,
    pub a_t: f64,
}

/// Relative-velocity quantities of a geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub delta_m: f64,
    pub delta_t: f64,
    /// `V_ρ`, m/s.
    pub range_rate: f64,
    /// `V_λ = ρ·λ̇`, m/s.
    pub los_rate_numerator: f64,
}

impl TargetState {
    pub fn kinematics(&self, own: &OwnState, speeds: &Speeds) -> Kinematics {
        let delta_m = own.gamma_m - self.lambda;
        let delta_t = self.gamma_t + self.lambda;
        let (sm, cm) = delta_m.sin_cos();
        let (st, ct) = delta_t.sin_cos();
        Kinematics {
            delta_m,
            delta_t,
            range_rate: -(speeds.v_m * cm + speeds.v_t * ct),
            los_rate_numerator: -speeds.v_m * sm + speeds.v_t * st,
        }
    }
}

/// Physical constants shared by the truth model and the filter's particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub speeds: Speeds,
    pub tau_m: f64,
    pub tau_t: f64,
}

/// Full truth state of the engagement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementState {
    pub target: TargetState,
    pub own: OwnState,
    pub t: f64,
    pub pos_m: [f64; 2],
    pub pos_t: [f64; 2],
}

/// Time derivative of an [`EngagementState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRates {
    pub rho: f64,
    pub lambda: f64,
    pub gamma_t: f64,
    pub a_t: f64,
    pub gamma_m: f64,
    pub a_m: f64,
    pub pos_m: [f64; 2],
    pub pos_t: [f64; 2],
}

type Vec10 = [f64; 10];
pub(crate) type Vec6 = [f64; 6];

impl EngagementState {
    fn to_vec(self) -> Vec10 {
        [
            self.target.rho,
            self.target.lambda,
            self.target.gamma_t,
            self.target.a_t,
            self.own.gamma_m,
            self.own.a_m,
            self.pos_m[0],
            self.pos_m[1],
            self.pos_t[0],
            self.pos_t[1],
        ]
    }

    fn from_vec(x: &Vec10, t: f64) -> Self {
        Self {
            target: TargetState {
                rho: x[0],
                lambda: x[1],
                gamma_t: x[2],
                a_t: x[3],
            },
            own: OwnState {
                gamma_m: x[4],
                a_m: x[5],
            },
            t,
            pos_m: [x[6], x[7]],
            pos_t: [x[8], x[9]],
        }
    }

    /// Separation computed from the inertial positions.
    pub fn separation(&self) -> f64 {
        let dx = self.pos_t[0] - self.pos_m[0];
        let dy = self.pos_t[1] - self.pos_m[1];
        dx.hypot(dy)
    }

    pub fn kinematics(&self, speeds: &Speeds) -> Kinematics {
        self.target.kinematics(&self.own, speeds)
    }
}

/// Rates of `[ρ, λ, γ_T, a_T, γ_M, a_M]`.
#[inline]
pub(crate) fn polar_rates(x: &Vec6, u_m: f64, u_t: f64, plant: &Plant) -> Result<Vec6> {
    let rho = x[0];
    if !(rho > 0.0) {
        return Err(Error::RangeCollapsed { rho });
    }
    let Speeds { v_m, v_t } = plant.speeds;
    let (sm, cm) = (x[4] - x[1]).sin_cos();
    let (st, ct) = (x[2] + x[1]).sin_cos();
    Ok([
        -(v_m * cm + v_t * ct),
        (-v_m * sm + v_t * st) / rho,
        x[3] / v_t,
        (u_t - x[3]) / plant.tau_t,
        x[5] / v_m,
        (u_m - x[5]) / plant.tau_m,
    ])
}

fn full_rates(x: &Vec10, u_m: f64, u_t: f64, plant: &Plant) -> Result<Vec10> {
    let p = polar_rates(&[x[0], x[1], x[2], x[3], x[4], x[5]], u_m, u_t, plant)?;
    let Speeds { v_m, v_t } = plant.speeds;
    Ok([
        p[0],
        p[1],
        p[2],
        p[3],
        p[4],
        p[5],
        v_m * x[4].cos(),
        v_m * x[4].sin(),
        -v_t * x[2].cos(),
        v_t * x[2].sin(),
    ])
}

/// Time derivative of the truth state under held commands `u_m`, `u_t`.
pub fn derivatives(state: &EngagementState, u_m: f64, u_t: f64, plant: &Plant) -> Result<StateRates> {
    let d = full_rates(&state.to_vec(), u_m, u_t, plant)?;
    Ok(StateRates {
        rho: d[0],
        lambda: d[1],
        gamma_t: d[2],
        a_t: d[3],
        gamma_m: d[4],
        a_m: d[5],
        pos_m: [d[6], d[7]],
        pos_t: [d[8], d[9]],
    })
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, d: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * d[i];
    }
    out
}

/// One classical fourth-order Runge–Kutta step.
#[inline]
pub(crate) fn rk4<const N: usize>(
    x: &[f64; N],
    dt: f64,
    f: impl Fn(&[f64; N]) -> Result<[f64; N]>,
) -> Result<[f64; N]> {
    let k1 = f(x)?;
    let k2 = f(&axpy(x, 0.5 * dt, &k1))?;
    let k3 = f(&axpy(x, 0.5 * dt, &k2))?;
    let k4 = f(&axpy(x, dt, &k3))?;
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// One RK4 step of length `dt` with both commands held.
pub fn step(state: &EngagementState, u_m: f64, u_t: f64, dt: f64, plant: &Plant) -> Result<EngagementState> {
    if !(dt > 0.0) {
        return Err(Error::Domain {
            what: "integration step",
            value: dt,
        });
    }
    let x = rk4(&state.to_vec(), dt, |x| full_rates(x, u_m, u_t, plant))?;
    Ok(EngagementState::from_vec(&x, state.t + dt))
}

/// `substeps` RK4 steps covering `dt`.
pub fn advance(
    state: &EngagementState,
    u_m: f64,
    u_t: f64,
    dt: f64,
    substeps: usize,
    plant: &Plant,
) -> Result<EngagementState> {
    let h = dt / substeps.max(1) as f64;
    let mut s = *state;
    for _ in 0..substeps.max(1) {
        s = step(&s, u_m, u_t, h, plant)?;
    }
    Ok(s)
}

/// Advances over `dt` with the target following `profile`, splitting the
/// interval at the switch instant.
pub fn advance_with_profile(
    state: &EngagementState,
    u_m: f64,
    profile: &TargetProfile,
    dt: f64,
    substeps: usize,
    plant: &Plant,
) -> Result<EngagementState> {
    let t0 = state.t;
    let t1 = t0 + dt;
    let ts = profile.t_switch;
    if ts > t0 && ts < t1 {
        let first = ts - t0;
        let n1 = ((substeps as f64 * first / dt).ceil() as usize).max(1);
        let n2 = ((substeps as f64 * (t1 - ts) / dt).ceil() as usize).max(1);
        let mid = advance(state, u_m, target_command(profile, t0), first, n1, plant)?;
        let mut end = advance(&mid, u_m, target_command(profile, ts), t1 - ts, n2, plant)?;
        end.t = t1;
        Ok(end)
    } else {
        let mut end = advance(state, u_m, target_command(profile, t0), dt, substeps, plant)?;
        end.t = t1;
        Ok(end)
    }
}

/// Bearing measurement `y = γ_M − λ + ν`, `ν ~ N(0, σ²)`.
pub fn measure<R: Rng + ?Sized>(state: &EngagementState, sigma_nu: f64, rng: &mut R) -> f64 {
    let noise: f64 = StandardNormal.sample(rng);
    wrap_angle(state.own.gamma_m - state.target.lambda + sigma_nu * noise)
}

/// Single-switch bang-bang evasion maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetProfile {
    /// `+1` or `−1`.
    pub initial_sign: f64,
    /// Switch instant, s. The switch instant belongs to the post-switch segment.
    pub t_switch: f64,
    pub a_t_max: f64,
}

impl TargetProfile {
    pub fn new(initial_sign: f64, t_switch: f64, a_t_max: f64) -> Result<Self> {
        if initial_sign != 1.0 && initial_sign != -1.0 {
            return Err(Error::InvalidParameter(format!(
                "initial maneuver sign must be ±1, got {initial_sign}"
            )));
        }
        if !(t_switch >= 0.0) {
            return Err(Error::InvalidParameter(format!("switch time must be ≥ 0, got {t_switch}")));
        }
        Ok(Self {
            initial_sign,
            t_switch,
            a_t_max,
        })
    }
}

/// Target acceleration command at time `t`, m/s².
pub fn target_command(profile: &TargetProfile, t: f64) -> f64 {
    if t < profile.t_switch {
        profile.initial_sign * profile.a_t_max
    } else {
        -profile.initial_sign * profile.a_t_max
    }
}

/// Switch-time distribution of the evader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// Switch time ~ U[0, 3] s.
    Nominal,
    /// Switch time ~ U[1.5, 2.5] s.
    Smart,
}

impl TargetKind {
    pub fn switch_window(self) -> (f64, f64) {
        match self {
            TargetKind::Nominal => (0.0, 3.0),
            TargetKind::Smart => (1.5, 2.5),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TargetKind::Nominal => "nominal",
            TargetKind::Smart => "smart",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(TargetKind::Nominal),
            "smart" => Ok(TargetKind::Smart),
            other => Err(Error::InvalidParameter(format!("unknown target kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub v_m: f64,
    pub v_t: f64,
    pub tau_m: f64,
    pub tau_t: f64,
    pub a_m_max: f64,
    pub a_t_max: f64,
    /// Bearing noise standard deviation, rad.
    pub sigma_nu: f64,
    /// Sensor rate, Hz.
    pub f: f64,
    pub rho0: f64,
    pub lambda0: f64,
    pub gamma_m0: f64,
    pub gamma_t0: f64,
    pub a_t0: f64,
    /// RK4 substeps per sensor interval.
    pub substeps: usize,
    /// Engagements still closing after this time are flagged.
    pub t_cap: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            v_m: 2500.0,
            v_t: 2500.0,
            tau_m: 0.2,
            tau_t: 0.2,
            a_m_max: 45.0 * STANDARD_GRAVITY,
            a_t_max: 20.0 * STANDARD_GRAVITY,
            sigma_nu: 0.5e-3,
            f: 100.0,
            rho0: 15_000.0,
            lambda0: PI / 2.0,
            gamma_m0: PI / 2.0,
            gamma_t0: -PI / 2.0,
            a_t0: 0.0,
            substeps: 4,
            t_cap: 6.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_m", self.v_m),
            ("v_t", self.v_t),
            ("tau_m", self.tau_m),
            ("tau_t", self.tau_t),
            ("a_m_max", self.a_m_max),
            ("a_t_max", self.a_t_max),
            ("f", self.f),
            ("rho0", self.rho0),
            ("t_cap", self.t_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma_nu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma_nu must be non-negative, got {}",
                self.sigma_nu
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be ≥ 1".into()));
        }
        if !(self.a_m_max > self.a_t_max) {
            return Err(Error::InvalidParameter(
                "interceptor must out-maneuver the target (a_m_max > a_t_max)".into(),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.f
    }

    pub fn plant(&self) -> Plant {
        Plant {
            speeds: Speeds {
                v_m: self.v_m,
                v_t: self.v_t,
            },
            tau_m: self.tau_m,
            tau_t: self.tau_t,
        }
    }

    /// Interceptor at the origin, target at `ρ₀` along `λ₀`.
    pub fn initial_state(&self) -> EngagementState {
        EngagementState {
            target: TargetState {
                rho: self.rho0,
                lambda: self.lambda0,
                gamma_t: self.gamma_t0,
                a_t: self.a_t0,
            },
            own: OwnState {
                gamma_m: self.gamma_m0,
                a_m: 0.0,
            },
            t: 0.0,
            pos_m: [0.0, 0.0],
            pos_t: [self.rho0 * self.lambda0.cos(), self.rho0 * self.lambda0.sin()],
        }
    }
}

/// Relative position sample `target − interceptor` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeSample {
    pub t: f64,
    pub dx: f64,
    pub dy: f64,
}

impl RelativeSample {
    fn range_sq(&self) -> f64 {
        self.dx * self.dx + self.dy * self.dy
    }
}

/// Minimum separation along a sampled trajectory.
///
/// The discrete minimum of `ρ²` is refined by a parabola through its two
/// neighbors (exact for straight-line relative motion), and never exceeds
/// the smallest sampled range.
pub fn miss_distance(trajectory: &[RelativeSample]) -> Result<f64> {
    let n = trajectory.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let (imin, _) = trajectory
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.range_sq().total_cmp(&b.1.range_sq()))
        .expect("nonempty");
    let sampled_min = trajectory[imin].range_sq();
    if imin == n - 1 && n > 1 {
        return Err(Error::NoClosestApproach {
            t_cap: trajectory[n - 1].t,
            last_range: sampled_min.sqrt(),
        });
    }
    if imin == 0 {
        return Ok(sampled_min.sqrt());
    }
    let (a, b, c) = (&trajectory[imin - 1], &trajectory[imin], &trajectory[imin + 1]);
    let (t0, t1, t2) = (a.t - b.t, 0.0, c.t - b.t);
    let (f0, f1, f2) = (a.range_sq(), b.range_sq(), c.range_sq());
    // Lagrange parabola through the three points, vertex value.
    let d01 = (f1 - f0) / (t1 - t0);
    let d12 = (f2 - f1) / (t2 - t1);
    let curvature = (d12 - d01) / (t2 - t0);
    let refined = if curvature > 0.0 {
        let slope_at_b = d01 + curvature * (t1 - t0);
        let shift = -slope_at_b / (2.0 * curvature);
        f1 + slope_at_b * shift + curvature * shift * shift
    } else {
        f1
    };
    Ok(refined.clamp(0.0, sampled_min).sqrt())
}

/// Integrates the Cartesian equations of motion from `state` for up to
/// `window` seconds and returns the refined closest-approach distance.
///
/// Used for the final sensor interval, where the polar form is singular.
pub fn closest_approach(
    state: &EngagementState,
    u_m: f64,
    profile: &TargetProfile,
    window: f64,
    samples: usize,
    plant: &Plant,
) -> Result<f64> {
    let Speeds { v_m, v_t } = plant.speeds;
    // [x_M, y_M, θ_M, a_M, x_T, y_T, θ_T, a_T] with inertial headings.
    let mut x: [f64; 8] = [
        state.pos_m[0],
        state.pos_m[1],
        state.own.gamma_m,
        state.own.a_m,
        state.pos_t[0],
        state.pos_t[1],
        PI - state.target.gamma_t,
        state.target.a_t,
    ];
    let h = window / samples.max(2) as f64;
    let mut t = state.t;
    let mut traj = Vec::with_capacity(samples + 1);
    traj.push(RelativeSample {
        t,
        dx: x[4] - x[0],
        dy: x[5] - x[1],
    });
    for _ in 0..samples.max(2) {
        let u_t = target_command(profile, t);
        x = rk4(&x, h, |s| {
            Ok([
                v_m * s[2].cos(),
                v_m * s[2].sin(),
                s[3] / v_m,
                (u_m - s[3]) / plant.tau_m,
                v_t * s[6].cos(),
                v_t * s[6].sin(),
                -s[7] / v_t,
                (u_t - s[7]) / plant.tau_t,
            ])
        })?;
        t += h;
        let sample = RelativeSample {
            t,
            dx: x[4] - x[0],
            dy: x[5] - x[1],
        };
        let growing = sample.range_sq() > traj.last().map(RelativeSample::range_sq).unwrap_or(f64::MAX);
        traj.push(sample);
        if growing && traj.len() >= 3 {
            break;
        }
    }
    miss_distance(&traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plant() -> Plant {
        ScenarioConfig::default().plant()
    }

    #[test]
    fn head_on_collision_rates() {
        let s = ScenarioConfig::default().initial_state();
        let d = derivatives(&s, 0.0, 0.0, &plant()).unwrap();
        assert_abs_diff_eq!(d.lambda, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.rho, -5000.0, epsilon = 1e-9);
    }

    #[test]
    fn lag_equilibrium() {
        let mut s = ScenarioConfig::default().initial_state();
        s.target.a_t = 50.0;
        let d = derivatives(&s, 0.0, 50.0, &plant()).unwrap();
        assert_eq!(d.a_t, 0.0);
    }

    #[test]
    fn derivatives_reject_collapsed_range() {
        let mut s = ScenarioConfig::default().initial_state();
        s.target.rho = 0.0;
        assert!(matches!(derivatives(&s, 0.0, 0.0, &plant()), Err(Error::RangeCollapsed { .. })));
    }

    #[test]
    fn polar_rates_match_finite_differences_of_geometry() {
        // ρ and λ rates against finite differences of the inertial geometry.
        let cfg = ScenarioConfig::default();
        let p = plant();
        let mut s = cfg.initial_state();
        s.own.gamma_m += 0.05;
        s.target.gamma_t += 0.03;
        s.target.a_t = cfg.a_t_max;
        let d = derivatives(&s, 0.0, cfg.a_t_max, &p).unwrap();
        let geometry = |st: &EngagementState| {
            let dx = st.pos_t[0] - st.pos_m[0];
            let dy = st.pos_t[1] - st.pos_m[1];
            (dx.hypot(dy), dy.atan2(dx))
        };
        let h = 1e-6;
        let mut plus = s;
        let mut minus = s;
        for (st, sgn) in [(&mut plus, 1.0), (&mut minus, -1.0)] {
            st.pos_m[0] += sgn * h * d.pos_m[0];
            st.pos_m[1] += sgn * h * d.pos_m[1];
            st.pos_t[0] += sgn * h * d.pos_t[0];
            st.pos_t[1] += sgn * h * d.pos_t[1];
        }
        let (rp, lp) = geometry(&plus);
        let (rm, lm) = geometry(&minus);
        assert_abs_diff_eq!((rp - rm) / (2.0 * h), d.rho, epsilon = 1e-4);
        assert_abs_diff_eq!((lp - lm) / (2.0 * h), d.lambda, epsilon = 1e-8);
    }

    #[test]
    fn straight_flight_range_matches_closed_form() {
        let cfg = ScenarioConfig {
            gamma_m0: PI / 2.0 + 0.1,
            gamma_t0: -PI / 2.0 + 0.05,
            ..ScenarioConfig::default()
        };
        let p = cfg.plant();
        let mut s = cfg.initial_state();
        let x0 = s;
        for _ in 0..100 {
            s = advance(&s, 0.0, 0.0, 0.01, 4, &p).unwrap();
        }
        let t = s.t;
        let vm = [cfg.v_m * x0.own.gamma_m.cos(), cfg.v_m * x0.own.gamma_m.sin()];
        let vt = [-cfg.v_t * x0.target.gamma_t.cos(), cfg.v_t * x0.target.gamma_t.sin()];
        let dx = x0.pos_t[0] + vt[0] * t - vm[0] * t;
        let dy = x0.pos_t[1] + vt[1] * t - vm[1] * t;
        assert_abs_diff_eq!(s.target.rho, dx.hypot(dy), epsilon = 1e-6);
        assert_abs_diff_eq!(s.separation(), dx.hypot(dy), epsilon = 1e-6);
        assert_abs_diff_eq!(s.target.lambda, dy.atan2(dx), epsilon = 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let cfg = ScenarioConfig::default();
        let p = cfg.plant();
        let mut s0 = cfg.initial_state();
        s0.own.gamma_m += 0.02;
        let run = |dt: f64| {
            let mut s = s0;
            let n = (1.0 / dt).round() as usize;
            for _ in 0..n {
                s = step(&s, 200.0, -150.0, dt, &p).unwrap();
            }
            s
        };
        let reference = run(0.001);
        let coarse = run(0.04);
        let fine = run(0.02);
        let e_coarse = (coarse.target.lambda - reference.target.lambda).abs();
        let e_fine = (fine.target.lambda - reference.target.lambda).abs();
        let ratio = e_coarse / e_fine;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn speeds_are_constant() {
        let cfg = ScenarioConfig::default();
        let p = cfg.plant();
        let s = cfg.initial_state();
        let d = derivatives(&s, 100.0, 100.0, &p).unwrap();
        assert_abs_diff_eq!(d.pos_m[0].hypot(d.pos_m[1]), cfg.v_m, epsilon = 1e-9);
        assert_abs_diff_eq!(d.pos_t[0].hypot(d.pos_t[1]), cfg.v_t, epsilon = 1e-9);
    }

    #[test]
    fn noiseless_measurement_is_bearing() {
        let s = ScenarioConfig::default().initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(measure(&s, 0.0, &mut rng), wrap_angle(s.own.gamma_m - s.target.lambda));
        let mut far = s;
        far.target.rho *= 10.0;
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(measure(&far, 0.0, &mut rng2), measure(&s, 0.0, &mut ChaCha8Rng::seed_from_u64(1)));
    }

    #[test]
    fn measurement_noise_statistics() {
        let s = ScenarioConfig::default().initial_state();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let truth = s.own.gamma_m - s.target.lambda;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let e = measure(&s, 0.5e-3, &mut rng) - truth;
            m1 += e;
            m2 += e * e;
        }
        let mean = m1 / n as f64;
        let std = (m2 / n as f64 - mean * mean).sqrt();
        assert!((std / 0.5e-3 - 1.0).abs() < 0.02, "std {std}");
    }

    #[test]
    fn target_command_switches_once() {
        let p = TargetProfile::new(1.0, 1.3, 10.0).unwrap();
        assert_eq!(target_command(&p, 1.29), 10.0);
        assert_eq!(target_command(&p, 1.3), -10.0);
        let mut changes = 0;
        let mut prev = target_command(&p, 0.0);
        for k in 1..=300 {
            let c = target_command(&p, k as f64 * 0.01);
            if c != prev {
                changes += 1;
            }
            prev = c;
        }
        assert_eq!(changes, 1);
        assert!(TargetProfile::new(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn miss_distance_of_crossing_lines() {
        // relative motion p(t) = p0 + v t
        let p0 = [30.0, -400.0];
        let v = [-7.0, 1000.0];
        let traj: Vec<_> = (0..80)
            .map(|k| {
                let t = k as f64 * 0.01;
                RelativeSample {
                    t,
                    dx: p0[0] + v[0] * t,
                    dy: p0[1] + v[1] * t,
                }
            })
            .collect();
        let cross = (p0[0] * v[1] - p0[1] * v[0]).abs() / v[0].hypot(v[1]);
        let m = miss_distance(&traj).unwrap();
        assert_abs_diff_eq!(m, cross, epsilon = 1e-4);
        let sampled = traj.iter().map(|s| s.range_sq().sqrt()).fold(f64::MAX, f64::min);
        assert!(m <= sampled);
    }

    #[test]
    fn miss_distance_requires_closest_approach() {
        let traj: Vec<_> = (0..5)
            .map(|k| RelativeSample {
                t: k as f64,
                dx: 0.0,
                dy: 100.0 - k as f64,
            })
            .collect();
        assert!(matches!(miss_distance(&traj), Err(Error::NoClosestApproach { .. })));
        assert!(matches!(miss_distance(&[]), Err(Error::EmptySamples)));
    }

    #[test]
    fn head_on_collision_has_zero_miss() {
        let cfg = ScenarioConfig::default();
        let p = cfg.plant();
        let profile = TargetProfile::new(1.0, 100.0, 0.0).unwrap();
        let mut s = cfg.initial_state();
        while -s.target.rho / s.kinematics(&p.speeds).range_rate > cfg.dt() {
            s = advance_with_profile(&s, 0.0, &profile, cfg.dt(), 4, &p).unwrap();
        }
        let m = closest_approach(&s, 0.0, &profile, 2.0 * cfg.dt(), 200, &p).unwrap();
        assert!(m < 1e-3, "miss {m}");
    }

    #[test]
    fn switch_inside_interval_is_honored() {
        let cfg = ScenarioConfig::default();
        let p = cfg.plant();
        let s = cfg.initial_state();
        let profile = TargetProfile::new(1.0, 0.005, cfg.a_t_max).unwrap();
        let a = advance_with_profile(&s, 0.0, &profile, 0.01, 4, &p).unwrap();
        let pre = advance(&s, 0.0, cfg.a_t_max, 0.005, 2, &p).unwrap();
        let b = advance(&pre, 0.0, -cfg.a_t_max, 0.005, 2, &p).unwrap();
        assert_abs_diff_eq!(a.target.a_t, b.target.a_t, epsilon = 1e-12);
        assert_abs_diff_eq!(a.t, 0.01, epsilon = 1e-15);
    }
}
