//! Normalized linear pursuit–evasion game with bounded controls and
//! first-order lags (DGL1).
//!
//! The game is played in the plane of normalized zero-effort miss `z̄` and
//! normalized time-to-go `τ = t_go / τ_M`. Under optimal play the ZEM obeys
//! `dz̄/dτ = Γ(τ)·sign z̄` with
//!
//! ```text
//! Γ(τ) = μ·ψ(τ) − ε·ψ(τ/ε),   ψ(θ) = e^(−θ) + θ − 1
//! ```
//!
//! which splits the plane into an upper regular region, a lower regular
//! region, and a singular region bounded by `±z̄*(τ) = ±∫_{τ_s}^{τ} Γ`.
//! Every quantity needed at run time has a closed form, so nothing here is
//! integrated numerically.

use serde::{Deserialize, Serialize};

use crate::dynamics::{OwnState, Speeds, TargetState};
use crate::error::{domain, Error, Result};

/// Below this argument the lag kernels switch to their Taylor series.
const SERIES_CUTOFF: f64 = 0.1;

/// Default nominal initial normalized time-to-go (3 s / 0.2 s).
pub const NOMINAL_TAU0: f64 = 15.0;

const ROOT_TOL: f64 = 1e-12;

/// `ψ(θ) = e^(−θ) + θ − 1`, the normalized displacement produced by a unit
/// step through a first-order lag after normalized time `θ`.
pub fn psi(theta: f64) -> Result<f64> {
    if theta < 0.0 || theta.is_nan() {
        return Err(domain("psi argument", theta));
    }
    Ok(psi_unchecked(theta))
}

#[inline]
pub(crate) fn psi_unchecked(theta: f64) -> f64 {
    if theta < SERIES_CUTOFF {
        // Σ_{n≥2} (−θ)^n / n!
        let mut term = theta * theta / 2.0;
        let mut sum: f64 = 0.0;
        let mut n = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            n += 1.0;
            term *= -theta / n;
        }
        sum
    } else {
        (-theta).exp_m1() + theta
    }
}

/// `∫₀^θ ψ = θ²/2 − θ + 1 − e^(−θ)`.
#[inline]
pub fn psi_integral(theta: f64) -> f64 {
    debug_assert!(theta >= 0.0);
    if theta < SERIES_CUTOFF {
        // Σ_{n≥3} (−1)^(n+1) θ^n / n!
        let mut term = theta * theta * theta / 6.0;
        let mut sum: f64 = 0.0;
        let mut n = 3.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            n += 1.0;
            term *= -theta / n;
        }
        sum
    } else {
        0.5 * theta * theta - theta - (-theta).exp_m1()
    }
}

#[inline]
fn sat(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Maneuverability ratio `a_M^max / a_T^max`.
    pub mu: f64,
    /// Agility ratio `τ_T / τ_M`.
    pub eps: f64,
    /// Interceptor time constant, s.
    pub tau_m: f64,
    /// Target maximal lateral acceleration, m/s².
    pub a_t_max: f64,
    /// Fraction of the singular region in which the pursuer command is linear.
    pub k_lin: f64,
}

impl GameParams {
    pub fn new(mu: f64, eps: f64, tau_m: f64, a_t_max: f64, k_lin: f64) -> Result<Self> {
        let p = Self {
            mu,
            eps,
            tau_m,
            a_t_max,
            k_lin,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "maneuverability ratio must exceed 1, got {}",
                self.mu
            )));
        }
        if !(self.eps > 0.0 && self.tau_m > 0.0 && self.a_t_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps, tau_m and a_t_max must be positive (got {}, {}, {})",
                self.eps, self.tau_m, self.a_t_max
            )));
        }
        if !(self.k_lin > 0.0 && self.k_lin <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "k_lin must lie in (0, 1], got {}",
                self.k_lin
            )));
        }
        Ok(())
    }

    pub fn tau_t(&self) -> f64 {
        self.eps * self.tau_m
    }

    pub fn a_m_max(&self) -> f64 {
        self.mu * self.a_t_max
    }

    /// Meters per unit of normalized ZEM, `a_T^max·τ_M²`.
    pub fn length_scale(&self) -> f64 {
        self.a_t_max * self.tau_m * self.tau_m
    }
}

/// A point of the normalized game plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GamePoint {
    pub z_bar: f64,
    pub tau: f64,
}

impl GamePoint {
    pub fn new(z_bar: f64, tau: f64) -> Self {
        Self { z_bar, tau }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `D1+`
    UpperRegular,
    /// `D0`
    Singular,
    /// `D1−`
    LowerRegular,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::UpperRegular => "upper_regular",
            Region::Singular => "singular",
            Region::LowerRegular => "lower_regular",
        }
    }
}

/// Change of the normalized ZEM over a horizon, per unit of normalized
/// pursuer and evader command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonGains {
    /// `max(τ − h, 0)`
    pub tau_end: f64,
    /// `μ·∫ψ(τ′)dτ′` over `[τ_end, τ]`.
    pub pursuer: f64,
    /// `ε·∫ψ(τ′/ε)dτ′` over `[τ_end, τ]`.
    pub evader: f64,
}

impl HorizonGains {
    /// ZEM at `tau_end` given constant normalized commands `u` and `v`.
    #[inline]
    pub fn propagate(&self, z_bar: f64, u: f64, v: f64) -> f64 {
        z_bar - u * self.pursuer + v * self.evader
    }
}

/// See [`GameSpace::value_terms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueTerms {
    pub offset: f64,
    pub floor: f64,
}

impl ValueTerms {
    #[inline]
    pub fn value(&self, z_bar: f64) -> f64 {
        (z_bar.abs() - self.offset).max(self.floor).max(0.0)
    }
}

/// Game parameters together with the derived apex of the singular region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameSpace {
    params: GameParams,
    tau_s: f64,
    /// `∫₀^{τ_s} Γ`, non-positive.
    gamma_integral_at_apex: f64,
}

impl GameSpace {
    pub fn new(params: GameParams) -> Result<Self> {
        params.validate()?;
        let tau_s = find_tau_s(&params);
        let gamma_integral_at_apex = gamma_integral(tau_s, &params);
        Ok(Self {
            params,
            tau_s,
            gamma_integral_at_apex,
        })
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_s
    }

    pub fn gamma(&self, tau: f64) -> Result<f64> {
        gamma(tau, &self.params)
    }

    /// `z̄*(τ)`; fails below the apex.
    pub fn singular_boundary(&self, tau: f64) -> Result<f64> {
        if tau.is_nan() || tau < self.tau_s {
            return Err(domain("normalized time-to-go below singular apex", tau));
        }
        Ok(self.boundary_or_zero(tau))
    }

    /// `z̄*(τ)` above the apex, zero below it.
    #[inline]
    pub fn boundary_or_zero(&self, tau: f64) -> f64 {
        if tau <= self.tau_s {
            0.0
        } else {
            (gamma_integral(tau, &self.params) - self.gamma_integral_at_apex).max(0.0)
        }
    }

    pub fn classify(&self, point: GamePoint) -> Region {
        if point.tau >= self.tau_s && point.z_bar.abs() < self.boundary_or_zero(point.tau) {
            Region::Singular
        } else if point.z_bar < 0.0 {
            Region::LowerRegular
        } else {
            Region::UpperRegular
        }
    }

    /// Game value in normalized units.
    pub fn miss_value_normalized(&self, point: GamePoint) -> f64 {
        let v = match self.classify(point) {
            Region::Singular => -self.gamma_integral_at_apex,
            _ => point.z_bar.abs() - gamma_integral(point.tau.max(0.0), &self.params),
        };
        v.max(0.0)
    }

    /// Miss distance in meters under optimal play from `point`.
    pub fn miss_value(&self, point: GamePoint) -> f64 {
        self.params.length_scale() * self.miss_value_normalized(point)
    }

    /// Terms of the normalized value at a fixed `τ`: the value of `z̄` there is
    /// `max(|z̄| − offset, floor, 0)`.
    #[inline]
    pub fn value_terms(&self, tau: f64) -> ValueTerms {
        let tau = tau.max(0.0);
        ValueTerms {
            offset: gamma_integral(tau, &self.params),
            floor: if tau >= self.tau_s {
                -self.gamma_integral_at_apex
            } else {
                0.0
            },
        }
    }

    /// Miss distance of any point inside the singular region, meters.
    pub fn singular_value(&self) -> f64 {
        self.params.length_scale() * (-self.gamma_integral_at_apex).max(0.0)
    }

    /// Normalized DGL1 command with the linear chattering-prevention zone.
    pub fn command(&self, point: GamePoint) -> f64 {
        if point.tau <= self.tau_s {
            return sign0(point.z_bar);
        }
        let boundary = self.boundary_or_zero(point.tau);
        if point.z_bar.abs() < boundary {
            sat(point.z_bar / (self.params.k_lin * boundary))
        } else {
            sign0(point.z_bar)
        }
    }

    /// Gains for propagating the ZEM over `[τ, max(τ − h, 0)]`.
    pub fn horizon_gains(&self, tau: f64, h: f64) -> HorizonGains {
        let p = &self.params;
        let tau = tau.max(0.0);
        let tau_end = (tau - h).max(0.0);
        let pursuer = p.mu * (psi_integral(tau) - psi_integral(tau_end));
        let evader = p.eps * p.eps * (psi_integral(tau / p.eps) - psi_integral(tau_end / p.eps));
        HorizonGains {
            tau_end,
            pursuer,
            evader,
        }
    }

    /// ZEM after holding normalized commands `u`, `v` for horizon `h`.
    pub fn propagate(&self, point: GamePoint, h: f64, u: f64, v: f64) -> GamePoint {
        let g = self.horizon_gains(point.tau, h);
        GamePoint::new(g.propagate(point.z_bar, u, v), g.tau_end)
    }

    /// Small-angle bridge from the polar estimate to the game plane, in the
    /// frame normal to the current line of sight.
    pub fn zem_from_polar(
        &self,
        target: &TargetState,
        own: &OwnState,
        speeds: &Speeds,
    ) -> Result<GamePoint> {
        let k = target.kinematics(own, speeds);
        if !(k.range_rate < 0.0) || !(target.rho > 0.0) {
            return Err(Error::EngagementOver {
                range_rate: k.range_rate,
            });
        }
        let t_go = -target.rho / k.range_rate;
        let a_m_perp = own.a_m * k.delta_m.cos();
        let a_t_perp = target.a_t * k.delta_t.cos();
        let zem = zem_dimensional_unchecked(0.0, k.los_rate_numerator, a_m_perp, a_t_perp, t_go, &self.params);
        Ok(GamePoint::new(
            zem / self.params.length_scale(),
            t_go / self.params.tau_m,
        ))
    }
}

/// `Γ(τ) = μ·ψ(τ) − ε·ψ(τ/ε)`.
pub fn gamma(tau: f64, params: &GameParams) -> Result<f64> {
    if tau < 0.0 || tau.is_nan() {
        return Err(domain("normalized time-to-go", tau));
    }
    Ok(gamma_unchecked(tau, params))
}

#[inline]
fn gamma_unchecked(tau: f64, p: &GameParams) -> f64 {
    p.mu * psi_unchecked(tau) - p.eps * psi_unchecked(tau / p.eps)
}

/// `∫₀^τ Γ = μ·Ψ(τ) − ε²·Ψ(τ/ε)` where `Ψ = ∫ψ`.
#[inline]
pub fn gamma_integral(tau: f64, p: &GameParams) -> f64 {
    p.mu * psi_integral(tau) - p.eps * p.eps * psi_integral(tau / p.eps)
}

/// Largest root of `Γ` on `[0, τ_max]`; zero when `Γ > 0` on the whole
/// positive axis.
pub fn tau_s(params: &GameParams) -> f64 {
    find_tau_s(params)
}

fn find_tau_s(p: &GameParams) -> f64 {
    // Γ(τ) ~ (μ − 1)τ + (ε − μ) for large τ, so every root lies below
    // (μ − ε)/(μ − 1) + a margin.
    let asymptotic = ((p.mu - p.eps) / (p.mu - 1.0)).max(0.0) + 1.0;
    let mut tau_max = 5.0 * p.eps.max(1.0) * NOMINAL_TAU0.max(asymptotic);
    while gamma_unchecked(tau_max, p) <= 0.0 {
        tau_max *= 2.0;
    }
    const STEPS: usize = 20_000;
    let dtau = tau_max / STEPS as f64;
    let mut last_nonpositive = None;
    for i in 1..=STEPS {
        let tau = i as f64 * dtau;
        if gamma_unchecked(tau, p) <= 0.0 {
            last_nonpositive = Some(tau);
        }
    }
    let Some(mut lo) = last_nonpositive else {
        return 0.0;
    };
    let mut hi = lo + dtau;
    // Γ(lo) ≤ 0 < Γ(hi)
    loop {
        let mid = 0.5 * (lo + hi);
        let g = gamma_unchecked(mid, p);
        if g.abs() <= ROOT_TOL || hi - lo <= f64::EPSILON * hi {
            return mid;
        }
        if g <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Zero-effort miss in meters of the linear model.
///
/// `Z = ξ + ξ̇·t_go − a_M⊥·τ_M²·ψ(t_go/τ_M) + a_T⊥·τ_T²·ψ(t_go/τ_T)`
pub fn zem_dimensional(
    xi: f64,
    xi_dot: f64,
    a_m_perp: f64,
    a_t_perp: f64,
    t_go: f64,
    params: &GameParams,
) -> Result<f64> {
    if t_go < 0.0 || t_go.is_nan() {
        return Err(domain("time-to-go", t_go));
    }
    Ok(zem_dimensional_unchecked(xi, xi_dot, a_m_perp, a_t_perp, t_go, params))
}

#[inline]
fn zem_dimensional_unchecked(
    xi: f64,
    xi_dot: f64,
    a_m_perp: f64,
    a_t_perp: f64,
    t_go: f64,
    p: &GameParams,
) -> f64 {
    let tau_m = p.tau_m;
    let tau_t = p.tau_t();
    xi + xi_dot * t_go - a_m_perp * tau_m * tau_m * psi_unchecked(t_go / tau_m)
        + a_t_perp * tau_t * tau_t * psi_unchecked(t_go / tau_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scenario() -> GameSpace {
        GameSpace::new(GameParams::new(2.25, 1.0, 0.2, 20.0 * 9.80665, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn psi_anchor_values() {
        assert_eq!(psi(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(psi(1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(psi(50.0).unwrap(), 49.0, epsilon = 1e-9);
        assert!(matches!(psi(-1e-3), Err(Error::Domain { .. })));
    }

    #[test]
    fn psi_series_and_closed_form_agree_at_cutoff() {
        let x = SERIES_CUTOFF * (1.0 - 1e-15);
        assert_abs_diff_eq!(psi_unchecked(x), psi_unchecked(SERIES_CUTOFF), epsilon = 1e-16);
        assert_abs_diff_eq!(psi_integral(x), psi_integral(SERIES_CUTOFF), epsilon = 1e-16);
    }

    #[test]
    fn gamma_examples() {
        let g = scenario();
        assert_eq!(g.gamma(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(g.gamma(1.0).unwrap(), 1.25 * (-1.0f64).exp(), epsilon = 1e-14);
        for i in 1..=2000 {
            assert!(g.gamma(i as f64 * 0.01).unwrap() > 0.0);
        }
    }

    #[test]
    fn tau_s_is_zero_for_htk_game() {
        assert_eq!(scenario().tau_s(), 0.0);
    }

    #[test]
    fn tau_s_positive_when_agility_ratio_small() {
        let p = GameParams::new(1.2, 0.5, 0.2, 1.0, 1.0).unwrap();
        let ts = tau_s(&p);
        assert!(ts > 0.0);
        assert!(gamma(ts, &p).unwrap().abs() <= 1e-10);
        assert!(gamma(ts - 1e-3, &p).unwrap() < 0.0);
        assert!(gamma(ts + 1e-6, &p).unwrap() > 0.0);
    }

    #[test]
    fn boundary_examples() {
        let g = scenario();
        assert_eq!(g.singular_boundary(g.tau_s()).unwrap(), 0.0);
        let expected = 1.25 * ((1.0 - (-2.0f64).exp()) + 2.0 - 2.0);
        assert_abs_diff_eq!(g.singular_boundary(2.0).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 1.080_8, epsilon = 1e-4);

        let p = GameParams::new(1.2, 0.5, 0.2, 1.0, 1.0).unwrap();
        let gs = GameSpace::new(p).unwrap();
        assert!(gs.singular_boundary(gs.tau_s() * 0.5).is_err());
    }

    #[test]
    fn classify_examples() {
        let p = GameParams::new(1.2, 0.5, 0.2, 1.0, 1.0).unwrap();
        let gs = GameSpace::new(p).unwrap();
        assert_eq!(gs.classify(GamePoint::new(0.0, gs.tau_s() * 0.5)), Region::UpperRegular);

        let g = scenario();
        let zs = g.boundary_or_zero(3.0);
        assert_eq!(g.classify(GamePoint::new(zs / 2.0, 3.0)), Region::Singular);
        assert_eq!(g.classify(GamePoint::new(-2.0 * zs, 3.0)), Region::LowerRegular);
        assert_eq!(g.classify(GamePoint::new(2.0 * zs, 3.0)), Region::UpperRegular);
        // τ_s = 0: the apex itself is regular
        assert_eq!(g.classify(GamePoint::new(0.0, 0.0)), Region::UpperRegular);
    }

    #[test]
    fn zem_trivial_examples() {
        let p = *scenario().params();
        assert_eq!(zem_dimensional(0.0, 0.0, 0.0, 0.0, 1.7, &p).unwrap(), 0.0);
        assert_eq!(zem_dimensional(10.0, 0.0, 0.0, 0.0, 2.0, &p).unwrap(), 10.0);
        assert!(zem_dimensional(0.0, 0.0, 0.0, 0.0, -0.1, &p).is_err());
    }

    #[test]
    fn miss_value_examples() {
        let g = scenario();
        assert_eq!(g.miss_value(GamePoint::new(0.1, 3.0)), 0.0);
        let scale = 20.0 * 9.80665 * 0.04;
        let expected = scale * (2.0 - 1.25 * ((1.0 - (-1.0f64).exp()) + 0.5 - 1.0));
        assert_abs_diff_eq!(g.miss_value(GamePoint::new(2.0, 1.0)), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 14.395, epsilon = 1e-3);

        let p = GameParams::new(1.2, 0.5, 0.2, 1.0, 1.0).unwrap();
        let gs = GameSpace::new(p).unwrap();
        let a = gs.miss_value(GamePoint::new(0.0, gs.tau_s() + 2.0));
        let zs = gs.boundary_or_zero(gs.tau_s() + 5.0);
        let b = gs.miss_value(GamePoint::new(0.3 * zs, gs.tau_s() + 5.0));
        assert!(a > 0.0);
        assert_eq!(a, b);
        // continuity across the boundary
        let edge = gs.miss_value(GamePoint::new(zs * (1.0 + 1e-12), gs.tau_s() + 5.0));
        assert_abs_diff_eq!(edge, a, epsilon = 1e-9);
    }

    #[test]
    fn command_examples() {
        let g = GameSpace::new(GameParams { k_lin: 0.5, ..*scenario().params() }).unwrap();
        let tau = 4.0;
        let zs = g.boundary_or_zero(tau);
        assert_eq!(g.command(GamePoint::new(2.0 * zs, tau)), 1.0);
        assert_eq!(g.command(GamePoint::new(0.0, tau)), 0.0);
        assert_abs_diff_eq!(g.command(GamePoint::new(0.25 * zs, tau)), 0.5, epsilon = 1e-14);
        assert_eq!(g.command(GamePoint::new(0.0, 0.0)), 0.0);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(GameParams::new(1.0, 1.0, 0.2, 1.0, 1.0).is_err());
        assert!(GameParams::new(2.0, 0.0, 0.2, 1.0, 1.0).is_err());
        assert!(GameParams::new(2.0, 1.0, 0.2, 1.0, 0.0).is_err());
        assert!(GameParams::new(2.0, 1.0, 0.2, 1.0, 1.5).is_err());
    }
}
