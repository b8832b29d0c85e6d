//! Interacting multiple model particle filter.
//!
//! The cloud keeps a fixed bank of `S` particles per maneuver mode, stored
//! mode-major (`[r·S, (r+1)·S)` is mode `r`). Mode probabilities live in the
//! weights. Each prediction first mixes the banks through the transition
//! matrix (every mode bank redraws its `S` ancestors from the whole cloud with
//! probabilities `∝ Π[q][r]·w`), then propagates every particle through the
//! polar equations of motion under its mode's bang command.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{polar_rates, rk4, wrap_angle, OwnState, Plant, TargetState, Vec6};
use crate::error::{Error, Result};

/// Row-stochastic mode transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tpm {
    rows: Vec<Vec<f64>>,
}

impl Tpm {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidParameter("transition matrix is empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != r {
                return Err(Error::InvalidParameter(format!("transition matrix row {i} is not length {r}")));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidParameter(format!("transition matrix row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("transition matrix row {i} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    /// Symmetric two-mode matrix with switch probability `p` per step.
    pub fn symmetric(p_switch: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - p_switch, p_switch], vec![p_switch, 1.0 - p_switch]])
    }

    pub fn identity(modes: usize) -> Self {
        let rows = (0..modes)
            .map(|i| (0..modes).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn modes(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn p(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: TargetState,
    pub mode: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    particles: Vec<Particle>,
    per_mode: usize,
    modes: usize,
    /// Time index `k`.
    pub step: usize,
}

impl ParticleCloud {
    /// Builds a cloud from mode-major particles; weights are renormalized.
    pub fn from_particles(particles: Vec<Particle>, modes: usize) -> Result<Self> {
        if modes == 0 || particles.is_empty() || particles.len() % modes != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} particles cannot be split evenly over {modes} modes",
                particles.len()
            )));
        }
        let per_mode = particles.len() / modes;
        for (i, p) in particles.iter().enumerate() {
            if p.mode != i / per_mode {
                return Err(Error::InvalidParameter(format!("particle {i} is not stored in its mode bank")));
            }
            if !(p.weight >= 0.0) {
                return Err(Error::InvalidParameter(format!("particle {i} has weight {}", p.weight)));
            }
        }
        let mut cloud = Self {
            particles,
            per_mode,
            modes,
            step: 0,
        };
        cloud.normalize();
        Ok(cloud)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn per_mode(&self) -> usize {
        self.per_mode
    }

    /// Per-mode weight sums.
    pub fn mode_probabilities(&self) -> Vec<f64> {
        let mut probs = vec![0.0; self.modes];
        for p in &self.particles {
            probs[p.mode] += p.weight;
        }
        probs
    }

    /// `1 / Σ w²`.
    pub fn effective_sample_size(&self) -> f64 {
        let s: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        1.0 / s
    }

    pub fn weighted_mean(&self) -> TargetState {
        let mut m = TargetState::default();
        for p in &self.particles {
            m.rho += p.weight * p.state.rho;
            m.lambda += p.weight * p.state.lambda;
            m.gamma_t += p.weight * p.state.gamma_t;
            m.a_t += p.weight * p.state.a_t;
        }
        m
    }

    fn normalize(&mut self) {
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        if total > 0.0 && total.is_finite() {
            for p in &mut self.particles {
                p.weight /= total;
            }
        } else {
            log::warn!("particle weights degenerate (sum {total}); resetting to uniform");
            let w = 1.0 / self.particles.len() as f64;
            for p in &mut self.particles {
                p.weight = w;
            }
        }
    }
}

/// Spread that scales the roughening noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterReference {
    /// Square roots of the initial covariance diagonal.
    Prior,
    /// Per-mode standard deviation of the interacted particles.
    #[default]
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub particles_per_mode: usize,
    /// Square roots of the initial covariance diagonal `[ρ, λ, γ_T, a_T]`.
    pub prior_std: [f64; 4],
    /// Roughening scale `c`; per-step jitter is `c·σ·N_p^(−1/4)`.
    pub jitter_scale: f64,
    /// Where `σ` in the roughening comes from.
    #[serde(default)]
    pub jitter_reference: JitterReference,
    /// Resample when `N_eff < ess_threshold·N_p`.
    pub ess_threshold: f64,
    /// Bearing noise assumed by the likelihood, rad.
    pub sigma_nu: f64,
    /// RK4 steps per prediction.
    pub substeps: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            particles_per_mode: 1000,
            prior_std: [50.0, PI / 180.0, 3.0 * PI / 180.0, 10.0],
            jitter_scale: 0.5,
            jitter_reference: JitterReference::Posterior,
            ess_threshold: 0.5,
            sigma_nu: 0.5e-3,
            substeps: 1,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles_per_mode == 0 {
            return Err(Error::InvalidParameter("particles_per_mode must be ≥ 1".into()));
        }
        if self.prior_std.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter(
                "initial covariance must be positive semi-definite".into(),
            ));
        }
        if !(self.jitter_scale >= 0.0 && self.sigma_nu > 0.0 && self.substeps > 0) {
            return Err(Error::InvalidParameter(
                "jitter_scale ≥ 0, sigma_nu > 0 and substeps ≥ 1 required".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(Error::InvalidParameter("ess_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Unweighted standard deviation of each state component.
fn bank_std(particles: &[Particle]) -> [f64; 4] {
    let n = particles.len() as f64;
    let comps = |p: &Particle| [p.state.rho, p.state.lambda, p.state.gamma_t, p.state.a_t];
    let mut mean = [0.0; 4];
    for p in particles {
        for (m, x) in mean.iter_mut().zip(comps(p)) {
            *m += x / n;
        }
    }
    let mut var = [0.0; 4];
    for p in particles {
        for ((v, m), x) in var.iter_mut().zip(mean).zip(comps(p)) {
            *v += (x - m) * (x - m) / n;
        }
    }
    var.map(f64::sqrt)
}

/// Indices drawn by systematic resampling of `count` offspring from
/// unnormalized `weights` with offset `u ∈ [0, 1)`.
pub fn systematic_indices(weights: &[f64], count: usize, u: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(count);
    if count == 0 || !(total > 0.0) {
        return out;
    }
    let step = total / count as f64;
    let mut j = 0;
    let mut cum = weights[0];
    for i in 0..count {
        let pos = (i as f64 + u) * step;
        while pos >= cum && j + 1 < weights.len() {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// Propagates a target hypothesis over `dt` with the interceptor's own
/// motion integrated alongside.
pub fn propagate_target(
    state: &TargetState,
    own: &OwnState,
    u_m: f64,
    u_t: f64,
    dt: f64,
    substeps: usize,
    plant: &Plant,
) -> Result<TargetState> {
    let mut x: Vec6 = [state.rho, state.lambda, state.gamma_t, state.a_t, own.gamma_m, own.a_m];
    if dt > 0.0 {
        let h = dt / substeps.max(1) as f64;
        for _ in 0..substeps.max(1) {
            x = rk4(&x, h, |s| polar_rates(s, u_m, u_t, plant))?;
        }
    }
    if !(x[0] > 0.0) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::RangeCollapsed { rho: x[0] });
    }
    Ok(TargetState {
        rho: x[0],
        lambda: x[1],
        gamma_t: x[2],
        a_t: x[3],
    })
}

/// The filter: configuration, mode model and plant.
#[derive(Debug, Clone)]
pub struct Immpf {
    pub config: FilterConfig,
    pub tpm: Tpm,
    /// Target acceleration command of each mode, m/s².
    pub mode_commands: Vec<f64>,
    pub plant: Plant,
}

impl Immpf {
    pub fn new(config: FilterConfig, tpm: Tpm, mode_commands: Vec<f64>, plant: Plant) -> Result<Self> {
        config.validate()?;
        if mode_commands.len() != tpm.modes() {
            return Err(Error::InvalidParameter(format!(
                "{} mode commands for a {}-mode transition matrix",
                mode_commands.len(),
                tpm.modes()
            )));
        }
        Ok(Self {
            config,
            tpm,
            mode_commands,
            plant,
        })
    }

    /// Two-mode bang-bang target: mode 0 commands `+a_T^max`, mode 1 `−a_T^max`.
    pub fn bang_bang(config: FilterConfig, tpm: Tpm, a_t_max: f64, plant: Plant) -> Result<Self> {
        Self::new(config, tpm, vec![a_t_max, -a_t_max], plant)
    }

    pub fn modes(&self) -> usize {
        self.mode_commands.len()
    }

    fn jitter_factor(&self) -> f64 {
        let n = (self.config.particles_per_mode * self.modes()) as f64;
        self.config.jitter_scale * n.powf(-0.25)
    }

    /// Roughening standard deviations of each mode bank.
    fn jitter_std(&self, cloud: &ParticleCloud) -> Vec<[f64; 4]> {
        let f = self.jitter_factor();
        match self.config.jitter_reference {
            JitterReference::Prior => vec![self.config.prior_std.map(|s| s * f); cloud.modes],
            JitterReference::Posterior => (0..cloud.modes)
                .map(|r| bank_std(&cloud.particles[r * cloud.per_mode..(r + 1) * cloud.per_mode]).map(|s| s * f))
                .collect(),
        }
    }

    /// Draws `R·S` particles from `N(truth, diag(prior_std²))` with equal
    /// weights and equal mode probabilities.
    pub fn init_cloud<R: Rng + ?Sized>(&self, truth: &TargetState, rng: &mut R) -> Result<ParticleCloud> {
        let s = self.config.particles_per_mode;
        let r = self.modes();
        let sd = self.config.prior_std;
        if sd.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("initial covariance is not positive semi-definite".into()));
        }
        let n = r * s;
        let w = 1.0 / n as f64;
        let mut particles = Vec::with_capacity(n);
        for mode in 0..r {
            for _ in 0..s {
                let mut draw = || -> f64 { StandardNormal.sample(rng) };
                let mut rho = truth.rho + sd[0] * draw();
                while !(rho > 0.0) {
                    rho = truth.rho + sd[0] * draw();
                }
                let state = TargetState {
                    rho,
                    lambda: truth.lambda + sd[1] * draw(),
                    gamma_t: truth.gamma_t + sd[2] * draw(),
                    a_t: truth.a_t + sd[3] * draw(),
                };
                particles.push(Particle { state, mode, weight: w });
            }
        }
        Ok(ParticleCloud {
            particles,
            per_mode: s,
            modes: r,
            step: 0,
        })
    }

    /// Mode interaction, propagation over `dt` under the held interceptor
    /// command `u_m`, and roughening.
    pub fn predict<R: Rng + ?Sized>(
        &self,
        cloud: &ParticleCloud,
        own: &OwnState,
        u_m: f64,
        dt: f64,
        rng: &mut R,
    ) -> Result<ParticleCloud> {
        let mut next = self.interact(cloud, rng);
        let jitter = self.jitter_std(&next);
        let roughen = jitter.iter().flatten().any(|s| *s > 0.0);
        let mut invalid = Vec::new();
        for (i, p) in next.particles.iter_mut().enumerate() {
            let u_t = self.mode_commands[p.mode];
            match propagate_target(&p.state, own, u_m, u_t, dt, self.config.substeps, &self.plant) {
                Ok(mut s) => {
                    if roughen {
                        let jitter = &jitter[p.mode];
                        let mut draw = || -> f64 { StandardNormal.sample(rng) };
                        s.rho += jitter[0] * draw();
                        s.lambda += jitter[1] * draw();
                        s.gamma_t += jitter[2] * draw();
                        s.a_t += jitter[3] * draw();
                    }
                    if s.rho > 0.0 {
                        p.state = s;
                    } else {
                        invalid.push(i);
                    }
                }
                Err(_) => invalid.push(i),
            }
        }
        if !invalid.is_empty() {
            repair_invalid(&mut next, &invalid, rng)?;
        }
        next.step = cloud.step + 1;
        Ok(next)
    }

    /// Redraws each mode bank from the transition-weighted mixture.
    fn interact<R: Rng + ?Sized>(&self, cloud: &ParticleCloud, rng: &mut R) -> ParticleCloud {
        let s = cloud.per_mode;
        let mut particles = Vec::with_capacity(cloud.len());
        let mut mix = vec![0.0; cloud.len()];
        for r in 0..cloud.modes {
            for (m, p) in mix.iter_mut().zip(&cloud.particles) {
                *m = self.tpm.p(p.mode, r) * p.weight;
            }
            let c_r: f64 = mix.iter().sum();
            if c_r > 0.0 {
                let u: f64 = rng.random();
                let w = c_r / s as f64;
                for j in systematic_indices(&mix, s, u) {
                    particles.push(Particle {
                        state: cloud.particles[j].state,
                        mode: r,
                        weight: w,
                    });
                }
            } else {
                for p in &cloud.particles[r * s..(r + 1) * s] {
                    particles.push(Particle { weight: 0.0, ..*p });
                }
            }
        }
        let mut out = ParticleCloud {
            particles,
            per_mode: s,
            modes: cloud.modes,
            step: cloud.step,
        };
        out.normalize();
        out
    }

    /// Multiplies each weight by the Gaussian bearing likelihood and
    /// renormalizes. Falls back to uniform weights when every likelihood
    /// underflows.
    pub fn update(&self, cloud: &mut ParticleCloud, y: f64, gamma_m: f64) {
        let var2 = 2.0 * self.config.sigma_nu * self.config.sigma_nu;
        let log_lik: Vec<f64> = cloud
            .particles
            .iter()
            .map(|p| {
                let r = wrap_angle(y - (gamma_m - p.state.lambda));
                -r * r / var2
            })
            .collect();
        let max = log_lik
            .iter()
            .zip(&cloud.particles)
            .filter(|(_, p)| p.weight > 0.0)
            .map(|(l, _)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        for (p, l) in cloud.particles.iter_mut().zip(&log_lik) {
            p.weight *= (l - max).exp();
        }
        cloud.normalize();
    }

    /// Systematic resampling within each mode bank when `N_eff` falls below
    /// the threshold; mode probabilities are preserved. Returns whether a
    /// resample happened.
    pub fn resample_if_needed<R: Rng + ?Sized>(&self, cloud: &mut ParticleCloud, rng: &mut R) -> bool {
        resample_if_needed(cloud, self.config.ess_threshold, rng)
    }

    /// Measurement update followed by conditional resampling.
    pub fn correct<R: Rng + ?Sized>(&self, cloud: &mut ParticleCloud, y: f64, gamma_m: f64, rng: &mut R) {
        self.update(cloud, y, gamma_m);
        self.resample_if_needed(cloud, rng);
    }
}

/// See [`Immpf::resample_if_needed`].
pub fn resample_if_needed<R: Rng + ?Sized>(cloud: &mut ParticleCloud, ess_threshold: f64, rng: &mut R) -> bool {
    let n = cloud.len() as f64;
    if cloud.effective_sample_size() >= ess_threshold * n {
        return false;
    }
    let s = cloud.per_mode;
    let all_weights: Vec<f64> = cloud.particles.iter().map(|p| p.weight).collect();
    let old = cloud.particles.clone();
    for r in 0..cloud.modes {
        let bank = &old[r * s..(r + 1) * s];
        let weights: Vec<f64> = bank.iter().map(|p| p.weight).collect();
        let mass: f64 = weights.iter().sum();
        let u: f64 = rng.random();
        if mass > 0.0 {
            let w = mass / s as f64;
            for (slot, j) in systematic_indices(&weights, s, u).into_iter().enumerate() {
                cloud.particles[r * s + slot] = Particle {
                    state: bank[j].state,
                    mode: r,
                    weight: w,
                };
            }
        } else {
            // Dead bank: refill its states from the whole posterior.
            for (slot, j) in systematic_indices(&all_weights, s, u).into_iter().enumerate() {
                cloud.particles[r * s + slot] = Particle {
                    state: old[j].state,
                    mode: r,
                    weight: 0.0,
                };
            }
        }
    }
    true
}

/// Replaces each invalid slot by a uniformly chosen valid particle of the
/// same mode (any mode if its bank has none); the slot keeps its weight.
fn repair_invalid<R: Rng + ?Sized>(cloud: &mut ParticleCloud, invalid: &[usize], rng: &mut R) -> Result<()> {
    let s = cloud.per_mode;
    let mut is_invalid = vec![false; cloud.len()];
    for &i in invalid {
        is_invalid[i] = true;
    }
    let valid_all: Vec<usize> = (0..cloud.len()).filter(|i| !is_invalid[*i]).collect();
    if valid_all.is_empty() {
        return Err(Error::RangeCollapsed { rho: 0.0 });
    }
    for &i in invalid {
        let r = i / s;
        let bank: Vec<usize> = (r * s..(r + 1) * s).filter(|j| !is_invalid[*j]).collect();
        let pool = if bank.is_empty() { &valid_all } else { &bank };
        let j = pool[rng.random_range(0..pool.len())];
        cloud.particles[i].state = cloud.particles[j].state;
    }
    Ok(())
}
