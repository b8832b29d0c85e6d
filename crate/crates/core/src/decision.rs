//! Bayesian decision over game-plane hypotheses.
//!
//! With `R` target modes there are `R + 2` hypotheses, indexed from zero
//! here: `0` is the upper regular region, `1..=R` the singular region with
//! the target in mode `k − 1`, and `R + 1` the lower regular region. The
//! engine computes per-hypothesis priors, likelihoods and costs, forms the
//! unnormalized additional risks
//!
//! ```text
//! I_i = Σ_{j≠i} P_j · P(Y|H_j) · (C_ij − C_jj)
//! ```
//!
//! and turns the minimizing hypothesis into a normalized interceptor
//! command.

use serde::{Deserialize, Serialize};

use crate::dynamics::{OwnState, Speeds};
use crate::error::{Error, Result};
use crate::game_space::{sign0, GamePoint, GameSpace, Region};
use crate::immpf::{propagate_target, systematic_indices, Immpf, ParticleCloud, Tpm};
use crate::lethality::WarheadModel;

/// Risks at or below this magnitude count as zero.
pub const ZERO_RISK_TOL: f64 = 1e-15;

/// Terminal cost `J` of a miss distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFunctional {
    /// `J = |M|`, meters.
    MissDistance,
    /// `J = P_m(M)`.
    MissProbability { warhead: WarheadModel },
}

impl CostFunctional {
    pub fn validate(&self) -> Result<()> {
        match self {
            CostFunctional::MissDistance => Ok(()),
            CostFunctional::MissProbability { warhead } => warhead.validate(),
        }
    }

    #[inline]
    pub fn cost(&self, miss: f64) -> f64 {
        match self {
            CostFunctional::MissDistance => miss.abs(),
            CostFunctional::MissProbability { warhead } => warhead.miss_prob_unchecked(miss.abs()),
        }
    }
}

/// Particle cloud mapped onto the game plane.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GameCloud {
    pub points: Vec<GamePoint>,
    pub modes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl GameCloud {
    pub fn new(points: Vec<GamePoint>, modes: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != modes.len() || points.len() != weights.len() {
            return Err(Error::InvalidParameter("game cloud columns differ in length".into()));
        }
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("game cloud weights must be finite and non-negative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidParameter("game cloud has no weight".into()));
        }
        if points.iter().any(|p| !(p.tau >= 0.0) || !p.z_bar.is_finite()) {
            return Err(Error::InvalidParameter("game points need finite z̄ and τ ≥ 0".into()));
        }
        Ok(Self { points, modes, weights })
    }

    /// Maps every particle through the small-angle ZEM bridge. Particles
    /// that are no longer closing sit at `τ = 0` with their current range
    /// as the miss, signed by the line-of-sight rate.
    pub fn from_particles(cloud: &ParticleCloud, own: &OwnState, speeds: &Speeds, game: &GameSpace) -> Self {
        let n = cloud.len();
        let mut out = Self {
            points: Vec::with_capacity(n),
            modes: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
        };
        let scale = game.params().length_scale();
        for p in cloud.particles() {
            let point = game.zem_from_polar(&p.state, own, speeds).unwrap_or_else(|_| {
                let k = p.state.kinematics(own, speeds);
                GamePoint::new(sign0(k.los_rate_numerator) * p.state.rho.max(0.0) / scale, 0.0)
            });
            out.points.push(point);
            out.modes.push(p.mode);
            out.weights.push(p.weight);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted mean of `z̄` and `τ`.
    pub fn mean_point(&self) -> GamePoint {
        let total = self.total_weight();
        let (mut z, mut t) = (0.0, 0.0);
        for (p, w) in self.points.iter().zip(&self.weights) {
            z += w * p.z_bar;
            t += w * p.tau;
        }
        GamePoint::new(z / total, t / total)
    }

    /// Highest-weight point (first on ties).
    pub fn map_point(&self) -> GamePoint {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        self.points[best]
    }
}

/// Assignment of cloud members to hypotheses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisPartition {
    pub assignment: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl HypothesisPartition {
    pub fn hypotheses(&self) -> usize {
        self.members.len()
    }

    /// Members of each hypothesis.
    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

pub fn hypothesis_of(region: Region, mode: usize, modes: usize) -> usize {
    match region {
        Region::UpperRegular => 0,
        Region::Singular => 1 + mode,
        Region::LowerRegular => modes + 1,
    }
}

/// Human-readable hypothesis name, one-based like the usual `H₁…H_{R+2}`.
pub fn hypothesis_label(index: usize, modes: usize) -> String {
    if index == 0 {
        "H1 upper regular".to_string()
    } else if index == modes + 1 {
        format!("H{} lower regular", modes + 2)
    } else {
        format!("H{} singular, mode {}", index + 1, index)
    }
}

pub fn partition(cloud: &GameCloud, game: &GameSpace, modes: usize) -> HypothesisPartition {
    let mut members = vec![Vec::new(); modes + 2];
    let assignment = cloud
        .points
        .iter()
        .zip(&cloud.modes)
        .enumerate()
        .map(|(i, (p, &mode))| {
            let h = hypothesis_of(game.classify(*p), mode.min(modes - 1), modes);
            members[h].push(i);
            h
        })
        .collect();
    HypothesisPartition { assignment, members }
}

/// Normalized weight sums per hypothesis.
pub fn likelihoods(partition: &HypothesisPartition, cloud: &GameCloud) -> Vec<f64> {
    let total = cloud.total_weight();
    partition
        .members
        .iter()
        .map(|m| m.iter().map(|&i| cloud.weights[i]).sum::<f64>() / total)
        .collect()
}

/// `Σ_r μ_r (1 − Π_rr)`.
pub fn switch_probability(mode_probabilities: &[f64], tpm: &Tpm) -> f64 {
    mode_probabilities
        .iter()
        .enumerate()
        .map(|(r, mu)| mu * (1.0 - tpm.p(r, r)))
        .sum()
}

/// `I_i = Σ_{j≠i} P_j L_j (C_ij − C_jj)`.
pub fn risks(priors: &[f64], likelihoods: &[f64], costs: &[Vec<f64>]) -> Vec<f64> {
    let m = priors.len();
    (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i)
                .map(|j| priors[j] * likelihoods[j] * (costs[i][j] - costs[j][j]))
                .sum()
        })
        .collect()
}

/// Posterior at the previous sensor instant and the command then held.
#[derive(Debug, Clone, Copy)]
pub struct PreviousStep<'a> {
    pub cloud: &'a ParticleCloud,
    pub own: OwnState,
    pub u_m: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    /// Prediction horizon in normalized time.
    pub horizon: f64,
    /// Normalized target command `v̄` of each mode.
    pub mode_signs: Vec<f64>,
    pub functional: CostFunctional,
    /// Stratified representatives per pursuer-command hypothesis.
    pub subsample: Option<usize>,
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.mode_signs.is_empty() || self.mode_signs.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidParameter("mode commands must lie in [−1, 1]".into()));
        }
        if self.subsample == Some(0) {
            return Err(Error::InvalidParameter("subsample must be ≥ 1".into()));
        }
        self.functional.validate()
    }

    pub fn modes(&self) -> usize {
        self.mode_signs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub priors: Vec<f64>,
    pub likelihoods: Vec<f64>,
    /// `costs[i][j] = C_ij`.
    pub costs: Vec<Vec<f64>>,
    pub risks: Vec<f64>,
    pub chosen: usize,
    /// Normalized command `ū ∈ [−1, 1]`.
    pub command: f64,
    /// Every risk vanished and the deterministic law was used.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct DecisionEngine {
    pub game: GameSpace,
    pub config: DecisionConfig,
}

/// Per-particle quantities shared by every cost entry.
struct Prepared {
    /// Deterministic-law command of each particle.
    command: Vec<f64>,
    /// Hypothesis-conditioned target command of each particle.
    evader: Vec<f64>,
}

impl DecisionEngine {
    pub fn new(game: GameSpace, config: DecisionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { game, config })
    }

    pub fn modes(&self) -> usize {
        self.config.modes()
    }

    pub fn partition(&self, cloud: &GameCloud) -> HypothesisPartition {
        partition(cloud, &self.game, self.modes())
    }

    /// Hypothesis masses of the previous posterior propagated one interval
    /// under every mode it may switch into, weighted by the transition
    /// matrix, and re-mapped with the current interceptor state.
    pub fn priors(&self, previous: &PreviousStep<'_>, filter: &Immpf, own_now: &OwnState) -> Result<Vec<f64>> {
        let r_modes = self.modes();
        let speeds = filter.plant.speeds;
        let scale = self.game.params().length_scale();
        let mut mass = vec![0.0; r_modes + 2];
        for p in previous.cloud.particles() {
            if p.weight == 0.0 {
                continue;
            }
            for q in 0..r_modes {
                let pq = filter.tpm.p(p.mode, q);
                if pq == 0.0 {
                    continue;
                }
                let Ok(state) = propagate_target(
                    &p.state,
                    &previous.own,
                    previous.u_m,
                    filter.mode_commands[q],
                    previous.dt,
                    filter.config.substeps,
                    &filter.plant,
                ) else {
                    continue;
                };
                let point = self.game.zem_from_polar(&state, own_now, &speeds).unwrap_or_else(|_| {
                    let k = state.kinematics(own_now, &speeds);
                    GamePoint::new(sign0(k.los_rate_numerator) * state.rho / scale, 0.0)
                });
                mass[hypothesis_of(self.game.classify(point), q, r_modes)] += p.weight * pq;
            }
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::MissingPreviousCloud { step: previous.cloud.step });
        }
        Ok(mass.into_iter().map(|m| m / total).collect())
    }

    fn prepare(&self, cloud: &GameCloud, partition: &HypothesisPartition) -> Prepared {
        let r = self.modes();
        let command = cloud.points.iter().map(|p| self.game.command(*p)).collect();
        let evader = partition
            .assignment
            .iter()
            .zip(&cloud.modes)
            .map(|(&h, &mode)| {
                if h == 0 {
                    1.0
                } else if h == r + 1 {
                    -1.0
                } else {
                    self.config.mode_signs[mode]
                }
            })
            .collect();
        Prepared { command, evader }
    }

    /// Pursuer commands of an occupied hypothesis with their normalized
    /// weights, merged when equal.
    fn pursuer_commands(&self, members: &[usize], cloud: &GameCloud, prep: &Prepared) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = match self.config.subsample {
            Some(k) if members.len() > k => {
                let weights: Vec<f64> = members.iter().map(|&i| cloud.weights[i]).collect();
                let w = 1.0 / k as f64;
                systematic_indices(&weights, k, 0.5)
                    .into_iter()
                    .map(|s| (prep.command[members[s]], w))
                    .collect()
            }
            _ => {
                let total: f64 = members.iter().map(|&i| cloud.weights[i]).sum();
                members
                    .iter()
                    .filter(|&&i| cloud.weights[i] > 0.0)
                    .map(|&i| (prep.command[i], cloud.weights[i] / total))
                    .collect()
            }
        };
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (c, w) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += w,
                _ => merged.push((c, w)),
            }
        }
        merged
    }

    #[inline]
    fn terminal_cost(&self, point: GamePoint) -> f64 {
        self.config.functional.cost(self.game.miss_value(point))
    }

    /// Whether every occupied particle stays in the singular region over the
    /// horizon whatever bounded command either side holds; all costs are
    /// then equal.
    fn all_costs_equal(&self, cloud: &GameCloud, partition: &HypothesisPartition, prep: &Prepared) -> bool {
        let r = self.modes();
        if partition.members[0].iter().chain(&partition.members[r + 1]).any(|&i| cloud.weights[i] > 0.0) {
            return false;
        }
        cloud.points.iter().enumerate().all(|(i, p)| {
            if cloud.weights[i] == 0.0 {
                return true;
            }
            let g = self.game.horizon_gains(p.tau, self.config.horizon);
            if g.tau_end < self.game.tau_s() {
                return false;
            }
            let base = p.z_bar + prep.evader[i] * g.evader;
            base.abs() + g.pursuer < self.game.boundary_or_zero(g.tau_end)
        })
    }

    /// Cost matrix `C[i][j]`.
    pub fn costs(&self, cloud: &GameCloud, partition: &HypothesisPartition, likelihoods: &[f64]) -> Vec<Vec<f64>> {
        let prep = self.prepare(cloud, partition);
        self.costs_prepared(cloud, partition, likelihoods, &prep)
    }

    fn costs_prepared(
        &self,
        cloud: &GameCloud,
        partition: &HypothesisPartition,
        likelihoods: &[f64],
        prep: &Prepared,
    ) -> Vec<Vec<f64>> {
        let m = partition.hypotheses();
        let r = self.modes();
        let h = self.config.horizon;
        let scale = self.game.params().length_scale();
        let mut c = vec![vec![0.0; m]; m];
        let occupied: Vec<bool> = likelihoods.iter().map(|l| *l > 0.0).collect();
        // Most propagated points end at one of these two values.
        let singular = self.game.value_terms(self.game.tau_s()).floor;
        let cost_at_zero = self.config.functional.cost(0.0);
        let cost_at_singular = self.config.functional.cost(scale * singular);
        let pursuer: Vec<Vec<(f64, f64)>> = (0..m)
            .map(|i| {
                if occupied[i] {
                    self.pursuer_commands(&partition.members[i], cloud, prep)
                } else {
                    Vec::new()
                }
            })
            .collect();
        for j in 0..m {
            if !occupied[j] {
                continue;
            }
            let members = &partition.members[j];
            let total: f64 = members.iter().map(|&i| cloud.weights[i]).sum();
            let mut row = vec![0.0; m];
            for &jp in members {
                let wj = cloud.weights[jp] / total;
                if wj == 0.0 {
                    continue;
                }
                let point = cloud.points[jp];
                row[j] += wj * self.terminal_cost(point);
                let g = self.game.horizon_gains(point.tau, h);
                let terms = self.game.value_terms(g.tau_end);
                let base = point.z_bar + prep.evader[jp] * g.evader;
                let cost_under = |u: f64| {
                    let v = terms.value(base - u * g.pursuer);
                    if v == 0.0 {
                        cost_at_zero
                    } else if v == singular {
                        cost_at_singular
                    } else {
                        self.config.functional.cost(scale * v)
                    }
                };
                for i in (0..m).filter(|&i| i != j) {
                    let inner = if occupied[i] {
                        pursuer[i].iter().map(|&(u, w)| w * cost_under(u)).sum()
                    } else {
                        let u = if i == 0 {
                            1.0
                        } else if i == r + 1 {
                            -1.0
                        } else {
                            prep.command[jp]
                        };
                        cost_under(u)
                    };
                    row[i] += wj * inner;
                }
            }
            for i in 0..m {
                c[i][j] = row[i];
            }
        }
        c
    }

    /// Command for hypothesis `chosen`.
    fn hypothesis_command(&self, chosen: usize, cloud: &GameCloud, partition: &HypothesisPartition, prep: &Prepared) -> f64 {
        let r = self.modes();
        if chosen == 0 {
            return 1.0;
        }
        if chosen == r + 1 {
            return -1.0;
        }
        let members = &partition.members[chosen];
        let total: f64 = members.iter().map(|&i| cloud.weights[i]).sum();
        if total > 0.0 {
            members.iter().map(|&i| cloud.weights[i] * prep.command[i]).sum::<f64>() / total
        } else {
            let total = cloud.total_weight();
            cloud.weights.iter().zip(&prep.command).map(|(w, u)| w * u).sum::<f64>() / total
        }
    }

    /// Full decision. `priors` is evaluated only when some cost differs;
    /// pass `None` on the first step to use the current hypothesis masses.
    pub fn decide(
        &self,
        cloud: &GameCloud,
        priors: Option<&dyn Fn() -> Result<Vec<f64>>>,
    ) -> Result<RiskReport> {
        let partition = self.partition(cloud);
        let lik = likelihoods(&partition, cloud);
        let prep = self.prepare(cloud, &partition);
        let m = partition.hypotheses();
        if self.all_costs_equal(cloud, &partition, &prep) {
            let any = cloud
                .points
                .iter()
                .zip(&cloud.weights)
                .find(|(_, w)| **w > 0.0)
                .map(|(p, _)| *p)
                .expect("cloud has weight");
            let c = self.terminal_cost(any);
            let costs = (0..m)
                .map(|_| (0..m).map(|j| if lik[j] > 0.0 { c } else { 0.0 }).collect())
                .collect();
            return Ok(RiskReport {
                priors: lik.clone(),
                likelihoods: lik,
                costs,
                risks: vec![0.0; m],
                chosen: 0,
                command: self.game.command(cloud.mean_point()),
                fallback: true,
            });
        }
        let priors = match priors {
            Some(f) => f()?,
            None => lik.clone(),
        };
        let costs = self.costs_prepared(cloud, &partition, &lik, &prep);
        Ok(self.finish(priors, lik, costs, cloud, &partition, &prep))
    }

    /// Decision with explicit priors and no shortcuts.
    pub fn decide_with_priors(&self, cloud: &GameCloud, priors: Vec<f64>) -> RiskReport {
        let partition = self.partition(cloud);
        let lik = likelihoods(&partition, cloud);
        let prep = self.prepare(cloud, &partition);
        let costs = self.costs_prepared(cloud, &partition, &lik, &prep);
        self.finish(priors, lik, costs, cloud, &partition, &prep)
    }

    fn finish(
        &self,
        priors: Vec<f64>,
        likelihoods: Vec<f64>,
        costs: Vec<Vec<f64>>,
        cloud: &GameCloud,
        partition: &HypothesisPartition,
        prep: &Prepared,
    ) -> RiskReport {
        let risks = risks(&priors, &likelihoods, &costs);
        let fallback = risks.iter().all(|i| i.abs() <= ZERO_RISK_TOL);
        let (chosen, command) = if fallback {
            (0, self.game.command(cloud.mean_point()))
        } else {
            let best = select(&risks, &priors, &likelihoods);
            (best, self.hypothesis_command(best, cloud, partition, prep))
        };
        RiskReport {
            priors,
            likelihoods,
            costs,
            risks,
            chosen,
            command: command.clamp(-1.0, 1.0),
            fallback,
        }
    }
}

/// Minimum-risk hypothesis; ties within [`ZERO_RISK_TOL`] go to the most
/// probable one, then to the lowest index.
fn select(risks: &[f64], priors: &[f64], likelihoods: &[f64]) -> usize {
    let least = risks.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best: Option<usize> = None;
    for i in (0..risks.len()).filter(|&i| risks[i] - least <= ZERO_RISK_TOL) {
        let mass = priors[i] * likelihoods[i];
        if best.is_none_or(|b| mass > priors[b] * likelihoods[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or(0)
}
