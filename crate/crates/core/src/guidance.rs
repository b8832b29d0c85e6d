//! Guidance variants built on the DGL1 game: Regular (deterministic law on a
//! point estimate), EA (decision engine with a miss-distance cost) and KPM
//! (decision engine with a miss-probability cost).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decision::{CostFunctional, DecisionConfig, DecisionEngine, GameCloud, PreviousStep, RiskReport};
use crate::dynamics::{OwnState, ScenarioConfig};
use crate::error::{Error, Result};
use crate::game_space::{GameParams, GameSpace};
use crate::immpf::{Immpf, ParticleCloud};
use crate::lethality::WarheadModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuidanceKind {
    Regular,
    Ea,
    Kpm { warhead: WarheadModel },
}

impl GuidanceKind {
    pub fn label(&self) -> &'static str {
        match self {
            GuidanceKind::Regular => "regular",
            GuidanceKind::Ea => "ea",
            GuidanceKind::Kpm { .. } => "kpm",
        }
    }

    /// Whether the trajectory depends on the warhead.
    pub fn uses_warhead(&self) -> bool {
        matches!(self, GuidanceKind::Kpm { .. })
    }
}

impl fmt::Display for GuidanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Point estimate fed to the Regular variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    #[default]
    Mean,
    Map,
}

impl FromStr for PointEstimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "map" => Ok(Self::Map),
            other => Err(Error::InvalidParameter(format!("unknown point estimate {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceConfig {
    pub kind: GuidanceKind,
    /// Decision horizon, seconds.
    pub horizon: f64,
    /// Fraction of the singular region with a linear command.
    pub k_lin: f64,
    #[serde(default)]
    pub estimate: PointEstimate,
    /// Representatives per hypothesis in cross costs; `None` is exact.
    #[serde(default)]
    pub subsample: Option<usize>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            kind: GuidanceKind::Regular,
            horizon: 0.01,
            k_lin: 1.0,
            estimate: PointEstimate::Mean,
            subsample: None,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.k_lin > 0.0 && self.k_lin <= 1.0) {
            return Err(Error::InvalidParameter(format!("k_lin must lie in (0, 1], got {}", self.k_lin)));
        }
        if let GuidanceKind::Kpm { warhead } = &self.kind {
            warhead.validate()?;
        }
        Ok(())
    }
}

/// Game parameters of a scenario.
pub fn game_params(scenario: &ScenarioConfig, k_lin: f64) -> Result<GameParams> {
    GameParams::new(
        scenario.a_m_max / scenario.a_t_max,
        scenario.tau_t / scenario.tau_m,
        scenario.tau_m,
        scenario.a_t_max,
        k_lin,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceOutput {
    /// Interceptor command, m/s².
    pub u_m: f64,
    pub report: Option<RiskReport>,
    /// No particle is still closing.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct Guidance {
    pub config: GuidanceConfig,
    pub game: GameSpace,
    engine: Option<DecisionEngine>,
    a_m_max: f64,
}

impl Guidance {
    /// `mode_commands` are the filter's per-mode target accelerations.
    pub fn new(config: GuidanceConfig, scenario: &ScenarioConfig, mode_commands: &[f64]) -> Result<Self> {
        config.validate()?;
        let game = GameSpace::new(game_params(scenario, config.k_lin)?)?;
        let functional = match config.kind {
            GuidanceKind::Regular => None,
            GuidanceKind::Ea => Some(CostFunctional::MissDistance),
            GuidanceKind::Kpm { warhead } => Some(CostFunctional::MissProbability { warhead }),
        };
        let engine = functional
            .map(|functional| {
                DecisionEngine::new(
                    game,
                    DecisionConfig {
                        horizon: config.horizon / scenario.tau_m,
                        mode_signs: mode_commands.iter().map(|a| a / scenario.a_t_max).collect(),
                        functional,
                        subsample: config.subsample,
                    },
                )
            })
            .transpose()?;
        Ok(Self {
            config,
            game,
            engine,
            a_m_max: scenario.a_m_max,
        })
    }

    pub fn engine(&self) -> Option<&DecisionEngine> {
        self.engine.as_ref()
    }

    /// Command from the current posterior; `previous` is `None` on the
    /// first sensor step.
    pub fn guide(
        &self,
        cloud: &ParticleCloud,
        previous: Option<PreviousStep<'_>>,
        own: &OwnState,
        filter: &Immpf,
    ) -> Result<GuidanceOutput> {
        let speeds = filter.plant.speeds;
        let closing = cloud
            .particles()
            .iter()
            .any(|p| p.state.rho > 0.0 && p.state.kinematics(own, &speeds).range_rate < 0.0);
        if !closing {
            return Ok(GuidanceOutput {
                u_m: 0.0,
                report: None,
                terminal: true,
            });
        }
        let game_cloud = GameCloud::from_particles(cloud, own, &speeds, &self.game);
        let (u_bar, report) = match &self.engine {
            None => {
                let point = match self.config.estimate {
                    PointEstimate::Mean => game_cloud.mean_point(),
                    PointEstimate::Map => game_cloud.map_point(),
                };
                (self.game.command(point), None)
            }
            Some(engine) => {
                let report = match previous {
                    Some(prev) => {
                        let priors = || engine.priors(&prev, filter, own);
                        engine.decide(&game_cloud, Some(&priors))?
                    }
                    None => engine.decide(&game_cloud, None)?,
                };
                (report.command, Some(report))
            }
        };
        Ok(GuidanceOutput {
            u_m: (u_bar * self.a_m_max).clamp(-self.a_m_max, self.a_m_max),
            report,
            terminal: false,
        })
    }
}
