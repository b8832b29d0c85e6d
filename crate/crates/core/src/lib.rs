//! Planar interceptor–target engagement simulator with kill-probability
//! maximizing guidance.
//!
//! The crate is organized bottom-up:
//!
//! - [`game_space`]: the normalized DGL1 game, its decomposition and value.
//! - [`lethality`]: warhead kill-probability models and warhead sizing.
//! - [`dynamics`]: nonlinear polar equations of motion and bearing sensor.
//! - [`immpf`]: mode-tagged particle filter for the target state.
//! - [`decision`]: Bayesian hypothesis selection over the game plane.
//! - [`guidance`]: the Regular, EA and KPM guidance variants.
//! - [`montecarlo`]: seeded closed-loop runs, batches and sweeps.

pub mod decision;
pub mod dynamics;
pub mod error;
pub mod game_space;
pub mod guidance;
pub mod immpf;
pub mod lethality;
pub mod montecarlo;

pub use decision::{CostFunctional, DecisionConfig, DecisionEngine, GameCloud, HypothesisPartition, RiskReport};
pub use dynamics::{EngagementState, OwnState, Plant, ScenarioConfig, Speeds, TargetKind, TargetProfile, TargetState};
pub use error::{Error, Result};
pub use game_space::{GameParams, GamePoint, GameSpace, Region};
pub use guidance::{Guidance, GuidanceConfig, GuidanceKind};
pub use immpf::{FilterConfig, Immpf, JitterReference, Particle, ParticleCloud, Tpm};
pub use lethality::{design_radius, EmpiricalCdf, WarheadModel, WarheadPreset};
pub use montecarlo::{McConfig, McSummary, RunRecord};
