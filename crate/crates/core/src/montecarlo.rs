//! Seeded closed-loop engagements, batches, sweeps and their CSV outputs.
//!
//! Every run draws from its own ChaCha8 streams keyed by
//! `(base_seed, run_index, substream)`, so a run's record does not depend on
//! which worker executes it or in which order.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{GameCloud, PreviousStep, RiskReport};
use crate::dynamics::{
    advance_with_profile, closest_approach, measure, EngagementState, OwnState, ScenarioConfig, TargetKind,
    TargetProfile, TargetState,
};
use crate::error::{Error, Result};
use crate::game_space::{GamePoint, GameSpace};
use crate::guidance::{game_params, Guidance, GuidanceConfig, GuidanceKind};
use crate::immpf::{FilterConfig, Immpf, ParticleCloud, Tpm};
use crate::lethality::{EmpiricalCdf, WarheadModel, WarheadPreset};

/// Samples of the final Cartesian segment.
const TERMINAL_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Scenario = 0,
    TruthNoise = 1,
    Filter = 2,
    Scoring = 3,
}

const SUBSTREAMS: u64 = 4;

/// Generator for one substream of one run.
pub fn stream_rng(base_seed: u64, run_index: u64, substream: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run_index * SUBSTREAMS + substream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub scenario: ScenarioConfig,
    pub filter: FilterConfig,
    /// Off-diagonal entry of the symmetric two-mode transition matrix.
    pub p_switch: f64,
    pub guidance: GuidanceConfig,
    /// Warhead used to score misses.
    pub warhead: WarheadModel,
    pub n_runs: usize,
    pub base_seed: u64,
    pub target: TargetKind,
    /// Worker threads; does not affect results.
    pub parallelism: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            filter: FilterConfig::default(),
            p_switch: 0.001,
            guidance: GuidanceConfig::default(),
            warhead: WarheadPreset::Medium.model(),
            n_runs: 500,
            base_seed: 1,
            target: TargetKind::Nominal,
            parallelism: 1,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.filter.validate()?;
        self.guidance.validate()?;
        self.warhead.validate()?;
        Tpm::symmetric(self.p_switch)?;
        if self.n_runs == 0 {
            return Err(Error::InvalidParameter("n_runs must be ≥ 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidParameter("parallelism must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn immpf(&self) -> Result<Immpf> {
        Immpf::bang_bang(
            self.filter,
            Tpm::symmetric(self.p_switch)?,
            self.scenario.a_t_max,
            self.scenario.plant(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub t_switch: f64,
    pub initial_sign: f64,
    /// Meters.
    pub miss: f64,
    pub kill_prob: f64,
    /// Uniform draw used for Bernoulli scoring.
    pub kill_draw: f64,
    /// Hit the time cap before closest approach.
    pub flagged: bool,
    pub steps: usize,
    /// Decision steps that fell back to the deterministic law.
    pub fallback_steps: usize,
}

impl RunRecord {
    pub fn killed(&self) -> bool {
        self.kill_draw < self.kill_prob
    }

    pub fn rescored(&self, warhead: &WarheadModel) -> Result<Self> {
        Ok(Self {
            kill_prob: warhead.kill_prob(self.miss)?,
            ..*self
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub records: Vec<RunRecord>,
    /// Mean kill probability.
    pub sskp: f64,
    /// Binomial standard error of `sskp`.
    pub sskp_stderr: f64,
    /// Fraction of Bernoulli kills.
    pub sskp_bernoulli: f64,
    pub flagged: usize,
    /// `(miss, F̂(miss))` at every distinct miss.
    pub cdf: Vec<(f64, f64)>,
    pub wall_clock_s: f64,
}

impl McSummary {
    pub fn from_records(records: Vec<RunRecord>, wall_clock_s: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = records.len() as f64;
        let sskp = records.iter().map(|r| r.kill_prob).sum::<f64>() / n;
        let kills = records.iter().filter(|r| r.killed()).count() as f64;
        let misses: Vec<f64> = records.iter().map(|r| r.miss).collect();
        Ok(Self {
            sskp,
            sskp_stderr: (sskp * (1.0 - sskp) / n).max(0.0).sqrt(),
            sskp_bernoulli: kills / n,
            flagged: records.iter().filter(|r| r.flagged).count(),
            cdf: EmpiricalCdf::new(&misses)?.support(),
            records,
            wall_clock_s,
        })
    }

    /// Same runs scored with another warhead.
    pub fn rescored(&self, warhead: &WarheadModel) -> Result<Self> {
        let records = self.records.iter().map(|r| r.rescored(warhead)).collect::<Result<Vec<_>>>()?;
        Self::from_records(records, self.wall_clock_s)
    }

    pub fn misses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.miss).collect()
    }
}

/// Result of flying one engagement to closest approach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flight {
    pub miss: f64,
    pub flagged: bool,
    pub steps: usize,
    pub t_final: f64,
}

/// Closed loop at the sensor rate: `command` is called once per step with
/// the truth state and returns the held interceptor acceleration. Stops at
/// closest approach or the time cap.
pub fn fly(
    scenario: &ScenarioConfig,
    profile: &TargetProfile,
    mut command: impl FnMut(&EngagementState, usize) -> Result<f64>,
) -> Result<Flight> {
    let plant = scenario.plant();
    let dt = scenario.dt();
    let mut state = scenario.initial_state();
    let mut k = 0;
    loop {
        if state.t >= scenario.t_cap {
            return Ok(Flight {
                miss: state.separation(),
                flagged: true,
                steps: k,
                t_final: state.t,
            });
        }
        let u_m = command(&state, k)?.clamp(-scenario.a_m_max, scenario.a_m_max);
        k += 1;
        let next = advance_with_profile(&state, u_m, profile, dt, scenario.substeps, &plant);
        let passed = match &next {
            Ok(n) => n.kinematics(&plant.speeds).range_rate >= 0.0,
            Err(Error::RangeCollapsed { .. }) => true,
            Err(_) => false,
        };
        if passed || state.kinematics(&plant.speeds).range_rate >= 0.0 {
            let miss = closest_approach(&state, u_m, profile, 2.0 * dt, TERMINAL_SAMPLES, &plant)?;
            return Ok(Flight {
                miss,
                flagged: false,
                steps: k,
                t_final: state.t + dt,
            });
        }
        state = next?;
    }
}

/// Regular DGL1 fed with the true state.
pub fn fly_truth_fed(scenario: &ScenarioConfig, profile: &TargetProfile, k_lin: f64) -> Result<Flight> {
    let game = GameSpace::new(game_params(scenario, k_lin)?)?;
    let speeds = scenario.plant().speeds;
    fly(scenario, profile, |s, _| {
        Ok(match game.zem_from_polar(&s.target, &s.own, &speeds) {
            Ok(p) => game.command(p) * scenario.a_m_max,
            Err(_) => 0.0,
        })
    })
}

/// Switch time and initial maneuver direction of run `run_index`.
pub fn draw_profile(config: &McConfig, run_index: usize) -> Result<TargetProfile> {
    let mut rng = stream_rng(config.base_seed, run_index as u64, Substream::Scenario);
    let (lo, hi) = config.target.switch_window();
    let t_switch = rng.random_range(lo..=hi);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    TargetProfile::new(sign, t_switch, config.scenario.a_t_max)
}

/// Snapshot of one sensor step, for trajectory dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    pub truth: EngagementState,
    /// Weighted mean of the posterior.
    pub estimate: TargetState,
    pub mode_probabilities: Vec<f64>,
    /// Game-plane point of the true state, if still closing.
    pub true_point: Option<GamePoint>,
    /// Weighted mean game-plane point of the posterior.
    pub estimated_point: GamePoint,
    pub u_m: f64,
    pub report: Option<RiskReport>,
}

/// One seeded closed-loop engagement with the particle filter in the loop.
pub fn run_engagement(config: &McConfig, run_index: usize) -> Result<RunRecord> {
    run_engagement_traced(config, run_index, &mut |_| {})
}

/// [`run_engagement`] reporting every sensor step to `observer`.
pub fn run_engagement_traced(
    config: &McConfig,
    run_index: usize,
    observer: &mut dyn FnMut(&StepTrace),
) -> Result<RunRecord> {
    let filter = config.immpf()?;
    let guidance = Guidance::new(config.guidance, &config.scenario, &filter.mode_commands)?;
    let profile = draw_profile(config, run_index)?;
    let seed = config.base_seed;
    let r = run_index as u64;
    let mut noise = stream_rng(seed, r, Substream::TruthNoise);
    let mut frng = stream_rng(seed, r, Substream::Filter);
    let dt = config.scenario.dt();
    let sigma = config.scenario.sigma_nu;
    let speeds = config.scenario.plant().speeds;

    let truth0 = config.scenario.initial_state();
    let mut cloud = filter.init_cloud(&truth0.target, &mut frng)?;
    let mut previous: Option<(ParticleCloud, OwnState, f64)> = None;
    let mut fallback_steps = 0;

    let flight = fly(&config.scenario, &profile, |state, step| {
        let y = measure(state, sigma, &mut noise);
        if let Some((_, own, u)) = &previous {
            match filter.predict(&cloud, own, *u, dt, &mut frng) {
                Ok(next) => cloud = next,
                // Every hypothesis has already passed the target.
                Err(Error::RangeCollapsed { .. }) => return Ok(0.0),
                Err(e) => return Err(e),
            }
        }
        filter.correct(&mut cloud, y, state.own.gamma_m, &mut frng);
        let prev = previous.as_ref().map(|(c, own, u)| PreviousStep {
            cloud: c,
            own: *own,
            u_m: *u,
            dt,
        });
        let out = guidance.guide(&cloud, prev, &state.own, &filter)?;
        if out.report.as_ref().is_some_and(|r| r.fallback) {
            fallback_steps += 1;
        }
        observer(&StepTrace {
            step,
            truth: *state,
            estimate: cloud.weighted_mean(),
            mode_probabilities: cloud.mode_probabilities(),
            true_point: guidance.game.zem_from_polar(&state.target, &state.own, &speeds).ok(),
            estimated_point: GameCloud::from_particles(&cloud, &state.own, &speeds, &guidance.game).mean_point(),
            u_m: out.u_m,
            report: out.report.clone(),
        });
        previous = Some((cloud.clone(), state.own, out.u_m));
        Ok(out.u_m)
    })?;

    let mut scoring = stream_rng(seed, r, Substream::Scoring);
    Ok(RunRecord {
        run: run_index,
        seed,
        t_switch: profile.t_switch,
        initial_sign: profile.initial_sign,
        miss: flight.miss,
        kill_prob: config.warhead.kill_prob(flight.miss)?,
        kill_draw: scoring.random(),
        flagged: flight.flagged,
        steps: flight.steps,
        fallback_steps,
    })
}

/// All runs of `config`, reduced in run order.
pub fn run_batch(config: &McConfig) -> Result<McSummary> {
    config.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let records = pool.install(|| {
        (0..config.n_runs)
            .into_par_iter()
            .map(|i| run_engagement(config, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = McSummary::from_records(records, start.elapsed().as_secs_f64())?;
    if summary.flagged > 0 {
        log::warn!("{} of {} runs hit the time cap", summary.flagged, config.n_runs);
    }
    Ok(summary)
}

/// Guidance law rows of a sweep; KPM takes the cell's warhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Regular,
    Ea,
    Kpm,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Regular, Variant::Ea, Variant::Kpm];

    pub fn kind(self, warhead: WarheadModel) -> GuidanceKind {
        match self {
            Variant::Regular => GuidanceKind::Regular,
            Variant::Ea => GuidanceKind::Ea,
            Variant::Kpm => GuidanceKind::Kpm { warhead },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Regular => "regular",
            Variant::Ea => "ea",
            Variant::Kpm => "kpm",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regular" => Ok(Self::Regular),
            "ea" => Ok(Self::Ea),
            "kpm" => Ok(Self::Kpm),
            other => Err(Error::InvalidParameter(format!("unknown guidance variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub target: TargetKind,
    pub variant: Variant,
    pub warhead: WarheadPreset,
    pub summary: McSummary,
}

/// Every `(target, variant, warhead)` cell. Warhead-independent variants
/// fly once per target and are rescored for each warhead.
pub fn sweep(
    base: &McConfig,
    targets: &[TargetKind],
    variants: &[Variant],
    warheads: &[WarheadPreset],
) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    for &target in targets {
        for &variant in variants {
            let mut shared: Option<McSummary> = None;
            for &preset in warheads {
                let warhead = preset.model();
                let config = McConfig {
                    target,
                    warhead,
                    guidance: GuidanceConfig {
                        kind: variant.kind(warhead),
                        ..base.guidance
                    },
                    ..*base
                };
                let summary = if config.guidance.kind.uses_warhead() {
                    run_batch(&config)?
                } else {
                    match &shared {
                        Some(s) => s.rescored(&warhead)?,
                        None => {
                            let s = run_batch(&config)?;
                            shared = Some(s.clone());
                            s
                        }
                    }
                };
                log::info!(
                    "{} {} {}: SSKP {:.4} ± {:.4}",
                    target.label(),
                    variant.label(),
                    preset.label(),
                    summary.sskp,
                    summary.sskp_stderr
                );
                cells.push(SweepCell {
                    target,
                    variant,
                    warhead: preset,
                    summary,
                });
            }
        }
    }
    Ok(cells)
}

fn digest_line<W: Write>(out: &mut W, digest: Option<&str>) -> Result<()> {
    if let Some(d) = digest {
        writeln!(out, "# config_digest={d}")?;
    }
    Ok(())
}

/// Per-run records, one row per run in run order.
pub fn write_runs_csv<W: Write>(mut out: W, records: &[RunRecord], digest: Option<&str>) -> Result<()> {
    digest_line(&mut out, digest)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "run",
        "seed",
        "t_switch_s",
        "initial_sign",
        "miss_m",
        "kill_prob",
        "kill_draw",
        "flagged",
        "steps",
        "fallback_steps",
    ])?;
    for r in records {
        w.write_record(&[
            r.run.to_string(),
            r.seed.to_string(),
            format!("{:?}", r.t_switch),
            format!("{:?}", r.initial_sign),
            format!("{:?}", r.miss),
            format!("{:?}", r.kill_prob),
            format!("{:?}", r.kill_draw),
            r.flagged.to_string(),
            r.steps.to_string(),
            r.fallback_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sorted misses with the empirical CDF.
pub fn write_cdf_csv<W: Write>(mut out: W, summary: &McSummary, digest: Option<&str>) -> Result<()> {
    digest_line(&mut out, digest)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["miss_m", "cdf"])?;
    for (m, f) in &summary.cdf {
        w.write_record(&[format!("{m:?}"), format!("{f:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per `(target, variant)` with SSKP and its standard error per
/// warhead column.
pub fn write_sskp_table<W: Write>(mut out: W, cells: &[SweepCell], digest: Option<&str>) -> Result<()> {
    digest_line(&mut out, digest)?;
    let mut warheads: Vec<WarheadPreset> = Vec::new();
    let mut rows: Vec<(TargetKind, Variant)> = Vec::new();
    for c in cells {
        if !warheads.contains(&c.warhead) {
            warheads.push(c.warhead);
        }
        if !rows.contains(&(c.target, c.variant)) {
            rows.push((c.target, c.variant));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["target".to_string(), "variant".to_string(), "n_runs".to_string()];
    header.extend(warheads.iter().map(|p| format!("sskp_{}", p.label())));
    header.extend(warheads.iter().map(|p| format!("stderr_{}", p.label())));
    w.write_record(&header)?;
    for (target, variant) in rows {
        let find = |p: WarheadPreset| {
            cells
                .iter()
                .find(|c| c.target == target && c.variant == variant && c.warhead == p)
        };
        let n = warheads
            .iter()
            .find_map(|p| find(*p))
            .map_or(0, |c| c.summary.records.len());
        let mut row = vec![target.label().to_string(), variant.label().to_string(), n.to_string()];
        row.extend(warheads.iter().map(|p| find(*p).map_or(String::new(), |c| format!("{:.6}", c.summary.sskp))));
        row.extend(
            warheads
                .iter()
                .map(|p| find(*p).map_or(String::new(), |c| format!("{:.6}", c.summary.sskp_stderr))),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
