use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kpm_core::decision::{hypothesis_label, partition};
use kpm_core::guidance::game_params;
use kpm_core::montecarlo::{
    run_batch, run_engagement_traced, sweep, write_cdf_csv, write_runs_csv, write_sskp_table, StepTrace, Variant,
};
use kpm_core::{
    design_radius, CostFunctional, DecisionConfig, DecisionEngine, GameCloud, GameParams, GamePoint, GameSpace,
    GuidanceKind, McConfig, TargetKind, WarheadModel, WarheadPreset,
};

use crate::config;
use crate::manifest::RunManifest;
use crate::{ConfigContext, Failure, RuntimeContext};

#[derive(Debug, Parser)]
#[command(name = "kpm", version, about = "Kill-probability-maximizing interceptor guidance experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Nominal,
    Smart,
    Both,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON config; omitted keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Particles per filter mode.
    #[arg(long, global = true)]
    pub particles: Option<usize>,
    /// regular, ea or kpm.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// htk, small, medium or large; used for scoring and by kpm.
    #[arg(long, global = true)]
    pub warhead: Option<WarheadPreset>,
    #[arg(long, global = true, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Representatives per hypothesis in cross costs.
    #[arg(long, global = true)]
    pub subsample: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One engagement with a per-step trajectory dump.
    Run {
        #[arg(long, default_value_t = 0)]
        run_index: usize,
    },
    /// A batch of engagements with SSKP and the miss CDF.
    Mc,
    /// SSKP table over variants, warheads and targets.
    Sweep,
    /// Warhead radius reaching a kill level on a miss sample.
    Design {
        /// CSV of misses: the `miss_m` column, else the first column.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kappa: f64,
    },
    /// Region, value and miss-probability grid over the game plane.
    Gamespace {
        /// Largest normalized time-to-go.
        #[arg(long, default_value_t = 6.0)]
        tau_max: f64,
        #[arg(long, default_value_t = 121)]
        tau_points: usize,
        /// Largest normalized ZEM magnitude.
        #[arg(long, default_value_t = 4.0)]
        z_max: f64,
        #[arg(long, default_value_t = 161)]
        z_points: usize,
    },
    /// Risks of every hypothesis under both cost functionals.
    Example {
        /// CSV with columns z_bar, tau, mode, weight; a built-in cloud if absent.
        #[arg(long)]
        cloud: Option<PathBuf>,
        /// Decision horizon, seconds.
        #[arg(long, default_value_t = 0.01)]
        horizon: f64,
    },
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    let common = &cli.common;
    match &cli.command {
        Command::Run { run_index } => run(common, *run_index),
        Command::Mc => mc(common),
        Command::Sweep => sweep_cmd(common),
        Command::Design { input, kappa } => design(common, input, *kappa),
        Command::Gamespace {
            tau_max,
            tau_points,
            z_max,
            z_points,
        } => gamespace(common, *tau_max, *tau_points, *z_max, *z_points),
        Command::Example { cloud, horizon } => example(common, cloud.as_deref(), *horizon),
    }
}

/// Config file plus command-line overrides. A `both` target is left to the
/// caller.
pub fn build_config(common: &Common) -> Result<McConfig, Failure> {
    let mut c = match &common.config {
        Some(path) => config::load(path).config_err()?,
        None => McConfig::default(),
    };
    if let Some(seed) = common.seed {
        c.base_seed = seed;
    }
    if let Some(n) = common.runs {
        c.n_runs = n;
    }
    if let Some(s) = common.particles {
        c.filter.particles_per_mode = s;
    }
    if let Some(p) = common.parallelism {
        c.parallelism = p;
    }
    if let Some(s) = common.subsample {
        c.guidance.subsample = Some(s);
    }
    match common.target {
        Some(TargetArg::Nominal) => c.target = TargetKind::Nominal,
        Some(TargetArg::Smart) => c.target = TargetKind::Smart,
        Some(TargetArg::Both) | None => {}
    }
    if let Some(preset) = common.warhead {
        c.warhead = preset.model();
        if let GuidanceKind::Kpm { warhead } = &mut c.guidance.kind {
            *warhead = c.warhead;
        }
    }
    if let Some(v) = common.variant {
        c.guidance.kind = v.kind(c.warhead);
    }
    c.validate().config_err()?;
    Ok(c)
}

fn single_target(common: &Common) -> Result<(), Failure> {
    if common.target == Some(TargetArg::Both) {
        return Err(Failure::Config(anyhow!("--target both is only valid for sweep")));
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .runtime_err()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .runtime_err()
}

/// Saves the canonical config and opens a manifest for it.
fn start(common: &Common, name: &str, config: &McConfig) -> Result<(RunManifest, String), Failure> {
    prepare_out(&common.out)?;
    let digest = config::digest(config).runtime_err()?;
    let mut manifest = RunManifest::start(name, Some(digest.clone()), Some(config.base_seed));
    let path = common.out.join("config.json");
    config::save(config, &path).runtime_err()?;
    manifest.outputs.push(path);
    Ok((manifest, digest))
}

fn finish(common: &Common, manifest: RunManifest) -> Result<(), Failure> {
    let path = manifest.finish(&common.out).runtime_err()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run(common: &Common, run_index: usize) -> Result<(), Failure> {
    single_target(common)?;
    let config = build_config(common)?;
    let (mut manifest, digest) = start(common, "run", &config)?;
    let path = common.out.join("trajectory.csv");
    let mut out = create(&path)?;
    writeln!(out, "# config_digest={digest} run_index={run_index}").runtime_err()?;
    let modes = config.immpf().runtime_err()?.modes();
    let mut header = vec![
        "step", "t_s", "rho_m", "lambda_rad", "gamma_m_rad", "gamma_t_rad", "a_m_mps2", "a_t_mps2", "x_m_m", "y_m_m",
        "x_t_m", "y_t_m", "est_rho_m", "est_lambda_rad", "est_gamma_t_rad", "est_a_t_mps2", "z_bar_true", "tau_true",
        "z_bar_est", "tau_est", "u_m_mps2", "hypothesis", "fallback",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend((0..modes).map(|r| format!("p_mode{r}")));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).runtime_err()?;
    let mut write_error = None;
    let mut observer = |s: &StepTrace| {
        let (zt, tt) = s.true_point.map_or((f64::NAN, f64::NAN), |p| (p.z_bar, p.tau));
        let mut row = vec![
            s.step.to_string(),
            format!("{:?}", s.truth.t),
            format!("{:?}", s.truth.target.rho),
            format!("{:?}", s.truth.target.lambda),
            format!("{:?}", s.truth.own.gamma_m),
            format!("{:?}", s.truth.target.gamma_t),
            format!("{:?}", s.truth.own.a_m),
            format!("{:?}", s.truth.target.a_t),
            format!("{:?}", s.truth.pos_m[0]),
            format!("{:?}", s.truth.pos_m[1]),
            format!("{:?}", s.truth.pos_t[0]),
            format!("{:?}", s.truth.pos_t[1]),
            format!("{:?}", s.estimate.rho),
            format!("{:?}", s.estimate.lambda),
            format!("{:?}", s.estimate.gamma_t),
            format!("{:?}", s.estimate.a_t),
            format!("{zt:?}"),
            format!("{tt:?}"),
            format!("{:?}", s.estimated_point.z_bar),
            format!("{:?}", s.estimated_point.tau),
            format!("{:?}", s.u_m),
            s.report.as_ref().map_or(String::new(), |r| (r.chosen + 1).to_string()),
            s.report.as_ref().is_some_and(|r| r.fallback).to_string(),
        ];
        row.extend(s.mode_probabilities.iter().map(|p| format!("{p:?}")));
        if let Err(e) = w.write_record(&row) {
            write_error.get_or_insert(e);
        }
    };
    let record = run_engagement_traced(&config, run_index, &mut observer).runtime_err()?;
    if let Some(e) = write_error {
        return Err(e).runtime_err();
    }
    w.flush().runtime_err()?;
    manifest.outputs.push(path);
    println!(
        "run {run_index}: {} target, {} guidance, switch at {:.3} s, miss {:.4} m, kill probability {:.4}{}",
        config.target.label(),
        config.guidance.kind.label(),
        record.t_switch,
        record.miss,
        record.kill_prob,
        if record.flagged { " (flagged)" } else { "" }
    );
    finish(common, manifest)
}

fn mc(common: &Common) -> Result<(), Failure> {
    single_target(common)?;
    let config = build_config(common)?;
    let (mut manifest, digest) = start(common, "mc", &config)?;
    let summary = run_batch(&config).runtime_err()?;
    let runs = common.out.join("runs.csv");
    write_runs_csv(create(&runs)?, &summary.records, Some(&digest)).runtime_err()?;
    let cdf = common.out.join("cdf.csv");
    write_cdf_csv(create(&cdf)?, &summary, Some(&digest)).runtime_err()?;
    manifest.outputs.extend([runs, cdf]);
    println!(
        "{} target, {} guidance, {} runs: SSKP {:.4} ± {:.4} (Bernoulli {:.4}), {} flagged, {:.1} s",
        config.target.label(),
        config.guidance.kind.label(),
        summary.records.len(),
        summary.sskp,
        summary.sskp_stderr,
        summary.sskp_bernoulli,
        summary.flagged,
        summary.wall_clock_s
    );
    finish(common, manifest)
}

fn sweep_cmd(common: &Common) -> Result<(), Failure> {
    let config = build_config(common)?;
    let targets = match common.target {
        Some(TargetArg::Both) => vec![TargetKind::Nominal, TargetKind::Smart],
        _ => vec![config.target],
    };
    let variants = common.variant.map_or(Variant::ALL.to_vec(), |v| vec![v]);
    let warheads = common.warhead.map_or(WarheadPreset::ALL.to_vec(), |w| vec![w]);
    let (mut manifest, digest) = start(common, "sweep", &config)?;
    let cells = sweep(&config, &targets, &variants, &warheads).runtime_err()?;
    let table = common.out.join("sskp_table.csv");
    write_sskp_table(create(&table)?, &cells, Some(&digest)).runtime_err()?;
    manifest.outputs.push(table);
    let runs_dir = common.out.join("runs");
    prepare_out(&runs_dir)?;
    for cell in &cells {
        let path = runs_dir.join(format!(
            "{}_{}_{}.csv",
            cell.target.label(),
            cell.variant.label(),
            cell.warhead.label()
        ));
        write_runs_csv(create(&path)?, &cell.summary.records, Some(&digest)).runtime_err()?;
        manifest.outputs.push(path);
    }
    println!("{:<8} {:<8} {}", "target", "variant", warheads.iter().map(|w| format!("{:>8}", w.label())).collect::<String>());
    for target in &targets {
        for variant in &variants {
            let row: String = warheads
                .iter()
                .map(|w| {
                    cells
                        .iter()
                        .find(|c| c.target == *target && c.variant == *variant && c.warhead == *w)
                        .map_or(format!("{:>8}", "-"), |c| format!("{:>8.3}", c.summary.sskp))
                })
                .collect();
            println!("{:<8} {:<8} {row}", target.label(), variant.label());
        }
    }
    finish(common, manifest)
}

/// Miss samples from a CSV: the `miss_m` column when headed, else the first
/// column. Lines starting with `#` are skipped.
pub fn read_misses(path: &Path) -> anyhow::Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut column = 0;
    let mut misses = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            column = record.iter().position(|f| f == "miss_m").unwrap_or(0);
            continue;
        }
        let Some(field) = record.get(column) else {
            anyhow::bail!("row {} has no column {column}", i + 1);
        };
        misses.push(
            field
                .parse::<f64>()
                .with_context(|| format!("row {}: {field:?} is not a number", i + 1))?,
        );
    }
    Ok(misses)
}

fn design(common: &Common, input: &Path, kappa: f64) -> Result<(), Failure> {
    let misses = read_misses(input).config_err()?;
    let radius = design_radius(&misses, kappa).config_err()?;
    prepare_out(&common.out)?;
    let mut manifest = RunManifest::start("design", None, None);
    manifest.outputs.push(input.to_path_buf());
    println!("{radius}");
    finish(common, manifest)
}

fn game_for(config: &McConfig) -> Result<GameSpace, Failure> {
    let params: GameParams = game_params(&config.scenario, config.guidance.k_lin).config_err()?;
    GameSpace::new(params).config_err()
}

fn gamespace(common: &Common, tau_max: f64, tau_points: usize, z_max: f64, z_points: usize) -> Result<(), Failure> {
    single_target(common)?;
    if tau_points < 2 || z_points < 2 || !(tau_max > 0.0) || !(z_max > 0.0) {
        return Err(Failure::Config(anyhow!("grid needs positive extents and at least two points per axis")));
    }
    let config = build_config(common)?;
    let game = game_for(&config)?;
    let (mut manifest, digest) = start(common, "gamespace", &config)?;
    let path = common.out.join("gamespace.csv");
    let mut out = create(&path)?;
    writeln!(out, "# config_digest={digest}").runtime_err()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "z_bar", "region", "miss_value_m", "miss_prob"]).runtime_err()?;
    for i in 0..tau_points {
        let tau = tau_max * i as f64 / (tau_points - 1) as f64;
        for j in 0..z_points {
            let z_bar = -z_max + 2.0 * z_max * j as f64 / (z_points - 1) as f64;
            let point = GamePoint::new(z_bar, tau);
            let miss = game.miss_value(point);
            let p_m = config.warhead.miss_prob(miss).runtime_err()?;
            w.write_record(&[
                format!("{tau:?}"),
                format!("{z_bar:?}"),
                game.classify(point).label().to_string(),
                format!("{miss:?}"),
                format!("{p_m:?}"),
            ])
            .runtime_err()?;
        }
    }
    w.flush().runtime_err()?;
    manifest.outputs.push(path);
    println!(
        "tau_s = {:.4}, singular value {:.4} m, {} x {} grid",
        game.tau_s(),
        game.singular_value(),
        tau_points,
        z_points
    );
    finish(common, manifest)
}

/// Cloud from a CSV with columns `z_bar, tau, mode, weight`.
pub fn read_cloud(path: &Path) -> anyhow::Result<GameCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("missing column {name:?}"))
    };
    let (cz, ct, cm, cw) = (col("z_bar")?, col("tau")?, col("mode")?, col("weight")?);
    let (mut points, mut modes, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let r = record?;
        let field = |c: usize| r.get(c).ok_or_else(|| anyhow!("short row"));
        points.push(GamePoint::new(field(cz)?.parse()?, field(ct)?.parse()?));
        modes.push(field(cm)?.parse()?);
        weights.push(field(cw)?.parse()?);
    }
    Ok(GameCloud::new(points, modes, weights)?)
}

/// Equally weighted cloud at one time-to-go: four upper-regular points
/// straddling `R_eff(3)` of `warhead`, sixteen lower-regular points well
/// inside it and the rest spread over the singular region.
pub fn builtin_cloud(game: &GameSpace, warhead: &WarheadModel) -> anyhow::Result<GameCloud> {
    const TOTAL: usize = 1000;
    let tau = game.tau_s() + 1.5;
    let terms = game.value_terms(tau);
    let scale = game.params().length_scale();
    let r3 = warhead.r_eff(3.0)?;
    let edge = game.singular_boundary(tau)?;
    let mut points = Vec::with_capacity(TOTAL);
    let mut modes = Vec::with_capacity(TOTAL);
    for (k, f) in [0.93, 0.99, 1.03, 1.12].into_iter().enumerate() {
        points.push(GamePoint::new(terms.offset + f * r3 / scale, tau));
        modes.push(k % 2);
    }
    for k in 0..16 {
        let miss = r3 * (0.1 + 0.05 * k as f64).min(0.9);
        points.push(GamePoint::new(-(terms.offset + miss / scale), tau));
        modes.push(k % 2);
    }
    let rest = TOTAL - points.len();
    for k in 0..rest {
        let z = edge * (-0.98 + 1.96 * (k as f64 + 0.5) / rest as f64);
        points.push(GamePoint::new(z, tau));
        modes.push(k % 2);
    }
    Ok(GameCloud::new(points, modes, vec![1.0 / TOTAL as f64; TOTAL])?)
}

fn example(common: &Common, cloud: Option<&Path>, horizon: f64) -> Result<(), Failure> {
    single_target(common)?;
    if !(horizon > 0.0) {
        return Err(Failure::Config(anyhow!("horizon must be positive")));
    }
    let config = build_config(common)?;
    let game = game_for(&config)?;
    let filter = config.immpf().config_err()?;
    let modes = filter.modes();
    let cloud = match cloud {
        Some(path) => read_cloud(path).config_err()?,
        None => builtin_cloud(&game, &config.warhead).runtime_err()?,
    };
    if let Some(m) = cloud.modes.iter().find(|m| **m >= modes) {
        return Err(Failure::Config(anyhow!("mode {m} out of range for {modes} modes")));
    }
    let (mut manifest, digest) = start(common, "example", &config)?;
    let counts = partition(&cloud, &game, modes).counts();
    let labels: Vec<String> = (0..modes + 2).map(|i| hypothesis_label(i, modes)).collect();
    for (label, n) in labels.iter().zip(&counts) {
        println!("{label:<22} {n:>6} particles");
    }
    let path = common.out.join("example.csv");
    let mut out = create(&path)?;
    writeln!(out, "# config_digest={digest}").runtime_err()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cost", "hypothesis", "particles", "prior", "likelihood", "risk", "chosen"])
        .runtime_err()?;
    println!();
    print!("{:<18}", "cost");
    for i in 0..modes + 2 {
        print!("{:>12}", format!("I{}", i + 1));
    }
    println!("{:>10}", "choice");
    let functionals = [
        ("miss_distance", "|M| (m)", CostFunctional::MissDistance),
        (
            "miss_probability",
            "P_m",
            CostFunctional::MissProbability {
                warhead: config.warhead,
            },
        ),
    ];
    for (key, title, functional) in functionals {
        let engine = DecisionEngine::new(
            game,
            DecisionConfig {
                horizon: horizon / config.scenario.tau_m,
                mode_signs: filter.mode_commands.iter().map(|a| a / config.scenario.a_t_max).collect(),
                functional,
                subsample: None,
            },
        )
        .config_err()?;
        let masses = kpm_core::decision::likelihoods(&engine.partition(&cloud), &cloud);
        let report = engine.decide_with_priors(&cloud, masses);
        print!("{title:<18}");
        for r in &report.risks {
            print!("{:>12.3e}", r);
        }
        println!("{:>10}", format!("H{}", report.chosen + 1));
        for i in 0..report.risks.len() {
            w.write_record(&[
                key.to_string(),
                labels[i].clone(),
                counts[i].to_string(),
                format!("{:?}", report.priors[i]),
                format!("{:?}", report.likelihoods[i]),
                format!("{:?}", report.risks[i]),
                (i == report.chosen).to_string(),
            ])
            .runtime_err()?;
        }
    }
    w.flush().runtime_err()?;
    manifest.outputs.push(path);
    finish(common, manifest)
}
