use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mewm_core::actions::{propose_action_base, ObservationSummary, PolicyConfig, Vocabulary};
use mewm_core::cohort::{
    benchmark, generate_cohort, load_cohort, planted_cox, save_cohort, CohortConfig, Planner,
};
use mewm_core::dynamics::EfficacyTable;
use mewm_core::explorer::{explore, ExplorationConfig};
use mewm_core::survival::{concordance_index, fit_cox, read_survival_csv, CoxOptions};
use mewm_core::ComboNames;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::engine::{load_cox, patient_context, simulate_combo};

#[derive(Parser, Debug)]
#[command(
    name = "mewm",
    version,
    about = "TACE protocol planning on a surrogate world model"
)]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthetic cohort tools.
    Cohort {
        #[command(subcommand)]
        action: CohortCommand,
    },
    /// Fit a Cox model on a cohort's survival table.
    FitCox(FitCoxArgs),
    /// Simulate one protocol on one patient and score it.
    Simulate(SimulateArgs),
    /// Beam-search a protocol for one patient.
    Explore(ExploreArgs),
    /// Score a planner against a cohort's gold protocols.
    Benchmark(BenchmarkArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Subcommand, Debug)]
enum CohortCommand {
    /// Generate a synthetic cohort directory.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(short = 'n', long = "patients")]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
    /// CohortConfig JSON; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitCoxArgs {
    /// Cohort directory holding survival.csv.
    #[arg(
        long,
        conflicts_with = "survival",
        required_unless_present = "survival"
    )]
    cohort: Option<PathBuf>,
    /// Survival CSV (subject_id, time_months, event, covariates...).
    #[arg(long)]
    survival: Option<PathBuf>,
    /// Share of subjects used for fitting; the rest is held out.
    #[arg(long, default_value_t = 0.9)]
    train_share: f64,
    /// Shuffles subjects before the split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = CoxOptions::default().ridge)]
    ridge: f64,
    #[arg(long, default_value_t = 0.0)]
    aux_time_weight: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PatientArgs {
    /// Patient directory containing `ct` and `mask` volumes.
    #[arg(long)]
    patient: PathBuf,
    /// Cox model JSON; defaults to the planted volume-change model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Efficacy table JSON; defaults to the patient's cohort entry.
    #[arg(long)]
    efficacy: Option<PathBuf>,
    /// Vocabulary JSON with drugs, embolics and rules.
    #[arg(long)]
    vocabulary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    patient: PatientArgs,
    /// JSON object with `drugs` and `embolics` name lists.
    #[arg(long)]
    combo: PathBuf,
    #[arg(short = 'T', long, default_value_t = 1)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the efficacy table's replica noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Writes the first simulated replica as MVOL files under this directory.
    #[arg(long)]
    states: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExploreArgs {
    #[command(flatten)]
    patient: PatientArgs,
    /// ExplorationConfig JSON (beams, drug_horizon, embolic_horizon, replicas, seed).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "maximize survival")]
    goal: String,
    /// PolicyConfig JSON; enables an LLM endpoint when it sets one.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PlannerKind {
    Explorer,
    Oracle,
    Random,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long, value_enum, default_value = "explorer")]
    planner: PlannerKind,
    /// ExplorationConfig JSON; defaults to the cohort's gold search.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metrics JSON; the per-patient CSV is written next to it.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Store root; cohorts live below it, sessions and states are written to it.
    #[arg(long, env = "MEWM_DATA_DIR", default_value = ".")]
    pub data_dir: PathBuf,
    /// Allowed CORS origin; repeat for several, omit to allow any.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cohort_gen(a: GenArgs) -> Result<()> {
    let cfg: CohortConfig = a
        .config
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    let cohort = generate_cohort(a.n, &cfg, a.seed)?;
    save_cohort(&a.out, &cohort)?;
    log::info!(
        "wrote {} patients to {}",
        cohort.patients.len(),
        a.out.display()
    );
    Ok(())
}

fn fit(a: FitCoxArgs) -> Result<()> {
    if !(a.train_share > 0.0 && a.train_share <= 1.0) {
        bail!("--train-share must lie in (0, 1]");
    }
    let path = match (&a.cohort, &a.survival) {
        (Some(c), _) => c.join("survival.csv"),
        (None, Some(s)) => s.clone(),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let table = read_survival_csv(&path)?;
    let mut order: Vec<usize> = (0..table.records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
    let k = ((a.train_share * order.len() as f64).ceil() as usize).clamp(1, order.len());
    let train: Vec<_> = order[..k]
        .iter()
        .map(|&i| table.records[i].clone())
        .collect();
    let test: Vec<_> = order[k..]
        .iter()
        .map(|&i| table.records[i].clone())
        .collect();
    let opts = CoxOptions {
        ridge: a.ridge,
        aux_time_weight: a.aux_time_weight,
        ..Default::default()
    };
    let names: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    let model = fit_cox(&train, &opts)?.with_names(&names);
    for w in &model.warnings {
        log::warn!("{w}");
    }
    model.save(&a.out)?;
    let c_index = |recs: &[mewm_core::SurvivalRecord]| -> Result<Option<f64>> {
        let risks = recs
            .iter()
            .map(|r| model.risk_score(&r.covariates))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(concordance_index(&risks, recs).ok())
    };
    let summary = serde_json::json!({
        "model": a.out,
        "n_train": train.len(),
        "n_test": test.len(),
        "converged": model.converged,
        "beta": model.unstandardized_beta(),
        "c_index_train": c_index(&train)?,
        "c_index_test": c_index(&test)?,
    });
    write_json(None, &summary)
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let ctx = context(&a.patient, a.noise)?;
    let names: ComboNames = read_json(&a.combo)?;
    let (summary, ev, post_mask) = simulate_combo(&ctx, &names, a.replicas, a.seed)?;
    if let Some(dir) = &a.states {
        std::fs::create_dir_all(dir)?;
        mewm_core::voxel::io::write_volume(&dir.join("volume"), &ev.states[0].volume)?;
        mewm_core::voxel::io::write_mask(&dir.join("mask"), &post_mask)?;
    }
    write_json(a.out.as_deref(), &summary)
}

fn context(p: &PatientArgs, noise: Option<f64>) -> Result<crate::engine::PatientContext> {
    let mut efficacy: Option<EfficacyTable> = p.efficacy.as_deref().map(read_json).transpose()?;
    let vocabulary: Option<Vocabulary> = p.vocabulary.as_deref().map(read_json).transpose()?;
    if let Some(v) = &vocabulary {
        v.validate()?;
    }
    let mut ctx = patient_context(
        &p.patient,
        efficacy.take(),
        vocabulary,
        load_cox(p.model.as_deref())?,
    )?;
    if let Some(n) = noise {
        ctx.world.efficacy.noise_scale = n;
    }
    ctx.world.efficacy.validate()?;
    Ok(ctx)
}

fn explore_cmd(a: ExploreArgs) -> Result<()> {
    let ctx = context(&a.patient, None)?;
    let mut cfg: ExplorationConfig = a
        .config
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut policy: PolicyConfig = a
        .policy
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    if a.patient.vocabulary.is_some() || a.policy.is_none() {
        policy.vocabulary = ctx.vocabulary.clone();
    }
    let reply = propose_action_base(
        &ObservationSummary::from_mask(&ctx.patient.mask),
        &a.goal,
        &policy,
    )?;
    for w in &reply.warnings {
        log::warn!("policy {}: {}", w.code, w.message);
    }
    let plan = explore(
        &ctx.patient.pre,
        &ctx.patient.mask,
        &a.goal,
        &reply.base,
        &ctx.world,
        &cfg,
    )?;
    write_json(a.out.as_deref(), &plan)
}

fn benchmark_cmd(a: BenchmarkArgs) -> Result<()> {
    let cohort = load_cohort(&a.cohort)?;
    let mut cfg: ExplorationConfig = a
        .config
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or(cohort.config.gold_search);
    cfg.seed = a.seed;
    let planner = match a.planner {
        PlannerKind::Explorer => Planner::Explorer(cfg),
        PlannerKind::Oracle => Planner::Oracle(cfg),
        PlannerKind::Random => Planner::Random {
            drug_horizon: cfg.drug_horizon,
            embolic_horizon: cfg.embolic_horizon,
            seed: a.seed,
        },
    };
    let cox = load_cox(a.model.as_deref())?.unwrap_or_else(planted_cox);
    let report = benchmark(&cohort, &planner, &cox, a.out.as_deref())?;
    if a.out.is_none() {
        write_json(None, &report)?;
    } else {
        let brief = serde_json::json!({
            "planner": report.planner,
            "n_patients": report.n_patients,
            "f1": report.f1,
            "jaccard": report.jaccard,
            "c_index": report.c_index,
            "failures": report.failures.len(),
        });
        write_json(None, &brief)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cohort {
            action: CohortCommand::Gen(a),
        } => cohort_gen(a),
        Command::FitCox(a) => fit(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Explore(a) => explore_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::Serve(a) => crate::server::serve_blocking(a),
    }
}

/// Parses `argv` and runs the command. Returns 0 on success, 1 on usage
/// errors and 2 on runtime errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
