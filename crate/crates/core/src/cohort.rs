//! Synthetic cohorts with planted gold protocols, protocol set metrics and
//! the benchmark harness.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{render_combo, ActionBase, ActionCombo, ComboNames, Vocabulary};
use crate::dynamics::EfficacyTable;
use crate::error::{Error, Result};
use crate::explorer::{
    enumerate_combos, exhaustive_oracle, explore, ExplorationConfig, WorldModel,
};
use crate::segmenter::{segment_post, SegmenterConfig};
use crate::survival::{
    censoring_horizon, concordance_index, extract_features, risk_mse, CoxModel, FeatureVector,
    SurvivalRecord, FEATURE_NAMES, VOLUME_CHANGE_RATIO,
};
use crate::voxel::{io, Dims, Intensity, Mask3, Spacing, Volume3, BACKGROUND, LIVER, TUMOR};

/// Efficacy weights for the default vocabulary.
pub fn default_efficacy_table() -> EfficacyTable {
    EfficacyTable::with_weights([
        ("Raltitrexed", 0.6),
        ("Epirubicin", 0.8),
        ("Oxaliplatin", 0.7),
        ("Lobaplatin", 0.65),
        ("Idarubicin", 0.75),
        ("THP", 0.7),
        ("Cisplatin", 0.9),
        ("Doxorubicin", 0.85),
        ("Mitomycin", 0.5),
        ("Lipiodol", 1.0),
        ("Gelatin Sponge", 0.8),
        ("LC beads", 0.9),
    ])
}

/// Cox model whose only term is `+1 * volume_change_ratio` on raw features.
pub fn planted_cox() -> CoxModel {
    let mut beta = vec![0.0; FEATURE_NAMES.len()];
    beta[VOLUME_CHANGE_RATIO] = 1.0;
    CoxModel::planted(beta).with_names(&FEATURE_NAMES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub tumor_radius: [f64; 2],
    /// Log-scale spread of the per-patient efficacy multipliers.
    pub weight_spread: f64,
    /// Log-scale spread of one multiplier shared by all of a patient's weights.
    pub response_spread: f64,
    /// Survival hazard is `base_hazard * exp(hazard_k * volume_change_ratio)`.
    pub hazard_k: f64,
    /// Per month.
    pub base_hazard: f64,
    pub censoring: f64,
    pub gold_search: ExplorationConfig,
    pub efficacy: EfficacyTable,
    pub vocabulary: Vocabulary,
    pub segmenter: SegmenterConfig,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            dims: [64, 64, 56],
            spacing_mm: 1.0,
            tumor_radius: [8.0, 15.0],
            weight_spread: 0.3,
            response_spread: 0.8,
            hazard_k: 5.0,
            base_hazard: 0.02,
            censoring: 0.2,
            gold_search: ExplorationConfig {
                beams: 1,
                drug_horizon: 2,
                embolic_horizon: 1,
                replicas: 1,
                seed: 0,
            },
            efficacy: default_efficacy_table().with_noise(0.0),
            vocabulary: Vocabulary::default(),
            segmenter: SegmenterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub id: String,
    pub pre: Volume3,
    pub mask: Mask3,
    pub gold: ActionCombo,
    /// This patient's own noiseless efficacy table.
    pub efficacy: EfficacyTable,
    /// Features of the gold protocol's simulated outcome.
    pub gold_features: FeatureVector,
    pub survival: SurvivalRecord,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub seed: u64,
    pub config: CohortConfig,
    pub patients: Vec<SyntheticPatient>,
}

impl Cohort {
    pub fn records(&self) -> Vec<SurvivalRecord> {
        self.patients.iter().map(|p| p.survival.clone()).collect()
    }

    /// First `ceil(train_share * n)` patients, then the rest.
    pub fn split(&self, train_share: f64) -> (Vec<&SyntheticPatient>, Vec<&SyntheticPatient>) {
        let k =
            ((train_share * self.patients.len() as f64).ceil() as usize).min(self.patients.len());
        (
            self.patients[..k].iter().collect(),
            self.patients[k..].iter().collect(),
        )
    }
}

/// Liver ellipsoid with one lobulated hypodense tumor inside it.
pub fn synthesize_scan(cfg: &CohortConfig, rng: &mut ChaCha8Rng) -> Result<(Volume3, Mask3)> {
    let dims = Dims::new(cfg.dims[0], cfg.dims[1], cfg.dims[2]);
    let spacing = Spacing::iso(cfg.spacing_mm);
    spacing.validate()?;
    let [rlo, rhi] = cfg.tumor_radius;
    if !(rlo > 0.0 && rlo <= rhi) {
        return Err(Error::invalid(
            "tumor radius range must be positive and ordered",
        ));
    }
    let center: [f64; 3] = std::array::from_fn(|a| (cfg.dims[a] as f64 - 1.0) / 2.0);
    let semi: [f64; 3] =
        std::array::from_fn(|a| (cfg.dims[a] as f64 / 2.0 - 3.0) * rng.random_range(0.85..=1.0));
    let in_liver = |p: [f64; 3], shrink: f64| {
        (0..3)
            .map(|a| ((p[a] - center[a]) / (semi[a] - shrink)).powi(2))
            .sum::<f64>()
            <= 1.0
    };

    let mut radius = rng.random_range(rlo..=rhi);
    let lobes: [(f64, f64, f64); 3] = std::array::from_fn(|_| {
        (
            rng.random_range(0.0..0.12),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        )
    });
    let mut tumor_center = None;
    for _ in 0..2000 {
        let p: [f64; 3] = std::array::from_fn(|a| center[a] + rng.random_range(-semi[a]..semi[a]));
        let reach = radius * 1.12 + 2.0;
        let fits = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
            .iter()
            .all(|d| {
                [-1.0, 1.0]
                    .iter()
                    .all(|s| in_liver(std::array::from_fn(|a| p[a] + s * reach * d[a]), 0.0))
            });
        if fits && in_liver(p, reach) {
            tumor_center = Some(p);
            break;
        }
        if radius > rlo {
            radius = (radius * 0.99).max(rlo);
        }
    }
    let tc = tumor_center
        .ok_or_else(|| Error::invalid("tumor does not fit inside the liver; enlarge dims"))?;

    let noise = Normal::new(0.0, 0.03).expect("valid sigma");
    let mut labels = vec![BACKGROUND; dims.len()];
    let mut data = vec![0.0f32; dims.len()];
    for i in 0..dims.len() {
        let c = dims.coords(i);
        let p: [f64; 3] = std::array::from_fn(|a| c[a] as f64);
        if !in_liver(p, 0.0) {
            continue;
        }
        let d: [f64; 3] = std::array::from_fn(|a| p[a] - tc[a]);
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let theta = if r > 0.0 { (d[2] / r).acos() } else { 0.0 };
        let phi = d[1].atan2(d[0]);
        let bump: f64 = lobes
            .iter()
            .enumerate()
            .map(|(k, &(amp, p0, p1))| {
                amp * ((k as f64 + 2.0) * theta + p0).cos() * ((k as f64 + 1.0) * phi + p1).cos()
            })
            .sum();
        let (label, mean) = if r <= radius * (1.0 + bump) {
            (TUMOR, -0.5)
        } else {
            (LIVER, 0.2)
        };
        labels[i] = label;
        data[i] = (mean + noise.sample(rng)) as f32;
    }
    let v = Volume3::new(dims, spacing, data)?.with_intensity(Intensity::Normalized);
    let m = Mask3::new(dims, spacing, labels)?;
    if m.count(TUMOR) < cfg.segmenter.min_component {
        return Err(Error::invalid(
            "generated tumor is below the component size floor",
        ));
    }
    Ok((v, m))
}

fn patient_table(cfg: &CohortConfig, rng: &mut ChaCha8Rng) -> EfficacyTable {
    let spread = Normal::new(0.0, cfg.weight_spread.max(0.0)).expect("valid sigma");
    let shared = Normal::new(0.0, cfg.response_spread.max(0.0))
        .expect("valid sigma")
        .sample(rng)
        .exp();
    let mut t = cfg.efficacy.clone();
    for w in t.weights.values_mut() {
        *w *= shared * spread.sample(rng).exp();
    }
    t.noise_scale = 0.0;
    t
}

/// Deterministic cohort of `n` patients. Gold protocols come from the
/// exhaustive oracle under each patient's own efficacy table and the planted
/// Cox model; survival depends on the gold outcome's volume change ratio.
pub fn generate_cohort(n: usize, cfg: &CohortConfig, seed: u64) -> Result<Cohort> {
    if n == 0 {
        return Err(Error::invalid("cohort size must be >= 1"));
    }
    cfg.efficacy.validate()?;
    cfg.vocabulary.validate()?;
    let base = ActionBase::from_vocabulary(&cfg.vocabulary);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let patient_seeds: Vec<u64> = (0..n).map(|_| master.random()).collect();
    let cox = planted_cox();

    let drafted: Vec<(Volume3, Mask3, EfficacyTable, ActionCombo, FeatureVector)> = patient_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let (pre, mask) = synthesize_scan(cfg, &mut rng)?;
            let table = patient_table(cfg, &mut rng);
            let world = WorldModel {
                efficacy: table.clone(),
                segmenter: cfg.segmenter,
                cox: cox.clone(),
            };
            let search = ExplorationConfig {
                seed: s,
                ..cfg.gold_search
            };
            let plan = exhaustive_oracle(&pre, &mask, &base, &world, &search)?;
            let gold = cfg.vocabulary.resolve(&plan.combo)?;
            let ev = world.evaluate(&pre, &mask, &gold, &base, 1, s)?;
            let post_mask = segment_post(&ev.states[0].volume, &mask, &cfg.segmenter)?;
            let f = extract_features(&pre, &mask, &ev.states[0].volume, &post_mask)?;
            Ok((pre, mask, table, gold, f))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: Error| e.context("generating cohort"))?;

    let rates: Vec<f64> = drafted
        .iter()
        .map(|d| cfg.base_hazard * (cfg.hazard_k * d.4.volume_change_ratio).exp())
        .collect();
    let tau = censoring_horizon(&rates, cfg.censoring);
    let patients = drafted
        .into_iter()
        .zip(rates)
        .enumerate()
        .map(|(i, ((pre, mask, efficacy, gold, f), rate))| {
            let t = -(1.0 - master.random::<f64>()).ln() / rate;
            let c = if tau.is_finite() {
                master.random::<f64>() * tau
            } else {
                f64::INFINITY
            };
            let (time, event) = if c < t { (c, false) } else { (t, true) };
            SyntheticPatient {
                id: format!("p{i:03}"),
                report: render_combo(&gold),
                survival: SurvivalRecord::new(time.max(1e-6), event, f.to_vec()),
                pre,
                mask,
                gold,
                efficacy,
                gold_features: f,
            }
        })
        .collect();
    Ok(Cohort {
        seed,
        config: cfg.clone(),
        patients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub f1: f64,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
}

fn metrics_of(pred: &BTreeSet<&str>, gold: &BTreeSet<&str>) -> Result<SetMetrics> {
    if gold.is_empty() {
        return Err(Error::invalid("gold set is empty"));
    }
    let inter = pred.intersection(gold).count() as f64;
    let union = pred.union(gold).count() as f64;
    let precision = if pred.is_empty() {
        0.0
    } else {
        inter / pred.len() as f64
    };
    let recall = inter / gold.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(SetMetrics {
        f1,
        jaccard: inter / union,
        precision,
        recall,
    })
}

/// Precision, recall, F1 and Jaccard over pooled unit names.
pub fn set_metrics(pred: &ActionCombo, gold: &ActionCombo) -> Result<SetMetrics> {
    let p: BTreeSet<&str> = pred.units().map(|u| u.name.as_str()).collect();
    let g: BTreeSet<&str> = gold.units().map(|u| u.name.as_str()).collect();
    metrics_of(&p, &g)
}

/// Set metrics over plain name sets.
pub fn set_metrics_names(pred: &[String], gold: &[String]) -> Result<SetMetrics> {
    let p: BTreeSet<&str> = pred.iter().map(String::as_str).collect();
    let g: BTreeSet<&str> = gold.iter().map(String::as_str).collect();
    metrics_of(&p, &g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Planner {
    Explorer(ExplorationConfig),
    Oracle(ExplorationConfig),
    /// Uniform draw over the rule-valid combos within the horizons.
    Random {
        drug_horizon: usize,
        embolic_horizon: usize,
        seed: u64,
    },
}

impl Planner {
    pub fn name(&self) -> &'static str {
        match self {
            Planner::Explorer(_) => "explorer",
            Planner::Oracle(_) => "oracle",
            Planner::Random { .. } => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub id: String,
    pub predicted: ComboNames,
    pub gold: ComboNames,
    pub f1: f64,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub planner: String,
    pub n_patients: usize,
    pub f1: f64,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
    /// Means restricted to drugs and to embolics.
    pub per_category: BTreeMap<String, SetMetrics>,
    pub c_index: Option<f64>,
    pub mse_vs_true_risk: Option<f64>,
    pub rows: Vec<PatientRow>,
    pub failures: Vec<PatientFailure>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs `planner` on every patient with that patient's own efficacy table
/// and scores the result against the gold protocol.
pub fn benchmark(
    cohort: &Cohort,
    planner: &Planner,
    cox: &CoxModel,
    out: Option<&Path>,
) -> Result<MetricsReport> {
    if cohort.patients.is_empty() {
        return Err(Error::invalid("cohort is empty"));
    }
    let vocab = &cohort.config.vocabulary;
    let base = ActionBase::from_vocabulary(vocab);
    let outcomes: Vec<Result<(ActionCombo, f64)>> = cohort
        .patients
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let world = WorldModel {
                efficacy: p.efficacy.clone(),
                segmenter: cohort.config.segmenter,
                cox: cox.clone(),
            };
            match planner {
                Planner::Explorer(cfg) => {
                    let plan = explore(&p.pre, &p.mask, "maximize survival", &base, &world, cfg)?;
                    Ok((vocab.resolve(&plan.combo)?, plan.score))
                }
                Planner::Oracle(cfg) => {
                    let plan = exhaustive_oracle(&p.pre, &p.mask, &base, &world, cfg)?;
                    Ok((vocab.resolve(&plan.combo)?, plan.score))
                }
                Planner::Random {
                    drug_horizon,
                    embolic_horizon,
                    seed,
                } => {
                    let cfg = ExplorationConfig {
                        drug_horizon: *drug_horizon,
                        embolic_horizon: *embolic_horizon,
                        ..ExplorationConfig::default()
                    };
                    let combos = enumerate_combos(&base, &cfg)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                    let pick = combos.choose(&mut rng).ok_or(Error::DeadEnd {
                        phase: "random".into(),
                        step: 0,
                        beam: 0,
                    })?;
                    let ev = world.evaluate(&p.pre, &p.mask, pick, &base, 1, *seed)?;
                    Ok((pick.clone(), ev.mean_risk))
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut records = Vec::new();
    let mut cat: BTreeMap<String, Vec<SetMetrics>> = BTreeMap::new();
    for (p, outcome) in cohort.patients.iter().zip(outcomes) {
        match outcome {
            Ok((pred, risk)) => {
                let m = set_metrics(&pred, &p.gold)?;
                let (pn, gn) = (pred.to_names(), p.gold.to_names());
                for (key, pp, gg) in [
                    ("drugs", &pn.drugs, &gn.drugs),
                    ("embolics", &pn.embolics, &gn.embolics),
                ] {
                    if !gg.is_empty() {
                        cat.entry(key.to_string())
                            .or_default()
                            .push(set_metrics_names(pp, gg)?);
                    }
                }
                rows.push(PatientRow {
                    id: p.id.clone(),
                    predicted: pn,
                    gold: gn,
                    f1: m.f1,
                    jaccard: m.jaccard,
                    precision: m.precision,
                    recall: m.recall,
                    risk,
                });
                records.push(p.survival.clone());
            }
            Err(e) => {
                log::warn!("patient {} failed: {e}", p.id);
                failures.push(PatientFailure {
                    id: p.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let risks: Vec<f64> = rows.iter().map(|r| r.risk).collect();
    let per_category = cat
        .into_iter()
        .map(|(k, v)| {
            let m = SetMetrics {
                f1: mean(v.iter().map(|m| m.f1)),
                jaccard: mean(v.iter().map(|m| m.jaccard)),
                precision: mean(v.iter().map(|m| m.precision)),
                recall: mean(v.iter().map(|m| m.recall)),
            };
            (k, m)
        })
        .collect();
    let report = MetricsReport {
        planner: planner.name().to_string(),
        n_patients: cohort.patients.len(),
        f1: mean(rows.iter().map(|r| r.f1)),
        jaccard: mean(rows.iter().map(|r| r.jaccard)),
        precision: mean(rows.iter().map(|r| r.precision)),
        recall: mean(rows.iter().map(|r| r.recall)),
        per_category,
        c_index: concordance_index(&risks, &records).ok(),
        mse_vs_true_risk: if risks.is_empty() {
            None
        } else {
            risk_mse(&risks, &records).ok()
        },
        rows,
        failures,
    };
    if let Some(path) = out {
        write_report(path, &report)?;
    }
    Ok(report)
}

/// Writes `<path>` as JSON and the per-patient rows next to it as CSV.
pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    let mut w = csv::Writer::from_path(path.with_extension("csv"))?;
    w.write_record([
        "id",
        "predicted",
        "gold",
        "f1",
        "jaccard",
        "precision",
        "recall",
        "risk",
    ])?;
    for r in &report.rows {
        let join = |c: &ComboNames| {
            c.drugs
                .iter()
                .chain(&c.embolics)
                .cloned()
                .collect::<Vec<_>>()
                .join("|")
        };
        w.write_record([
            r.id.clone(),
            join(&r.predicted),
            join(&r.gold),
            r.f1.to_string(),
            r.jaccard.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.risk.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PatientMeta {
    id: String,
    gold: ComboNames,
    efficacy: EfficacyTable,
    features: FeatureVector,
    time_months: f64,
    event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CohortMeta {
    seed: u64,
    n: usize,
    config: CohortConfig,
    patients: Vec<PatientMeta>,
}

/// Writes `cohort.json`, `pNNN/ct` and `pNNN/mask` MVOL pairs, `reports.csv`
/// and `survival.csv` under `dir`.
pub fn save_cohort(dir: &Path, cohort: &Cohort) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = CohortMeta {
        seed: cohort.seed,
        n: cohort.patients.len(),
        config: cohort.config.clone(),
        patients: cohort
            .patients
            .iter()
            .map(|p| PatientMeta {
                id: p.id.clone(),
                gold: p.gold.to_names(),
                efficacy: p.efficacy.clone(),
                features: p.gold_features,
                time_months: p.survival.time,
                event: p.survival.event,
            })
            .collect(),
    };
    std::fs::write(
        dir.join("cohort.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    for p in &cohort.patients {
        let pd = dir.join(&p.id);
        std::fs::create_dir_all(&pd)?;
        io::write_volume(&pd.join("ct"), &p.pre)?;
        io::write_mask(&pd.join("mask"), &p.mask)?;
    }
    let mut w = csv::Writer::from_path(dir.join("reports.csv"))?;
    w.write_record(["id", "report", "os_months", "status"])?;
    for p in &cohort.patients {
        w.write_record([
            p.id.clone(),
            p.report.clone(),
            format!("{}", p.survival.time),
            (p.survival.event as u8).to_string(),
        ])?;
    }
    w.flush()?;
    let ids: Vec<String> = cohort.patients.iter().map(|p| p.id.clone()).collect();
    crate::survival::write_survival_csv(
        &dir.join("survival.csv"),
        &ids,
        &cohort.records(),
        &FEATURE_NAMES,
    )?;
    Ok(())
}

/// Loads one patient's pre-treatment pair from `pNNN/`.
pub fn load_patient_scan(patient_dir: &Path) -> Result<(Volume3, Mask3)> {
    let v = io::read_volume(&patient_dir.join("ct"))
        .map_err(|e| e.context(format!("patient {}", patient_dir.display())))?;
    let m = io::read_mask(&patient_dir.join("mask"))
        .map_err(|e| e.context(format!("patient {}", patient_dir.display())))?;
    m.check_pair(&v)?;
    Ok((v, m))
}

/// A patient directory plus whatever its enclosing cohort records about it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPatient {
    pub pre: Volume3,
    pub mask: Mask3,
    pub efficacy: Option<EfficacyTable>,
    pub gold: Option<ComboNames>,
    pub config: Option<CohortConfig>,
}

/// Loads `pNNN/` and, when the parent directory holds a `cohort.json`
/// listing it, that patient's efficacy table and gold protocol.
pub fn load_patient(patient_dir: &Path) -> Result<LoadedPatient> {
    let (pre, mask) = load_patient_scan(patient_dir)?;
    let mut out = LoadedPatient {
        pre,
        mask,
        efficacy: None,
        gold: None,
        config: None,
    };
    let (Some(parent), Some(id)) = (patient_dir.parent(), patient_dir.file_name()) else {
        return Ok(out);
    };
    let meta_path = parent.join("cohort.json");
    if !meta_path.exists() {
        return Ok(out);
    }
    let meta: CohortMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
        .map_err(|e| Error::from(e).context(format!("reading {}", meta_path.display())))?;
    if let Some(pm) = meta.patients.into_iter().find(|p| p.id.as_str() == id) {
        out.efficacy = Some(pm.efficacy);
        out.gold = Some(pm.gold);
        out.config = Some(meta.config);
    }
    Ok(out)
}

pub fn load_cohort(dir: &Path) -> Result<Cohort> {
    let text = std::fs::read_to_string(dir.join("cohort.json")).map_err(|e| {
        Error::from(e).context(format!("reading {}", dir.join("cohort.json").display()))
    })?;
    let meta: CohortMeta = serde_json::from_str(&text)?;
    let reports: BTreeMap<String, String> = {
        let mut r = csv::Reader::from_path(dir.join("reports.csv"))?;
        r.records()
            .map(|row| row.map(|row| (row[0].to_string(), row[1].to_string())))
            .collect::<Result<_, _>>()?
    };
    let patients = meta
        .patients
        .into_iter()
        .map(|pm| {
            let (pre, mask) = load_patient_scan(&dir.join(&pm.id))?;
            Ok(SyntheticPatient {
                gold: meta.config.vocabulary.resolve(&pm.gold)?,
                report: reports.get(&pm.id).cloned().unwrap_or_default(),
                survival: SurvivalRecord::new(pm.time_months, pm.event, pm.features.to_vec()),
                gold_features: pm.features,
                efficacy: pm.efficacy,
                id: pm.id,
                pre,
                mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort {
        seed: meta.seed,
        config: meta.config,
        patients,
    })
}
