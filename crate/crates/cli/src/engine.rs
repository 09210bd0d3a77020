//! Patient loading and single-combo evaluation shared by the CLI and the
//! service.

use std::path::Path;

use anyhow::{Context, Result};
use mewm_core::actions::{check_rules, ActionBase, RuleScope, Vocabulary};
use mewm_core::cohort::{default_efficacy_table, load_patient, planted_cox, LoadedPatient};
use mewm_core::dynamics::{AttenuationParams, EfficacyTable};
use mewm_core::explorer::{Evaluation, WorldModel};
use mewm_core::segmenter::segment_post;
use mewm_core::{ComboNames, CoxModel, Error, Mask3};
use serde::{Deserialize, Serialize};

pub struct PatientContext {
    pub patient: LoadedPatient,
    pub vocabulary: Vocabulary,
    pub world: WorldModel,
}

/// Explicit overrides win, then whatever the enclosing cohort recorded,
/// then the built-in defaults.
pub fn patient_context(
    dir: &Path,
    efficacy: Option<EfficacyTable>,
    vocabulary: Option<Vocabulary>,
    cox: Option<CoxModel>,
) -> Result<PatientContext> {
    let patient =
        load_patient(dir).with_context(|| format!("loading patient {}", dir.display()))?;
    let cohort_cfg = patient.config.clone();
    let vocabulary = vocabulary
        .or_else(|| cohort_cfg.as_ref().map(|c| c.vocabulary.clone()))
        .unwrap_or_default();
    let efficacy = efficacy
        .or_else(|| patient.efficacy.clone())
        .unwrap_or_else(default_efficacy_table);
    let mut world = WorldModel::new(efficacy, cox.unwrap_or_else(planted_cox));
    if let Some(c) = cohort_cfg {
        world.segmenter = c.segmenter;
    }
    Ok(PatientContext {
        patient,
        vocabulary,
        world,
    })
}

pub fn load_cox(path: Option<&Path>) -> Result<Option<CoxModel>> {
    path.map(|p| CoxModel::load(p).with_context(|| format!("loading model {}", p.display())))
        .transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub combo: ComboNames,
    pub mean_risk: f64,
    pub replica_risks: Vec<f64>,
    pub params: Vec<AttenuationParams>,
}

/// Evaluates a complete protocol; rule violations surface as
/// [`Error::RuleViolation`].
pub fn simulate_combo(
    ctx: &PatientContext,
    names: &ComboNames,
    replicas: usize,
    seed: u64,
) -> std::result::Result<(SimulationSummary, Evaluation, Mask3), Error> {
    let combo = ctx.vocabulary.resolve(names)?;
    let violations = check_rules(&combo, &ctx.vocabulary.rules, RuleScope::Complete);
    if !violations.is_empty() {
        return Err(Error::RuleViolation(violations));
    }
    let base = ActionBase::from_vocabulary(&ctx.vocabulary);
    let ev = ctx.world.evaluate(
        &ctx.patient.pre,
        &ctx.patient.mask,
        &combo,
        &base,
        replicas,
        seed,
    )?;
    let post_mask = segment_post(
        &ev.states[0].volume,
        &ctx.patient.mask,
        &ctx.world.segmenter,
    )?;
    let summary = SimulationSummary {
        combo: combo.to_names(),
        mean_risk: ev.mean_risk,
        replica_risks: ev.replica_risks.clone(),
        params: ev.states.iter().map(|s| s.params).collect(),
    };
    Ok((summary, ev, post_mask))
}
