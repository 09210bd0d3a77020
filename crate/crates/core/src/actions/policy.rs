use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ActionKind, ActionUnit, ClinicalRule, ComboNames, Vocabulary};
use crate::error::{Error, Result};
use crate::voxel::{Mask3, LIVER, TUMOR};

/// What the policy sees of the patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationSummary {
    pub tumor_volume_ml: f64,
    pub liver_volume_ml: f64,
}

impl ObservationSummary {
    pub fn from_mask(m: &Mask3) -> Self {
        let ml = m.spacing().voxel_ml();
        let tumor = m.count(TUMOR) as f64;
        ObservationSummary {
            tumor_volume_ml: tumor * ml,
            liver_volume_ml: (m.count(LIVER) as f64 + tumor) * ml,
        }
    }
}

/// Candidate drugs and embolics (sizes D and E) and the rules for a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBase {
    pub drugs: Vec<ActionUnit>,
    pub embolics: Vec<ActionUnit>,
    pub rules: Vec<ClinicalRule>,
}

impl ActionBase {
    pub fn new(
        drugs: Vec<ActionUnit>,
        embolics: Vec<ActionUnit>,
        rules: Vec<ClinicalRule>,
    ) -> Result<Self> {
        let b = ActionBase {
            drugs,
            embolics,
            rules,
        };
        b.validate()?;
        Ok(b)
    }

    /// Everything in the vocabulary.
    pub fn from_vocabulary(v: &Vocabulary) -> Self {
        ActionBase {
            drugs: v.units(ActionKind::Drug),
            embolics: v.units(ActionKind::Embolic),
            rules: v.rules.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.drugs.is_empty() || self.embolics.is_empty() {
            return Err(Error::invalid(
                "action base needs at least one drug and one embolic",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for u in self.drugs.iter().chain(&self.embolics) {
            if !seen.insert(u.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate unit {} in action base",
                    u.name
                )));
            }
        }
        if self.drugs.iter().any(|u| u.kind != ActionKind::Drug)
            || self.embolics.iter().any(|u| u.kind != ActionKind::Embolic)
        {
            return Err(Error::invalid(
                "action base unit filed under the wrong kind",
            ));
        }
        Ok(())
    }

    pub fn units(&self, kind: ActionKind) -> &[ActionUnit] {
        match kind {
            ActionKind::Drug => &self.drugs,
            ActionKind::Embolic => &self.embolics,
        }
    }

    pub fn d(&self) -> usize {
        self.drugs.len()
    }

    pub fn e(&self) -> usize {
        self.embolics.len()
    }
}

/// Optional language-model service that narrows the action base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub url: String,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub vocabulary: Vocabulary,
    /// Particulate embolics are only offered for tumors at least this large.
    #[serde(default = "default_particle_min")]
    pub particle_min_tumor_ml: f64,
    #[serde(default)]
    pub endpoint: Option<LlmEndpoint>,
}

fn default_particle_min() -> f64 {
    0.25
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            vocabulary: Vocabulary::default(),
            particle_min_tumor_ml: default_particle_min(),
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyWarning {
    pub code: String,
    pub message: String,
}

impl PolicyWarning {
    fn new(code: &str, message: impl Into<String>) -> Self {
        PolicyWarning {
            code: code.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    Builtin,
    Endpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReply {
    pub base: ActionBase,
    pub source: PolicySource,
    pub warnings: Vec<PolicyWarning>,
}

fn builtin_base(obs: &ObservationSummary, cfg: &PolicyConfig) -> Result<ActionBase> {
    let v = &cfg.vocabulary;
    let drugs = v.units(ActionKind::Drug);
    let all_embolics = v.units(ActionKind::Embolic);
    let mut embolics: Vec<ActionUnit> = all_embolics
        .iter()
        .filter(|u| !u.has_tag("particle") || obs.tumor_volume_ml >= cfg.particle_min_tumor_ml)
        .cloned()
        .collect();
    if embolics.is_empty() {
        embolics = all_embolics;
    }
    ActionBase::new(drugs, embolics, v.rules.clone())
}

/// Request text sent to the language-model endpoint.
pub fn render_prompt(obs: &ObservationSummary, goal: &str, candidates: &ActionBase) -> String {
    let list = |units: &[ActionUnit]| {
        units
            .iter()
            .map(|u| u.name.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let rules = candidates
        .rules
        .iter()
        .map(|r| format!("- {}: {}", r.id, r.description))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "You are assisting an interventional radiologist planning transarterial chemoembolization (TACE) \
         for hepatocellular carcinoma.\n\
         Observation: tumor volume {:.2} ml, liver volume {:.2} ml.\n\
         Treatment goal: {goal}\n\
         Choose candidate agents only from these lists.\n\
         Chemotherapy drugs: {}\n\
         Embolization materials: {}\n\
         Clinical rules:\n{rules}\n\
         Answer with JSON only, for example: {{\"drug\": [\"Cisplatin\"], \"embolism\": [\"Lipiodol\"]}}",
        obs.tumor_volume_ml,
        obs.liver_volume_ml,
        list(&candidates.drugs),
        list(&candidates.embolics),
    )
}

#[derive(Serialize)]
struct EndpointRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    prompt: String,
    goal: &'a str,
    observation: &'a ObservationSummary,
    candidates: ComboNames,
}

fn query_endpoint(
    ep: &LlmEndpoint,
    req: &EndpointRequest<'_>,
) -> std::result::Result<ComboNames, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(ep.timeout_secs)))
        .build()
        .into();
    let mut resp = agent
        .post(&ep.url)
        .send_json(req)
        .map_err(|e| e.to_string())?;
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    serde_json::from_str::<ComboNames>(&text).map_err(|e| format!("malformed reply: {e}"))
}

/// Proposes the action base. The built-in policy is deterministic; when an
/// endpoint is configured its reply is validated against the vocabulary and
/// any failure falls back to the built-in choice with a warning.
pub fn propose_action_base(
    obs: &ObservationSummary,
    goal: &str,
    cfg: &PolicyConfig,
) -> Result<PolicyReply> {
    if !(obs.tumor_volume_ml > 0.0) {
        return Err(Error::invalid("observation has no tumor volume"));
    }
    cfg.vocabulary.validate()?;
    let builtin = builtin_base(obs, cfg)?;
    let Some(ep) = &cfg.endpoint else {
        return Ok(PolicyReply {
            base: builtin,
            source: PolicySource::Builtin,
            warnings: vec![],
        });
    };

    let req = EndpointRequest {
        model: ep.model.as_deref(),
        prompt: render_prompt(obs, goal, &builtin),
        goal,
        observation: obs,
        candidates: ComboNames {
            drugs: builtin.drugs.iter().map(|u| u.name.clone()).collect(),
            embolics: builtin.embolics.iter().map(|u| u.name.clone()).collect(),
        },
    };
    let reply = match query_endpoint(ep, &req) {
        Ok(r) => r,
        Err(msg) => {
            log::warn!("policy endpoint failed, using built-in policy: {msg}");
            return Ok(PolicyReply {
                base: builtin,
                source: PolicySource::Builtin,
                warnings: vec![PolicyWarning::new("endpoint-fallback", msg)],
            });
        }
    };

    let mut warnings = Vec::new();
    let mut pick = |names: &[String], kind: ActionKind| -> Vec<ActionUnit> {
        let mut out: Vec<ActionUnit> = Vec::new();
        for n in names {
            match builtin
                .units(kind)
                .iter()
                .find(|u| u.name.eq_ignore_ascii_case(n.trim()))
            {
                Some(u) if !out.iter().any(|o| o.name == u.name) => out.push(u.clone()),
                Some(_) => {}
                None => warnings.push(PolicyWarning::new(
                    "unknown-unit",
                    format!("dropped unknown {kind} {n:?}"),
                )),
            }
        }
        if out.is_empty() {
            warnings.push(PolicyWarning::new(
                "empty-kind",
                format!("endpoint proposed no valid {kind}; using built-in list"),
            ));
            out = builtin.units(kind).to_vec();
        }
        out
    };
    let drugs = pick(&reply.drugs, ActionKind::Drug);
    let embolics = pick(&reply.embolics, ActionKind::Embolic);
    Ok(PolicyReply {
        base: ActionBase::new(drugs, embolics, builtin.rules.clone())?,
        source: PolicySource::Endpoint,
        warnings,
    })
}
