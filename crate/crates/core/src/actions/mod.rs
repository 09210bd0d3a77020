//! TACE action vocabulary, report parsing, clinical rules and the policy that
//! proposes the candidate action base.

mod policy;
mod report;
mod rules;
mod vocabulary;

pub use policy::{
    propose_action_base, render_prompt, ActionBase, LlmEndpoint, ObservationSummary, PolicyConfig,
    PolicyReply, PolicySource, PolicyWarning,
};
pub use report::{
    infer_attenuation_level, parse_report, render_combo, AttenuationLevel, ExtractedAction,
    OUTCOME_LEXICON,
};
pub use rules::{check_rules, ClinicalRule, RulePredicate, RuleScope, RuleViolation};
pub use vocabulary::{VocabEntry, Vocabulary};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Drug,
    Embolic,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Drug => "drug",
            ActionKind::Embolic => "embolic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoseUnit {
    Mg,
    Ml,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dose {
    pub amount: f64,
    pub unit: DoseUnit,
}

impl fmt::Display for Dose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = match self.unit {
            DoseUnit::Mg => "mg",
            DoseUnit::Ml => "ml",
        };
        write!(f, "{} {}", self.amount, unit)
    }
}

/// One drug or embolic agent, optionally with a dose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionUnit {
    pub kind: ActionKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dose: Option<Dose>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl ActionUnit {
    pub fn new(kind: ActionKind, name: impl Into<String>) -> Self {
        ActionUnit {
            kind,
            name: name.into(),
            dose: None,
            tags: Vec::new(),
        }
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_dose(mut self, amount: f64, unit: DoseUnit) -> Self {
        self.dose = Some(Dose { amount, unit });
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

/// A set of drugs and embolics. Units are keyed by name, so iteration is in
/// canonical (kind, name) order and duplicates are impossible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionCombo {
    drugs: BTreeMap<String, ActionUnit>,
    embolics: BTreeMap<String, ActionUnit>,
}

impl ActionCombo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_units(units: impl IntoIterator<Item = ActionUnit>) -> Result<Self> {
        let mut c = Self::new();
        for u in units {
            c.insert(u)?;
        }
        Ok(c)
    }

    /// Adds a unit; a name already present in the combo is an error.
    pub fn insert(&mut self, unit: ActionUnit) -> Result<()> {
        if self.contains(&unit.name) {
            return Err(Error::invalid(format!(
                "duplicate unit {} in combo",
                unit.name
            )));
        }
        if let Some(d) = unit.dose {
            if !(d.amount > 0.0) {
                return Err(Error::invalid(format!(
                    "dose of {} must be positive",
                    unit.name
                )));
            }
        }
        let map = match unit.kind {
            ActionKind::Drug => &mut self.drugs,
            ActionKind::Embolic => &mut self.embolics,
        };
        map.insert(unit.name.clone(), unit);
        Ok(())
    }

    pub fn with(&self, unit: ActionUnit) -> Result<Self> {
        let mut c = self.clone();
        c.insert(unit)?;
        Ok(c)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.drugs.contains_key(name) || self.embolics.contains_key(name)
    }

    pub fn drugs(&self) -> impl Iterator<Item = &ActionUnit> {
        self.drugs.values()
    }

    pub fn embolics(&self) -> impl Iterator<Item = &ActionUnit> {
        self.embolics.values()
    }

    /// Drugs then embolics, each sorted by name.
    pub fn units(&self) -> impl Iterator<Item = &ActionUnit> {
        self.drugs.values().chain(self.embolics.values())
    }

    pub fn names(&self) -> Vec<String> {
        self.units().map(|u| u.name.clone()).collect()
    }

    pub fn n_drugs(&self) -> usize {
        self.drugs.len()
    }

    pub fn n_embolics(&self) -> usize {
        self.embolics.len()
    }

    pub fn len(&self) -> usize {
        self.drugs.len() + self.embolics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_names(&self) -> ComboNames {
        ComboNames {
            drugs: self.drugs.keys().cloned().collect(),
            embolics: self.embolics.keys().cloned().collect(),
        }
    }
}

impl fmt::Display for ActionCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, n) in self.units().map(|u| &u.name).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(n)?;
        }
        f.write_str("}")
    }
}

/// Wire form of a combo: unit names only, resolved against a vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboNames {
    #[serde(default, alias = "drug")]
    pub drugs: Vec<String>,
    #[serde(default, alias = "embolism")]
    pub embolics: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_and_duplicates() {
        let mut c = ActionCombo::new();
        c.insert(ActionUnit::new(ActionKind::Embolic, "Lipiodol"))
            .unwrap();
        c.insert(ActionUnit::new(ActionKind::Drug, "Raltitrexed"))
            .unwrap();
        c.insert(ActionUnit::new(ActionKind::Drug, "Cisplatin"))
            .unwrap();
        assert_eq!(c.names(), vec!["Cisplatin", "Raltitrexed", "Lipiodol"]);
        assert!(c
            .insert(ActionUnit::new(ActionKind::Drug, "Cisplatin"))
            .is_err());
        assert_eq!(c.to_string(), "{Cisplatin, Raltitrexed, Lipiodol}");
    }

    #[test]
    fn rejects_non_positive_dose() {
        let mut c = ActionCombo::new();
        let u = ActionUnit::new(ActionKind::Drug, "Cisplatin").with_dose(0.0, DoseUnit::Mg);
        assert!(c.insert(u).is_err());
    }

    #[test]
    fn names_accept_prompt_keys() {
        let n: ComboNames =
            serde_json::from_str(r#"{"drug":["Cisplatin"],"embolism":["Lipiodol"]}"#).unwrap();
        assert_eq!(n.drugs, vec!["Cisplatin"]);
        assert_eq!(n.embolics, vec!["Lipiodol"]);
    }
}
