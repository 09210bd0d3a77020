use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActionCombo, ActionKind, ActionUnit, ClinicalRule, ComboNames, RulePredicate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub name: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl VocabEntry {
    fn new(name: &str, tags: &[&str]) -> Self {
        VocabEntry {
            name: name.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }
}

/// Known drugs and embolics plus the clinical rules that constrain them.
/// Serialized as the vocabulary + rules config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub drugs: Vec<VocabEntry>,
    pub embolics: Vec<VocabEntry>,
    #[serde(default)]
    pub rules: Vec<ClinicalRule>,
}

impl Default for Vocabulary {
    /// The nine chemotherapy agents and three embolic materials seen in the
    /// HCC-TACE reports, with the platinum and completeness rules.
    fn default() -> Self {
        Vocabulary {
            drugs: vec![
                VocabEntry::new("Raltitrexed", &["antimetabolite"]),
                VocabEntry::new("Epirubicin", &["anthracycline"]),
                VocabEntry::new("Oxaliplatin", &["platinum"]),
                VocabEntry::new("Lobaplatin", &["platinum"]),
                VocabEntry::new("Idarubicin", &["anthracycline"]),
                VocabEntry::new("THP", &["anthracycline"]),
                VocabEntry::new("Cisplatin", &["platinum"]),
                VocabEntry::new("Doxorubicin", &["anthracycline"]),
                VocabEntry::new("Mitomycin", &["antitumor-antibiotic"]),
            ],
            embolics: vec![
                VocabEntry::new("Lipiodol", &["oil"]),
                VocabEntry::new("Gelatin Sponge", &["particle"]),
                VocabEntry::new("LC beads", &["particle", "drug-eluting"]),
            ],
            rules: vec![
                ClinicalRule {
                    id: "platinum-pair".into(),
                    description: "multiple platinum-based agents must not be combined".into(),
                    predicate: RulePredicate::ForbiddenTagPair {
                        tag_a: "platinum".into(),
                        tag_b: "platinum".into(),
                    },
                },
                ClinicalRule {
                    id: "required-kind".into(),
                    description: "a completed protocol needs a drug and an embolic".into(),
                    predicate: RulePredicate::RequiredKind {
                        kinds: vec![ActionKind::Drug, ActionKind::Embolic],
                    },
                },
            ],
        }
    }
}

impl Vocabulary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let v: Vocabulary = serde_json::from_str(&text)?;
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in self.drugs.iter().chain(&self.embolics) {
            if e.name.trim().is_empty() {
                return Err(Error::invalid("vocabulary entry with empty name"));
            }
            if !seen.insert(e.name.to_lowercase()) {
                return Err(Error::invalid(format!(
                    "duplicate vocabulary entry {}",
                    e.name
                )));
            }
        }
        let mut ids = std::collections::HashSet::new();
        for r in &self.rules {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate rule id {}", r.id)));
            }
        }
        Ok(())
    }

    pub fn entries(&self, kind: ActionKind) -> &[VocabEntry] {
        match kind {
            ActionKind::Drug => &self.drugs,
            ActionKind::Embolic => &self.embolics,
        }
    }

    /// Case-insensitive lookup returning a dose-less unit with its tags.
    pub fn unit(&self, name: &str) -> Option<ActionUnit> {
        let lname = name.trim().to_lowercase();
        [ActionKind::Drug, ActionKind::Embolic]
            .into_iter()
            .find_map(|kind| {
                self.entries(kind)
                    .iter()
                    .find(|e| e.name.to_lowercase() == lname)
                    .map(|e| {
                        ActionUnit::new(kind, e.name.clone()).with_tags(e.tags.iter().cloned())
                    })
            })
    }

    pub fn unit_of_kind(&self, name: &str, kind: ActionKind) -> Option<ActionUnit> {
        self.unit(name).filter(|u| u.kind == kind)
    }

    pub fn units(&self, kind: ActionKind) -> Vec<ActionUnit> {
        self.entries(kind)
            .iter()
            .map(|e| ActionUnit::new(kind, e.name.clone()).with_tags(e.tags.iter().cloned()))
            .collect()
    }

    /// Resolves a name list into a combo; each name must be in the
    /// vocabulary under the stated kind.
    pub fn resolve(&self, names: &ComboNames) -> Result<ActionCombo> {
        let mut combo = ActionCombo::new();
        for (list, kind) in [
            (&names.drugs, ActionKind::Drug),
            (&names.embolics, ActionKind::Embolic),
        ] {
            for n in list {
                let u = self
                    .unit_of_kind(n, kind)
                    .ok_or_else(|| Error::UnknownUnit(n.clone()))?;
                combo.insert(u)?;
            }
        }
        Ok(combo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let v = Vocabulary::default();
        assert_eq!(v.drugs.len(), 9);
        assert_eq!(v.embolics.len(), 3);
        v.validate().unwrap();
    }

    #[test]
    fn config_round_trip() {
        let v = Vocabulary::default();
        let text = serde_json::to_string(&v).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["rules"][0]["type"], "forbidden-tag-pair");
        assert_eq!(json["rules"][0]["params"]["tag_a"], "platinum");
        let back: Vocabulary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn resolve_checks_kind_and_name() {
        let v = Vocabulary::default();
        let ok = ComboNames {
            drugs: vec!["cisplatin".into()],
            embolics: vec!["Lipiodol".into()],
        };
        assert_eq!(
            v.resolve(&ok).unwrap().names(),
            vec!["Cisplatin", "Lipiodol"]
        );
        let wrong_kind = ComboNames {
            drugs: vec!["Lipiodol".into()],
            embolics: vec![],
        };
        assert!(matches!(v.resolve(&wrong_kind), Err(Error::UnknownUnit(_))));
        let unknown = ComboNames {
            drugs: vec!["FooMab".into()],
            embolics: vec![],
        };
        assert!(matches!(v.resolve(&unknown), Err(Error::UnknownUnit(_))));
    }

    #[test]
    fn rejects_duplicates() {
        let mut v = Vocabulary::default();
        v.drugs.push(VocabEntry::new("cisplatin", &[]));
        assert!(v.validate().is_err());
    }
}
