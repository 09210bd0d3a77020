use serde::{Deserialize, Serialize};

use super::{ActionCombo, ActionKind};

/// Declarative rule body, serialized as `{"type": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "kebab-case")]
pub enum RulePredicate {
    /// Two distinct units carrying `tag_a` and `tag_b` must not co-occur.
    ForbiddenTagPair { tag_a: String, tag_b: String },
    /// At most `max` units may carry `tag`.
    MaxCountPerTag { tag: String, max: usize },
    /// A completed protocol must contain every listed kind.
    RequiredKind { kinds: Vec<ActionKind> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalRule {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub predicate: RulePredicate,
}

/// Partial combos are mid-search; completeness rules only apply to
/// finished protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleScope {
    Partial,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule_id: String,
    pub message: String,
}

impl ClinicalRule {
    pub fn evaluate(&self, combo: &ActionCombo, scope: RuleScope) -> Option<RuleViolation> {
        let message = match &self.predicate {
            RulePredicate::ForbiddenTagPair { tag_a, tag_b } => {
                let units: Vec<_> = combo.units().collect();
                units.iter().enumerate().find_map(|(i, u)| {
                    units.iter().enumerate().find_map(|(j, v)| {
                        (i != j && u.has_tag(tag_a) && v.has_tag(tag_b))
                            .then(|| format!("{} ({tag_a}) with {} ({tag_b})", u.name, v.name))
                    })
                })
            }
            RulePredicate::MaxCountPerTag { tag, max } => {
                let n = combo.units().filter(|u| u.has_tag(tag)).count();
                (n > *max).then(|| format!("{n} units tagged {tag}, at most {max} allowed"))
            }
            RulePredicate::RequiredKind { kinds } => {
                if scope == RuleScope::Partial {
                    None
                } else {
                    let missing: Vec<String> = kinds
                        .iter()
                        .filter(|k| match k {
                            ActionKind::Drug => combo.n_drugs() == 0,
                            ActionKind::Embolic => combo.n_embolics() == 0,
                        })
                        .map(|k| k.to_string())
                        .collect();
                    (!missing.is_empty()).then(|| format!("missing {}", missing.join(" and ")))
                }
            }
        };
        message.map(|message| RuleViolation {
            rule_id: self.id.clone(),
            message,
        })
    }
}

/// Every rule the combo breaks; empty iff it satisfies all of them.
pub fn check_rules(
    combo: &ActionCombo,
    rules: &[ClinicalRule],
    scope: RuleScope,
) -> Vec<RuleViolation> {
    rules
        .iter()
        .filter_map(|r| r.evaluate(combo, scope))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{ComboNames, Vocabulary};

    fn combo(v: &Vocabulary, drugs: &[&str], embolics: &[&str]) -> ActionCombo {
        v.resolve(&ComboNames {
            drugs: drugs.iter().map(|s| s.to_string()).collect(),
            embolics: embolics.iter().map(|s| s.to_string()).collect(),
        })
        .unwrap()
    }

    #[test]
    fn platinum_pair() {
        let v = Vocabulary::default();
        let c = combo(&v, &["Cisplatin", "Oxaliplatin"], &["Lipiodol"]);
        let got = check_rules(&c, &v.rules, RuleScope::Complete);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].rule_id, "platinum-pair");
    }

    #[test]
    fn valid_combo() {
        let v = Vocabulary::default();
        let c = combo(&v, &["Cisplatin"], &["Lipiodol"]);
        assert!(check_rules(&c, &v.rules, RuleScope::Complete).is_empty());
    }

    #[test]
    fn completeness_only_when_complete() {
        let v = Vocabulary::default();
        let c = combo(&v, &["Cisplatin"], &[]);
        assert!(check_rules(&c, &v.rules, RuleScope::Partial).is_empty());
        let got = check_rules(&c, &v.rules, RuleScope::Complete);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].rule_id, "required-kind");
    }

    #[test]
    fn max_count() {
        let v = Vocabulary::default();
        let rule = ClinicalRule {
            id: "anthra".into(),
            description: String::new(),
            predicate: RulePredicate::MaxCountPerTag {
                tag: "anthracycline".into(),
                max: 1,
            },
        };
        let ok = combo(&v, &["Epirubicin", "Cisplatin"], &[]);
        let bad = combo(&v, &["Epirubicin", "THP"], &[]);
        assert!(rule.evaluate(&ok, RuleScope::Partial).is_none());
        assert!(rule.evaluate(&bad, RuleScope::Partial).is_some());
    }

    #[test]
    fn rule_json_shape() {
        let r: ClinicalRule = serde_json::from_str(
            r#"{"id":"x","type":"max-count-per-tag","params":{"tag":"particle","max":1}}"#,
        )
        .unwrap();
        assert_eq!(
            r.predicate,
            RulePredicate::MaxCountPerTag {
                tag: "particle".into(),
                max: 1
            }
        );
        assert_eq!(r.description, "");
    }
}
