use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ActionCombo, ActionKind, ActionUnit, DoseUnit, Vocabulary};
use crate::error::{Error, Result};

/// Treatment-response grade 1..=4; higher means a stronger curative effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AttenuationLevel(u8);

impl AttenuationLevel {
    pub const MIN: AttenuationLevel = AttenuationLevel(1);
    pub const MAX: AttenuationLevel = AttenuationLevel(4);

    pub fn new(l: u8) -> Result<Self> {
        if (1..=4).contains(&l) {
            Ok(AttenuationLevel(l))
        } else {
            Err(Error::invalid(format!(
                "attenuation level must be in 1..=4, got {l}"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = AttenuationLevel> {
        (1..=4).map(AttenuationLevel)
    }
}

impl TryFrom<u8> for AttenuationLevel {
    type Error = Error;
    fn try_from(l: u8) -> Result<Self> {
        Self::new(l)
    }
}

impl From<AttenuationLevel> for u8 {
    fn from(l: AttenuationLevel) -> u8 {
        l.0
    }
}

impl fmt::Display for AttenuationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Outcome phrase to attenuation level.
pub const OUTCOME_LEXICON: &[(&str, u8)] = &[
    ("reduced", 2),
    ("occluded", 3),
    ("satisfactory", 3),
    ("disappear", 4),
    ("disappeared", 4),
];

fn lexicon_level(word: &str) -> Option<u8> {
    let w = word.to_ascii_lowercase();
    OUTCOME_LEXICON
        .iter()
        .find(|(p, _)| *p == w)
        .map(|&(_, l)| l)
}

/// Maximum level over matched phrases; 1 when nothing matches.
pub fn infer_attenuation_level<S: AsRef<str>>(phrases: &[S]) -> AttenuationLevel {
    let l = phrases
        .iter()
        .filter_map(|p| lexicon_level(p.as_ref()))
        .max()
        .unwrap_or(1);
    AttenuationLevel(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedAction {
    /// Matched units in order of first mention.
    pub units: Vec<ActionUnit>,
    pub outcome_phrases: Vec<String>,
    /// Present iff at least one outcome phrase matched.
    pub attenuation_level: Option<AttenuationLevel>,
}

impl ExtractedAction {
    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn combo(&self) -> Result<ActionCombo> {
        ActionCombo::from_units(self.units.iter().cloned())
    }
}

fn dose_after() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d+(?:\.\d+)?)\s*(mg|ml)\b").unwrap())
}

// number, unit, then at most one modifier word ("ultra-liquid") before the name
fn dose_before() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:^|[^\w.])(\d+(?:\.\d+)?)\s*(mg|ml)\s+(?:[a-z][a-z-]*\s+)?$").unwrap()
    })
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Start offsets of whole-word occurrences of `needle` in `hay`.
fn word_matches(hay: &str, needle: &str) -> Vec<usize> {
    let bytes = hay.as_bytes();
    hay.match_indices(needle)
        .map(|(i, _)| i)
        .filter(|&i| {
            let end = i + needle.len();
            (i == 0 || !is_word_byte(bytes[i - 1]))
                && (end == bytes.len() || !is_word_byte(bytes[end]))
        })
        .collect()
}

fn capture_dose(caps: &regex::Captures<'_>) -> Option<(f64, DoseUnit)> {
    let amount: f64 = caps.get(1)?.as_str().parse().ok()?;
    let unit = match caps.get(2)?.as_str() {
        "mg" => DoseUnit::Mg,
        _ => DoseUnit::Ml,
    };
    (amount > 0.0).then_some((amount, unit))
}

/// Keyword extraction from a free-text TACE report.
pub fn parse_report(text: &str, vocab: &Vocabulary) -> Result<ExtractedAction> {
    if text.trim().is_empty() {
        return Err(Error::invalid("report text is empty"));
    }
    let lower = text.to_ascii_lowercase();

    let mut found: Vec<(usize, ActionUnit)> = Vec::new();
    for kind in [ActionKind::Drug, ActionKind::Embolic] {
        for entry in vocab.entries(kind) {
            let needle = entry.name.to_ascii_lowercase();
            let hits = word_matches(&lower, &needle);
            let Some(&first) = hits.first() else { continue };
            let mut unit =
                ActionUnit::new(kind, entry.name.clone()).with_tags(entry.tags.iter().cloned());
            let dose = hits.iter().find_map(|&start| {
                let end = start + needle.len();
                dose_after()
                    .captures(&lower[end..])
                    .and_then(|c| capture_dose(&c))
                    .or_else(|| {
                        dose_before()
                            .captures(&lower[..start])
                            .and_then(|c| capture_dose(&c))
                    })
            });
            if let Some((amount, u)) = dose {
                unit = unit.with_dose(amount, u);
            }
            found.push((first, unit));
        }
    }
    found.sort_by_key(|(pos, _)| *pos);

    let outcome_phrases: Vec<String> = lower
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| lexicon_level(w).is_some())
        .map(str::to_string)
        .collect();
    let attenuation_level =
        (!outcome_phrases.is_empty()).then(|| infer_attenuation_level(&outcome_phrases));

    Ok(ExtractedAction {
        units: found.into_iter().map(|(_, u)| u).collect(),
        outcome_phrases,
        attenuation_level,
    })
}

/// Templated report sentence for a combo; `parse_report` recovers its units.
pub fn render_combo(combo: &ActionCombo) -> String {
    let mut parts = Vec::new();
    for d in combo.drugs() {
        parts.push(match d.dose {
            Some(dose) => format!("{} {} was infused through the catheter", d.name, dose),
            None => format!("{} was infused through the catheter", d.name),
        });
    }
    for e in combo.embolics() {
        parts.push(match e.dose {
            Some(dose) => format!("{} {} was slowly injected for embolization", dose, e.name),
            None => format!("{} was used to embolize the tumor-feeding branches", e.name),
        });
    }
    let mut s = parts.join("; ");
    s.push('.');
    s
}
