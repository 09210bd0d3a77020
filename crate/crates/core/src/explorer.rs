//! Beam search over TACE protocols scored by the world model, plus an
//! exhaustive oracle for small action bases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{
    check_rules, ActionBase, ActionCombo, ActionKind, ActionUnit, ComboNames, RuleScope,
};
use crate::dynamics::{simulate, EfficacyTable, SimulatedState};
use crate::error::{Error, Result};
use crate::segmenter::{segment_post, SegmenterConfig};
use crate::survival::{extract_features, CoxModel};
use crate::voxel::{Mask3, Volume3};

/// Largest combo count the oracle will enumerate.
pub const ORACLE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    #[serde(alias = "B")]
    pub beams: usize,
    #[serde(alias = "H_d")]
    pub drug_horizon: usize,
    #[serde(alias = "H_e")]
    pub embolic_horizon: usize,
    #[serde(alias = "T")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            beams: 1,
            drug_horizon: 2,
            embolic_horizon: 1,
            replicas: 1,
            seed: 0,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beams == 0
            || self.drug_horizon == 0
            || self.embolic_horizon == 0
            || self.replicas == 0
        {
            return Err(Error::invalid(
                "beams, horizons and replicas must all be >= 1",
            ));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.drug_horizon + self.embolic_horizon
    }
}

/// Dynamics, segmentation and survival scoring bundled as one evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub efficacy: EfficacyTable,
    #[serde(default)]
    pub segmenter: SegmenterConfig,
    pub cox: CoxModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_risk: f64,
    pub replica_risks: Vec<f64>,
    pub states: Vec<SimulatedState>,
}

impl WorldModel {
    pub fn new(efficacy: EfficacyTable, cox: CoxModel) -> Self {
        WorldModel {
            efficacy,
            segmenter: SegmenterConfig::default(),
            cox,
        }
    }

    /// Simulates `replicas` outcomes of `combo`, segments each and scores it
    /// against the pre-treatment pair.
    pub fn evaluate(
        &self,
        pre: &Volume3,
        mask: &Mask3,
        combo: &ActionCombo,
        base: &ActionBase,
        replicas: usize,
        seed: u64,
    ) -> Result<Evaluation> {
        let states = simulate(
            pre,
            mask,
            combo,
            &self.efficacy,
            &base.rules,
            replicas,
            seed,
        )
        .map_err(|e| e.context(format!("simulating {combo}")))?;
        let replica_risks = states
            .par_iter()
            .map(|s| {
                let post_mask = segment_post(&s.volume, mask, &self.segmenter)?;
                let f = extract_features(pre, mask, &s.volume, &post_mask)?;
                self.cox.risk_score(&f.to_vec())
            })
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.context(format!("scoring {combo}")))?;
        let mean_risk = replica_risks.iter().sum::<f64>() / replica_risks.len() as f64;
        Ok(Evaluation {
            mean_risk,
            replica_risks,
            states,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub mean_risk: f64,
    pub replica_risks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamStep {
    pub beam: usize,
    pub candidates: Vec<CandidateScore>,
    pub chosen: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    /// Beam whose plan was overwritten (highest risk).
    pub replaced: usize,
    /// Beam that was copied (lowest risk).
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub kind: ActionKind,
    /// Candidates of the best beam at this step.
    pub candidates: Vec<CandidateScore>,
    pub chosen: String,
    pub replaced_beam: Option<Replacement>,
    pub beams: Vec<BeamStep>,
    pub scores_before_replacement: Vec<f64>,
    pub scores_after_replacement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboScore {
    pub combo: ComboNames,
    pub mean_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub combo: ComboNames,
    pub score: f64,
    #[serde(default)]
    pub goal: String,
    pub steps: Vec<StepRecord>,
    /// Every combo the oracle scored, in enumeration order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evaluated: Vec<ComboScore>,
}

#[derive(Clone)]
struct Beam {
    combo: ActionCombo,
    state: Option<SimulatedState>,
    score: f64,
}

fn valid_candidates<'a>(
    base: &'a ActionBase,
    combo: &ActionCombo,
    kind: ActionKind,
) -> Vec<&'a ActionUnit> {
    let mut c: Vec<&ActionUnit> = base
        .units(kind)
        .iter()
        .filter(|u| !combo.contains(&u.name))
        .filter(|u| {
            combo
                .with((*u).clone())
                .is_ok_and(|next| check_rules(&next, &base.rules, RuleScope::Partial).is_empty())
        })
        .collect();
    c.sort_by(|a, b| a.name.cmp(&b.name));
    c
}

/// Beam search: each step extends every beam with the candidate of lowest
/// mean simulated risk, then overwrites the worst beam with the best one.
pub fn explore(
    pre: &Volume3,
    mask: &Mask3,
    goal: &str,
    base: &ActionBase,
    world: &WorldModel,
    cfg: &ExplorationConfig,
) -> Result<Plan> {
    cfg.validate()?;
    base.validate()?;
    mask.check_pair(pre)?;
    if mask.count(crate::voxel::TUMOR) == 0 {
        return Err(Error::NoTumor);
    }

    let mut beams: Vec<Beam> = (0..cfg.beams)
        .map(|_| Beam {
            combo: ActionCombo::new(),
            state: None,
            score: f64::NAN,
        })
        .collect();
    let mut steps = Vec::with_capacity(cfg.horizon());
    let phases = [
        (ActionKind::Drug, cfg.drug_horizon),
        (ActionKind::Embolic, cfg.embolic_horizon),
    ];
    let mut step_no = 0;
    for (kind, horizon) in phases {
        for _ in 0..horizon {
            step_no += 1;
            let results: Vec<Result<(Beam, BeamStep)>> = beams
                .par_iter()
                .enumerate()
                .map(|(b, beam)| {
                    let cands = valid_candidates(base, &beam.combo, kind);
                    if cands.is_empty() {
                        return Err(Error::DeadEnd {
                            phase: kind.to_string(),
                            step: step_no,
                            beam: b,
                        });
                    }
                    let seed = cfg.seed.wrapping_add(b as u64);
                    let scored: Vec<(ActionCombo, Evaluation)> = cands
                        .par_iter()
                        .map(|u| {
                            let next = beam.combo.with((*u).clone())?;
                            let ev = world.evaluate(pre, mask, &next, base, cfg.replicas, seed)?;
                            Ok((next, ev))
                        })
                        .collect::<Result<_>>()?;
                    // candidates are sorted by name, so the first minimum wins ties
                    let best = (0..scored.len())
                        .min_by(|&a, &b| {
                            scored[a]
                                .1
                                .mean_risk
                                .total_cmp(&scored[b].1.mean_risk)
                                .then(a.cmp(&b))
                        })
                        .expect("non-empty");
                    let candidates = cands
                        .iter()
                        .zip(&scored)
                        .map(|(u, (_, ev))| CandidateScore {
                            name: u.name.clone(),
                            mean_risk: ev.mean_risk,
                            replica_risks: ev.replica_risks.clone(),
                        })
                        .collect();
                    let (combo, ev) = scored.into_iter().nth(best).expect("in range");
                    let score = ev.mean_risk;
                    let record = BeamStep {
                        beam: b,
                        candidates,
                        chosen: cands[best].name.clone(),
                        score,
                    };
                    Ok((
                        Beam {
                            combo,
                            state: ev.states.into_iter().next(),
                            score,
                        },
                        record,
                    ))
                })
                .collect();
            let mut records = Vec::with_capacity(beams.len());
            for (b, r) in results.into_iter().enumerate() {
                let (beam, rec) = r?;
                beams[b] = beam;
                records.push(rec);
            }

            let before: Vec<f64> = beams.iter().map(|b| b.score).collect();
            let min_idx = (0..before.len())
                .min_by(|&a, &b| before[a].total_cmp(&before[b]).then(a.cmp(&b)))
                .unwrap();
            let max_idx = (0..before.len())
                .max_by(|&a, &b| before[a].total_cmp(&before[b]).then(a.cmp(&b)))
                .unwrap();
            let replaced_beam = (max_idx != min_idx).then(|| {
                beams[max_idx] = beams[min_idx].clone();
                Replacement {
                    replaced: max_idx,
                    source: min_idx,
                }
            });
            let best = &records[min_idx];
            steps.push(StepRecord {
                step: step_no,
                kind,
                candidates: best.candidates.clone(),
                chosen: best.chosen.clone(),
                replaced_beam,
                scores_before_replacement: before,
                scores_after_replacement: beams.iter().map(|b| b.score).collect(),
                beams: records,
            });
        }
    }

    let best = (0..beams.len())
        .min_by(|&a, &b| beams[a].score.total_cmp(&beams[b].score).then(a.cmp(&b)))
        .expect("at least one beam");
    let beam = &beams[best];
    let violations = check_rules(&beam.combo, &base.rules, RuleScope::Complete);
    if !violations.is_empty() {
        return Err(Error::RuleViolation(violations));
    }
    debug_assert!(beam.state.is_some());
    Ok(Plan {
        combo: beam.combo.to_names(),
        score: beam.score,
        goal: goal.to_string(),
        steps,
        evaluated: vec![],
    })
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn subsets(units: &[ActionUnit], max: usize) -> Vec<Vec<ActionUnit>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(
        units: &[ActionUnit],
        start: usize,
        max: usize,
        cur: &mut Vec<ActionUnit>,
        out: &mut Vec<Vec<ActionUnit>>,
    ) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == max {
            return;
        }
        for i in start..units.len() {
            cur.push(units[i].clone());
            rec(units, i + 1, max, cur, out);
            cur.pop();
        }
    }
    rec(units, 0, max, &mut cur, &mut out);
    out
}

/// Number of combos with 1..=H_d drugs and 1..=H_e embolics before rule
/// filtering.
pub fn oracle_space_size(base: &ActionBase, cfg: &ExplorationConfig) -> usize {
    let count = |n: usize, h: usize| {
        (1..=h.min(n))
            .map(|k| binomial(n, k))
            .fold(0usize, usize::saturating_add)
    };
    count(base.d(), cfg.drug_horizon).saturating_mul(count(base.e(), cfg.embolic_horizon))
}

/// Every rule-valid combo with at most the configured number of drugs and
/// embolics (at least one of each).
pub fn enumerate_combos(base: &ActionBase, cfg: &ExplorationConfig) -> Result<Vec<ActionCombo>> {
    let size = oracle_space_size(base, cfg);
    if size > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            count: size,
            limit: ORACLE_LIMIT,
        });
    }
    let ds = subsets(&base.drugs, cfg.drug_horizon);
    let es = subsets(&base.embolics, cfg.embolic_horizon);
    let mut out = Vec::new();
    for d in &ds {
        for e in &es {
            let combo = ActionCombo::from_units(d.iter().chain(e).cloned())?;
            if check_rules(&combo, &base.rules, RuleScope::Complete).is_empty() {
                out.push(combo);
            }
        }
    }
    Ok(out)
}

/// Brute-force argmin over all valid combos. Ties prefer the larger combo,
/// then the lexicographically smaller name list.
pub fn exhaustive_oracle(
    pre: &Volume3,
    mask: &Mask3,
    base: &ActionBase,
    world: &WorldModel,
    cfg: &ExplorationConfig,
) -> Result<Plan> {
    cfg.validate()?;
    base.validate()?;
    let combos = enumerate_combos(base, cfg)?;
    if combos.is_empty() {
        return Err(Error::DeadEnd {
            phase: "oracle".into(),
            step: 0,
            beam: 0,
        });
    }
    let scores: Vec<f64> = combos
        .par_iter()
        .map(|c| {
            world
                .evaluate(pre, mask, c, base, cfg.replicas, cfg.seed)
                .map(|e| e.mean_risk)
        })
        .collect::<Result<_>>()?;
    let best = (0..combos.len())
        .min_by(|&a, &b| {
            scores[a]
                .total_cmp(&scores[b])
                .then(combos[b].len().cmp(&combos[a].len()))
                .then(combos[a].names().cmp(&combos[b].names()))
        })
        .expect("non-empty");
    Ok(Plan {
        combo: combos[best].to_names(),
        score: scores[best],
        goal: String::new(),
        steps: vec![],
        evaluated: combos
            .iter()
            .zip(&scores)
            .map(|(c, &s)| ComboScore {
                combo: c.to_names(),
                mean_risk: s,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Vocabulary;

    #[test]
    fn binomials() {
        assert_eq!(binomial(9, 2), 36);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(12, 0), 1);
    }

    #[test]
    fn enumeration_respects_rules() {
        let base = ActionBase::from_vocabulary(&Vocabulary::default());
        let cfg = ExplorationConfig {
            drug_horizon: 2,
            embolic_horizon: 1,
            ..Default::default()
        };
        assert_eq!(oracle_space_size(&base, &cfg), (9 + 36) * 3);
        let combos = enumerate_combos(&base, &cfg).unwrap();
        // three platinum pairs are forbidden
        assert_eq!(combos.len(), (9 + 36 - 3) * 3);
        assert!(combos
            .iter()
            .all(|c| c.n_drugs() >= 1 && c.n_embolics() >= 1));
    }

    #[test]
    fn too_large() {
        let mut v = Vocabulary::default();
        for i in 0..20 {
            v.drugs.push(crate::actions::VocabEntry {
                name: format!("Drug{i}"),
                tags: vec![],
            });
        }
        let base = ActionBase::from_vocabulary(&v);
        let cfg = ExplorationConfig {
            drug_horizon: 6,
            embolic_horizon: 3,
            ..Default::default()
        };
        assert!(matches!(
            enumerate_combos(&base, &cfg),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn config_aliases() {
        let c: ExplorationConfig =
            serde_json::from_str(r#"{"B":4,"H_d":2,"H_e":1,"T":3,"seed":9}"#).unwrap();
        assert_eq!(
            c,
            ExplorationConfig {
                beams: 4,
                drug_horizon: 2,
                embolic_horizon: 1,
                replicas: 3,
                seed: 9
            }
        );
    }
}
