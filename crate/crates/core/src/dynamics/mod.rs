//! Surrogate post-treatment dynamics: efficacy lookup, morpho-Gaussian
//! attenuation of the tumor, combo embeddings and the contrastive loss.

mod attenuate;
mod encoding;

pub use attenuate::{attenuate, tumor_depth};
pub use encoding::{
    combo_contrastive_loss, contrastive_loss_from_similarities, cosine_similarity, pool_volume,
    ActionEncoder, ComboEmbedding, ContrastiveMode, EMBEDDING_DIM,
};

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{check_rules, ActionCombo, AttenuationLevel, ClinicalRule, RuleScope};
use crate::error::{Error, Result};
use crate::voxel::{io, Mask3, Volume3};

/// Per-unit efficacy weights and the mapping from summed efficacy to an
/// attenuation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyTable {
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    /// Efficacy at or above `thresholds[k]` reaches level `k + 2`.
    #[serde(default = "default_thresholds")]
    pub thresholds: [f64; 3],
    /// Multiplier for every drug after the strongest one.
    #[serde(default = "default_diminishing")]
    pub diminishing: f64,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    /// Share of the original tumor that takes up iodized oil.
    #[serde(default = "default_lipiodol")]
    pub lipiodol_fraction: f64,
    /// Necrotic share of the non-viable shell at zero efficacy; it decays as
    /// `necrosis_scale / (1 + efficacy)`.
    #[serde(default = "default_necrosis")]
    pub necrosis_scale: f64,
}

fn default_thresholds() -> [f64; 3] {
    [1.0, 2.0, 3.0]
}
fn default_diminishing() -> f64 {
    0.5
}
fn default_noise() -> f64 {
    0.05
}
fn default_lipiodol() -> f64 {
    0.1
}
fn default_necrosis() -> f64 {
    0.6
}

impl Default for EfficacyTable {
    fn default() -> Self {
        EfficacyTable {
            weights: BTreeMap::new(),
            thresholds: default_thresholds(),
            diminishing: default_diminishing(),
            noise_scale: default_noise(),
            lipiodol_fraction: default_lipiodol(),
            necrosis_scale: default_necrosis(),
        }
    }
}

impl EfficacyTable {
    pub fn with_weights<I, S>(weights: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        EfficacyTable {
            weights: weights.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, noise_scale: f64) -> Self {
        self.noise_scale = noise_scale;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let t: EfficacyTable = serde_json::from_str(&text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, w)) = self
            .weights
            .iter()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::invalid(format!(
                "efficacy weight for {k} must be finite and >= 0, got {w}"
            )));
        }
        if !self.thresholds.windows(2).all(|w| w[0] <= w[1])
            || self.thresholds.iter().any(|t| !t.is_finite())
        {
            return Err(Error::invalid(
                "efficacy thresholds must be finite and non-decreasing",
            ));
        }
        if !(0.0..=1.0).contains(&self.diminishing) {
            return Err(Error::invalid("diminishing factor must lie in [0, 1]"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid("noise_scale must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.lipiodol_fraction)
            || !(0.0..=1.0).contains(&self.necrosis_scale)
        {
            return Err(Error::invalid(
                "lipiodol_fraction and necrosis_scale must lie in [0, 1]",
            ));
        }
        if self.lipiodol_fraction + self.necrosis_scale > 1.0 {
            return Err(Error::invalid(
                "lipiodol_fraction + necrosis_scale must not exceed 1",
            ));
        }
        Ok(())
    }

    fn weight(&self, name: &str) -> Result<f64> {
        if self.weights.is_empty() {
            return Ok(0.0);
        }
        self.weights
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownUnit(name.to_string()))
    }

    /// Level reached by a scalar efficacy.
    pub fn level_for(&self, efficacy: f64) -> AttenuationLevel {
        let l = 1 + self.thresholds.iter().filter(|&&t| efficacy >= t).count() as u8;
        AttenuationLevel::new(l).expect("at most three thresholds")
    }
}

/// Knobs of one attenuation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationParams {
    pub level: AttenuationLevel,
    /// Scalar efficacy behind `level`; informational.
    #[serde(default)]
    pub efficacy: f64,
    pub erosion_radius: usize,
    pub blur_sigma: f64,
    pub lipiodol_fraction: f64,
    pub necrosis_fraction: f64,
    pub noise_scale: f64,
}

impl AttenuationParams {
    /// Level-driven kernel sizes with the given surrogate fractions.
    pub fn for_level(
        level: AttenuationLevel,
        lipiodol_fraction: f64,
        necrosis_fraction: f64,
        noise_scale: f64,
    ) -> Self {
        let l = level.get();
        AttenuationParams {
            level,
            efficacy: 0.0,
            erosion_radius: l as usize,
            blur_sigma: 0.5 * l as f64,
            lipiodol_fraction,
            necrosis_fraction,
            noise_scale,
        }
    }

    /// Leaves the scan untouched.
    pub fn identity() -> Self {
        AttenuationParams {
            level: AttenuationLevel::MIN,
            efficacy: 0.0,
            erosion_radius: 0,
            blur_sigma: 0.0,
            lipiodol_fraction: 0.0,
            necrosis_fraction: 0.0,
            noise_scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.lipiodol_fraction)
            || !frac_ok(self.necrosis_fraction)
            || self.lipiodol_fraction + self.necrosis_fraction > 1.0 + 1e-12
        {
            return Err(Error::invalid(
                "attenuation fractions must lie in [0, 1] and sum to at most 1",
            ));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) || !(self.noise_scale >= 0.0) {
            return Err(Error::invalid("blur_sigma and noise_scale must be >= 0"));
        }
        Ok(())
    }
}

/// Strongest drug counts fully, each further drug by `diminishing`,
/// embolics fully.
pub fn combo_efficacy(combo: &ActionCombo, table: &EfficacyTable) -> Result<AttenuationParams> {
    let mut drugs = combo
        .drugs()
        .map(|u| table.weight(&u.name))
        .collect::<Result<Vec<_>>>()?;
    drugs.sort_by(|a, b| b.total_cmp(a));
    let mut efficacy: f64 = drugs
        .iter()
        .enumerate()
        .map(|(i, w)| if i == 0 { *w } else { w * table.diminishing })
        .sum();
    for u in combo.embolics() {
        efficacy += table.weight(&u.name)?;
    }
    let level = table.level_for(efficacy);
    let mut p = AttenuationParams::for_level(
        level,
        table.lipiodol_fraction,
        table.necrosis_scale / (1.0 + efficacy),
        table.noise_scale,
    );
    p.efficacy = efficacy;
    Ok(p)
}

/// One synthesized post-treatment scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedState {
    pub volume: Volume3,
    /// Remaining viable tumor; the rest of the former tumor is liver.
    pub mask: Mask3,
    pub params: AttenuationParams,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    params: AttenuationParams,
    seed: u64,
}

impl SimulatedState {
    /// Writes `<stem>_ct`, `<stem>_mask` MVOL pairs and `<stem>_params.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let s = stem.to_string_lossy();
        io::write_volume(Path::new(&format!("{s}_ct")), &self.volume)?;
        io::write_mask(Path::new(&format!("{s}_mask")), &self.mask)?;
        let meta = StateMeta {
            params: self.params,
            seed: self.seed,
        };
        std::fs::write(
            format!("{s}_params.json"),
            serde_json::to_string_pretty(&meta)?,
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let s = stem.to_string_lossy();
        let volume = io::read_volume(Path::new(&format!("{s}_ct")))?;
        let mask = io::read_mask(Path::new(&format!("{s}_mask")))?;
        let meta: StateMeta =
            serde_json::from_str(&std::fs::read_to_string(format!("{s}_params.json"))?)?;
        Ok(SimulatedState {
            volume,
            mask,
            params: meta.params,
            seed: meta.seed,
        })
    }
}

/// `replicas` attenuations of the same scan with seeds `seed..seed+replicas`,
/// returned in seed order.
pub fn simulate(
    pre: &Volume3,
    mask: &Mask3,
    combo: &ActionCombo,
    table: &EfficacyTable,
    rules: &[ClinicalRule],
    replicas: usize,
    seed: u64,
) -> Result<Vec<SimulatedState>> {
    if replicas == 0 {
        return Err(Error::invalid("replica count must be at least 1"));
    }
    let violations = check_rules(combo, rules, RuleScope::Partial);
    if !violations.is_empty() {
        return Err(Error::RuleViolation(violations));
    }
    let params = combo_efficacy(combo, table)?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| attenuate(pre, mask, &params, seed.wrapping_add(i)))
        .collect()
}
