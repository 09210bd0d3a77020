use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::actions::{ActionCombo, ActionKind, Vocabulary};
use crate::error::{Error, Result};
use crate::voxel::Volume3;

pub const EMBEDDING_DIM: usize = 64;
const KEYWORD_DIM: usize = 128;
const UNIT_DIM: usize = 32;
const CONCEPT_DIM: usize = 32;

const UNIT_PROJECTION_SEED: u64 = 0x5EED_0001;
const CONCEPT_PROJECTION_SEED: u64 = 0x5EED_0002;
const OUTPUT_PROJECTION_SEED: u64 = 0x5EED_0003;

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn gaussian_vec(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>()
}

fn keyword_embedding(word: &str) -> Vec<f64> {
    gaussian_vec(fnv1a(word), KEYWORD_DIM, 1.0 / (KEYWORD_DIM as f64).sqrt())
}

/// Row-major `rows x cols` projection.
struct Projection {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
}

impl Projection {
    fn seeded(seed: u64, rows: usize, cols: usize) -> Self {
        Projection {
            rows,
            cols,
            w: gaussian_vec(seed, rows * cols, 1.0 / (cols.max(1) as f64).sqrt()),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.w[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboEmbedding {
    /// Unit-norm combo condition.
    pub vector: Vec<f64>,
    /// Projected per-unit embeddings in canonical order.
    pub components: Vec<Vec<f64>>,
    pub concept: Vec<f64>,
}

/// Deterministic combo encoder. Keyword embeddings are hash-seeded; the
/// projections are fixed seeded Gaussian matrices.
pub struct ActionEncoder {
    keywords: Vec<String>,
    slots: usize,
    unit_proj: Projection,
    concept_proj: Projection,
    out_proj: Projection,
}

impl ActionEncoder {
    pub fn new(vocab: &Vocabulary) -> Self {
        let keywords: Vec<String> = [ActionKind::Drug, ActionKind::Embolic]
            .into_iter()
            .flat_map(|k| vocab.entries(k).iter().map(|e| e.name.to_lowercase()))
            .collect();
        let slots = keywords.len();
        ActionEncoder {
            unit_proj: Projection::seeded(UNIT_PROJECTION_SEED, UNIT_DIM, KEYWORD_DIM),
            concept_proj: Projection::seeded(CONCEPT_PROJECTION_SEED, CONCEPT_DIM, slots),
            out_proj: Projection::seeded(
                OUTPUT_PROJECTION_SEED,
                EMBEDDING_DIM,
                slots * UNIT_DIM + CONCEPT_DIM,
            ),
            keywords,
            slots,
        }
    }

    pub fn encode(&self, combo: &ActionCombo) -> Result<ComboEmbedding> {
        if combo.is_empty() {
            return Err(Error::invalid("cannot encode an empty combo"));
        }
        if combo.len() > self.slots {
            return Err(Error::invalid(format!(
                "combo has {} units, encoder holds {}",
                combo.len(),
                self.slots
            )));
        }
        let mut concat = vec![0.0; self.slots * UNIT_DIM + CONCEPT_DIM];
        let mut indicator = vec![0.0; self.slots];
        let mut components = Vec::with_capacity(combo.len());
        for (slot, unit) in combo.units().enumerate() {
            let name = unit.name.to_lowercase();
            let words: Vec<&str> = name.split_whitespace().collect();
            let mut phi = vec![0.0; KEYWORD_DIM];
            for w in &words {
                for (p, e) in phi.iter_mut().zip(keyword_embedding(w)) {
                    *p += e / words.len() as f64;
                }
            }
            let sub = self.unit_proj.apply(&phi);
            concat[slot * UNIT_DIM..(slot + 1) * UNIT_DIM].copy_from_slice(&sub);
            components.push(sub);
            if let Some(k) = self.keywords.iter().position(|k| *k == name) {
                indicator[k] = 1.0;
            }
        }
        let concept = self.concept_proj.apply(&indicator);
        concat[self.slots * UNIT_DIM..].copy_from_slice(&concept);
        let mut vector = self.out_proj.apply(&concat);
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("degenerate combo embedding"));
        }
        vector.iter_mut().for_each(|v| *v /= norm);
        Ok(ComboEmbedding {
            vector,
            components,
            concept,
        })
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok(dot / (na * nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastiveMode {
    /// Positive term included in the denominator.
    #[default]
    Infonce,
    /// Positive term subtracted from the negatives' sum.
    PaperLiteral,
}

/// Contrastive loss given the positive and negative similarities.
pub fn contrastive_loss_from_similarities(
    s_pos: f64,
    s_neg: &[f64],
    delta: f64,
    mode: ContrastiveMode,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be > 0, got {delta}"
        )));
    }
    if s_neg.is_empty() {
        return Err(Error::invalid("at least one negative is required"));
    }
    let pos = s_pos / delta;
    match mode {
        ContrastiveMode::Infonce => {
            let m = s_neg.iter().map(|s| s / delta).fold(pos, f64::max);
            let sum = (pos - m).exp() + s_neg.iter().map(|s| (s / delta - m).exp()).sum::<f64>();
            Ok(m + sum.ln() - pos)
        }
        ContrastiveMode::PaperLiteral => {
            let denom = s_neg.iter().map(|s| (s / delta).exp()).sum::<f64>() - pos.exp();
            if !(denom > 0.0) {
                return Err(Error::NonPositiveDenominator(denom));
            }
            Ok(denom.ln() - pos)
        }
    }
}

/// Contrastive loss over cosine similarities of the anchor to a positive and
/// to each negative.
pub fn combo_contrastive_loss(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    delta: f64,
    mode: ContrastiveMode,
) -> Result<f64> {
    let s_pos = cosine_similarity(anchor, positive)?;
    let s_neg = negatives
        .iter()
        .map(|n| cosine_similarity(anchor, n))
        .collect::<Result<Vec<_>>>()?;
    contrastive_loss_from_similarities(s_pos, &s_neg, delta, mode)
}

/// Block-average pooling by `factor` along every axis, flattened x-fastest.
pub fn pool_volume(v: &Volume3, factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::invalid("pooling factor must be >= 1"));
    }
    let n = v.dims().0;
    let out: [usize; 3] = std::array::from_fn(|a| n[a].div_ceil(factor));
    let mut sum = vec![0.0; out[0] * out[1] * out[2]];
    let mut cnt = vec![0usize; sum.len()];
    for z in 0..n[2] {
        for y in 0..n[1] {
            for x in 0..n[0] {
                let o = x / factor + out[0] * (y / factor + out[1] * (z / factor));
                sum[o] += v.get(x, y, z) as f64;
                cnt[o] += 1;
            }
        }
    }
    Ok(sum.iter().zip(&cnt).map(|(s, &c)| s / c as f64).collect())
}
