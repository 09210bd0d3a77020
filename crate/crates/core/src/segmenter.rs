//! Rule-based post-treatment tumor segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::{
    binary_close, label_components, BinaryGrid, Dims, Mask3, StructuringElement, Volume3,
    BACKGROUND, LIVER, TUMOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub hyperdense_threshold: f64,
    pub hypodense_threshold: f64,
    pub min_component: usize,
    pub closing_radius: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            hyperdense_threshold: 0.6,
            hypodense_threshold: -0.2,
            min_component: 300,
            closing_radius: 1,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hypodense_threshold < self.hyperdense_threshold) {
            return Err(Error::invalid(
                "hypodense threshold must be below the hyperdense threshold",
            ));
        }
        Ok(())
    }
}

/// Tumor = liver voxels that are hyperdense (oil) or hypodense (necrosis or
/// viable lesion), closed and filtered by component size. Every other organ
/// voxel is labelled liver.
pub fn segment_post(volume: &Volume3, liver: &Mask3, cfg: &SegmenterConfig) -> Result<Mask3> {
    cfg.validate()?;
    liver.check_pair(volume)?;
    let organ = liver.organ();
    if organ.is_empty() {
        return Err(Error::EmptyLiver);
    }
    let dims = liver.dims();
    let data = volume.data();
    let cand = BinaryGrid::from_fn(dims, |i| {
        let v = data[i] as f64;
        organ.get(i) && (v >= cfg.hyperdense_threshold || v <= cfg.hypodense_threshold)
    });
    let mut out: Vec<u8> = organ
        .bits()
        .iter()
        .map(|&b| if b { LIVER } else { BACKGROUND })
        .collect();
    let Some((lo, hi)) = cand.bounding_box() else {
        return Mask3::new(dims, liver.spacing(), out);
    };

    // closing cannot reach further than twice its radius from the candidates
    let margin = 2 * cfg.closing_radius;
    let clo: [usize; 3] = std::array::from_fn(|a| lo[a].saturating_sub(margin));
    let chi: [usize; 3] = std::array::from_fn(|a| (hi[a] + margin).min(dims.0[a] - 1));
    let cdims = Dims::new(
        chi[0] - clo[0] + 1,
        chi[1] - clo[1] + 1,
        chi[2] - clo[2] + 1,
    );
    let to_full = |ci: usize| {
        let c = cdims.coords(ci);
        dims.index(c[0] + clo[0], c[1] + clo[1], c[2] + clo[2])
    };
    let mut crop = BinaryGrid::from_fn(cdims, |ci| cand.get(to_full(ci)));
    if cfg.closing_radius > 0 {
        let crop_organ = BinaryGrid::from_fn(cdims, |ci| organ.get(to_full(ci)));
        crop = binary_close(&crop, &StructuringElement::ball(cfg.closing_radius)?).and(&crop_organ);
    }
    for comp in label_components(&crop) {
        if comp.len() < cfg.min_component {
            break;
        }
        for &ci in &comp.voxels {
            out[to_full(ci)] = TUMOR;
        }
    }
    Mask3::new(dims, liver.spacing(), out)
}

/// Dice overlap of `label` between two masks; 1.0 when both are empty.
pub fn dice(a: &Mask3, b: &Mask3, label: u8) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "mask dims differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (ia, ib) = (x == label, y == label);
        na += ia as usize;
        nb += ib as usize;
        both += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{Intensity, Spacing};

    fn liver_block(n: usize) -> (Volume3, Mask3) {
        let dims = Dims::new(n, n, n);
        let s = Spacing::iso(1.0);
        (
            Volume3::filled(dims, s, 0.0)
                .unwrap()
                .with_intensity(Intensity::Normalized),
            Mask3::new(dims, s, vec![LIVER; dims.len()]).unwrap(),
        )
    }

    #[test]
    fn uniform_liver_has_no_tumor() {
        let (v, m) = liver_block(12);
        let out = segment_post(&v, &m, &SegmenterConfig::default()).unwrap();
        assert_eq!(out.count(TUMOR), 0);
        assert_eq!(out.count(LIVER), m.count(LIVER));
    }

    #[test]
    fn recovers_planted_blob() {
        let (mut v, m) = liver_block(24);
        let mut planted = m.clone();
        // 8 x 8 x 8 = 512 voxels
        for z in 8..16 {
            for y in 8..16 {
                for x in 8..16 {
                    v.set(x, y, z, 0.9);
                    planted.set(x, y, z, TUMOR);
                }
            }
        }
        let out = segment_post(&v, &m, &SegmenterConfig::default()).unwrap();
        assert!(dice(&out, &planted, TUMOR).unwrap() >= 0.9);
    }

    #[test]
    fn small_blob_filtered() {
        let (mut v, m) = liver_block(16);
        for z in 4..8 {
            for y in 4..9 {
                for x in 4..9 {
                    v.set(x, y, z, -0.5);
                }
            }
        }
        let out = segment_post(&v, &m, &SegmenterConfig::default()).unwrap();
        assert_eq!(out.count(TUMOR), 0);
    }

    #[test]
    fn empty_liver_is_an_error() {
        let (v, m) = liver_block(4);
        let empty = Mask3::empty(m.dims(), m.spacing()).unwrap();
        assert!(matches!(
            segment_post(&v, &empty, &SegmenterConfig::default()),
            Err(Error::EmptyLiver)
        ));
    }

    #[test]
    fn dice_values() {
        let dims = Dims::new(200, 1, 1);
        let s = Spacing::iso(1.0);
        let mk = |r: std::ops::Range<usize>| {
            Mask3::new(
                dims,
                s,
                (0..200)
                    .map(|i| if r.contains(&i) { TUMOR } else { LIVER })
                    .collect(),
            )
            .unwrap()
        };
        assert_eq!(dice(&mk(0..100), &mk(0..100), TUMOR).unwrap(), 1.0);
        assert_eq!(dice(&mk(0..100), &mk(100..200), TUMOR).unwrap(), 0.0);
        assert_eq!(dice(&mk(0..100), &mk(50..150), TUMOR).unwrap(), 0.5);
        assert_eq!(dice(&mk(0..0), &mk(0..0), TUMOR).unwrap(), 1.0);
        let other = Mask3::empty(Dims::new(2, 1, 1), s).unwrap();
        assert!(dice(&mk(0..1), &other, TUMOR).is_err());
    }
}
