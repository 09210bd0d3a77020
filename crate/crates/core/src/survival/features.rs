use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::{Mask3, Volume3, TUMOR};

pub const FEATURE_NAMES: [&str; 7] = [
    "tumor_volume_pre",
    "tumor_volume_post",
    "volume_change_ratio",
    "mean_intensity_pre",
    "mean_intensity_post",
    "hyperdense_fraction_post",
    "tumor_liver_ratio_pre",
];

/// Index of `volume_change_ratio` in [`FeatureVector::to_vec`].
pub const VOLUME_CHANGE_RATIO: usize = 2;

const VOLUME_EPS_ML: f64 = 0.01;
const HYPERDENSE: f32 = 0.6;

/// Handcrafted radiomics of a (pre, post) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub tumor_volume_pre: f64,
    pub tumor_volume_post: f64,
    pub volume_change_ratio: f64,
    pub mean_intensity_pre: f64,
    pub mean_intensity_post: f64,
    pub hyperdense_fraction_post: f64,
    /// Tumor share of the organ volume before treatment.
    pub tumor_liver_ratio_pre: f64,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.tumor_volume_pre,
            self.tumor_volume_post,
            self.volume_change_ratio,
            self.mean_intensity_pre,
            self.mean_intensity_post,
            self.hyperdense_fraction_post,
            self.tumor_liver_ratio_pre,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        let &[a, b, c, d, e, f, g] = x else {
            return Err(Error::invalid(format!(
                "expected 7 features, got {}",
                x.len()
            )));
        };
        Ok(FeatureVector {
            tumor_volume_pre: a,
            tumor_volume_post: b,
            volume_change_ratio: c,
            mean_intensity_pre: d,
            mean_intensity_post: e,
            hyperdense_fraction_post: f,
            tumor_liver_ratio_pre: g,
        })
    }
}

fn tumor_stats(v: &Volume3, m: &Mask3) -> (usize, f64, usize) {
    let (mut n, mut sum, mut hyper) = (0usize, 0.0, 0usize);
    for (&x, &l) in v.data().iter().zip(m.data()) {
        if l == TUMOR {
            n += 1;
            sum += x as f64;
            hyper += (x >= HYPERDENSE) as usize;
        }
    }
    (n, if n > 0 { sum / n as f64 } else { 0.0 }, hyper)
}

pub fn extract_features(
    pre: &Volume3,
    pre_mask: &Mask3,
    post: &Volume3,
    post_mask: &Mask3,
) -> Result<FeatureVector> {
    pre_mask.check_pair(pre)?;
    post_mask.check_pair(post)?;
    if pre.dims() != post.dims() {
        return Err(Error::invalid("pre and post volumes differ in dims"));
    }
    let (n_pre, mean_pre, _) = tumor_stats(pre, pre_mask);
    if n_pre == 0 {
        return Err(Error::NoTumor);
    }
    let (n_post, mean_post, hyper) = tumor_stats(post, post_mask);
    let ml_pre = pre_mask.spacing().voxel_ml();
    let ml_post = post_mask.spacing().voxel_ml();
    let v_pre = n_pre as f64 * ml_pre;
    let v_post = n_post as f64 * ml_post;
    let organ = pre_mask.organ().count();
    Ok(FeatureVector {
        tumor_volume_pre: v_pre,
        tumor_volume_post: v_post,
        volume_change_ratio: (v_post + VOLUME_EPS_ML) / (v_pre + VOLUME_EPS_ML),
        mean_intensity_pre: mean_pre,
        mean_intensity_post: mean_post,
        hyperdense_fraction_post: if n_post > 0 {
            hyper as f64 / n_post as f64
        } else {
            0.0
        },
        tumor_liver_ratio_pre: n_pre as f64 / organ as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{Dims, Intensity, Spacing, LIVER};

    fn pair(tumor: usize) -> (Volume3, Mask3) {
        let dims = Dims::new(2000, 1, 1);
        let s = Spacing::iso(1.0);
        let m = Mask3::new(
            dims,
            s,
            (0..2000)
                .map(|i| if i < tumor { TUMOR } else { LIVER })
                .collect(),
        )
        .unwrap();
        let v = Volume3::new(
            dims,
            s,
            (0..2000)
                .map(|i| if i < tumor { 0.9 } else { 0.2 })
                .collect(),
        )
        .unwrap()
        .with_intensity(Intensity::Normalized);
        (v, m)
    }

    #[test]
    fn identical_post_ratio_one() {
        let (v, m) = pair(1000);
        let f = extract_features(&v, &m, &v, &m).unwrap();
        assert_eq!(f.volume_change_ratio, 1.0);
        assert_eq!(f.hyperdense_fraction_post, 1.0);
        assert_eq!(f.tumor_volume_pre, 1.0);
        assert_eq!(f.tumor_liver_ratio_pre, 0.5);
    }

    #[test]
    fn halved_and_empty_post() {
        let (v, m) = pair(1000);
        let (v2, m2) = pair(500);
        let f = extract_features(&v, &m, &v2, &m2).unwrap();
        assert!((f.volume_change_ratio - 0.51 / 1.01).abs() < 1e-12);
        let (v0, m0) = pair(0);
        let g = extract_features(&v, &m, &v0, &m0).unwrap();
        assert!((g.volume_change_ratio - 0.01 / 1.01).abs() < 1e-12);
        assert!(matches!(
            extract_features(&v0, &m0, &v, &m),
            Err(Error::NoTumor)
        ));
    }

    #[test]
    fn slice_round_trip() {
        let (v, m) = pair(10);
        let f = extract_features(&v, &m, &v, &m).unwrap();
        assert_eq!(FeatureVector::from_slice(&f.to_vec()).unwrap(), f);
        assert!(FeatureVector::from_slice(&[1.0]).is_err());
    }
}
