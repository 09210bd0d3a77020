use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AttenuationParams, SimulatedState};
use crate::error::{Error, Result};
use crate::voxel::{gaussian_blur, Dims, Intensity, Mask3, Volume3, LIVER, TUMOR};

const HYPERDENSE: f64 = 0.9;
const HYPODENSE: f64 = -0.4;

const FACES: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// City-block distance from each tumor voxel to the nearest in-grid
/// non-tumor voxel (0 outside the tumor, `u32::MAX` if the tumor fills the
/// grid). Eroding by an L1 ball of radius `r` keeps exactly `depth > r`.
pub fn tumor_depth(mask: &Mask3) -> Vec<u32> {
    let dims = mask.dims();
    let data = mask.data();
    let mut depth = vec![0u32; data.len()];
    let mut queue = VecDeque::new();
    for (i, &l) in data.iter().enumerate() {
        if l != TUMOR {
            continue;
        }
        let c = dims.coords(i);
        let edge = FACES
            .iter()
            .any(|&d| dims.offset(c, d).is_some_and(|j| data[j] != TUMOR));
        if edge {
            depth[i] = 1;
            queue.push_back(i);
        } else {
            depth[i] = u32::MAX;
        }
    }
    while let Some(i) = queue.pop_front() {
        let c = dims.coords(i);
        for &d in &FACES {
            if let Some(j) = dims.offset(c, d) {
                if depth[j] == u32::MAX {
                    depth[j] = depth[i] + 1;
                    queue.push_back(j);
                }
            }
        }
    }
    depth
}

fn centroid(dims: Dims, voxels: &[usize]) -> [f64; 3] {
    let mut s = [0.0; 3];
    for &i in voxels {
        let c = dims.coords(i);
        for a in 0..3 {
            s[a] += c[a] as f64;
        }
    }
    s.map(|v| v / voxels.len() as f64)
}

fn dist2(dims: Dims, i: usize, p: [f64; 3]) -> f64 {
    let c = dims.coords(i);
    (0..3).map(|a| (c[a] as f64 - p[a]).powi(2)).sum()
}

/// Synthesizes one post-treatment scan: erode the tumor to its viable core,
/// resorb the shell into liver, blur the tumor box, then lay down iodized oil
/// in the innermost tumor and a necrotic rim around the viable core.
pub fn attenuate(
    pre: &Volume3,
    mask: &Mask3,
    params: &AttenuationParams,
    seed: u64,
) -> Result<SimulatedState> {
    mask.check_pair(pre)?;
    params.validate()?;
    if pre.intensity() != Intensity::Normalized {
        return Err(Error::invalid(
            "attenuate expects a window-normalized volume",
        ));
    }
    let dims = mask.dims();
    let tumor: Vec<usize> = (0..dims.len())
        .filter(|&i| mask.data()[i] == TUMOR)
        .collect();
    if tumor.is_empty() {
        return Err(Error::NoTumor);
    }

    let depth = tumor_depth(mask);
    let center = centroid(dims, &tumor);
    // innermost first; ties by distance to the centroid, then index
    let mut ranked = tumor.clone();
    ranked.sort_by(|&a, &b| {
        depth[b]
            .cmp(&depth[a])
            .then(dist2(dims, a, center).total_cmp(&dist2(dims, b, center)))
            .then(a.cmp(&b))
    });

    let r = params.erosion_radius as u32;
    let mut viable = vec![false; dims.len()];
    let mut n_viable = 0;
    for &i in &tumor {
        if params.erosion_radius == 0 || depth[i] > r {
            viable[i] = true;
            n_viable += 1;
        }
    }
    if n_viable == 0 {
        let core = *tumor
            .iter()
            .min_by(|&&a, &&b| {
                dist2(dims, a, center)
                    .total_cmp(&dist2(dims, b, center))
                    .then(a.cmp(&b))
            })
            .expect("non-empty");
        viable[core] = true;
    }

    let n_lipiodol = (params.lipiodol_fraction * tumor.len() as f64).floor() as usize;
    let lipiodol = &ranked[..n_lipiodol];
    let mut is_lipiodol = vec![false; dims.len()];
    lipiodol.iter().for_each(|&i| is_lipiodol[i] = true);
    let shell: Vec<usize> = ranked
        .iter()
        .copied()
        .filter(|&i| !viable[i] && !is_lipiodol[i])
        .collect();
    let n_necrosis = (params.necrosis_fraction * shell.len() as f64).floor() as usize;
    let necrosis = &shell[..n_necrosis];

    let liver: Vec<f64> = (0..dims.len())
        .filter(|&i| mask.data()[i] == LIVER)
        .map(|i| pre.data()[i] as f64)
        .collect();
    let organ = if liver.is_empty() {
        0.0
    } else {
        liver.iter().sum::<f64>() / liver.len() as f64
    } as f32;

    let mut out = pre.clone();
    for &i in &tumor {
        if !viable[i] {
            out.data_mut()[i] = organ;
        }
    }

    if params.blur_sigma > 0.0 {
        let (lo, hi) = mask.indicator(TUMOR).bounding_box().expect("non-empty");
        let margin = (3.0 * params.blur_sigma).ceil() as usize;
        let clo: [usize; 3] = std::array::from_fn(|a| lo[a].saturating_sub(margin));
        let chi: [usize; 3] = std::array::from_fn(|a| (hi[a] + margin).min(dims.0[a] - 1));
        let cdims = Dims::new(
            chi[0] - clo[0] + 1,
            chi[1] - clo[1] + 1,
            chi[2] - clo[2] + 1,
        );
        let mut crop = Vec::with_capacity(cdims.len());
        for z in clo[2]..=chi[2] {
            for y in clo[1]..=chi[1] {
                for x in clo[0]..=chi[0] {
                    crop.push(out.get(x, y, z));
                }
            }
        }
        let crop = Volume3::new(cdims, pre.spacing(), crop)?.with_intensity(Intensity::Normalized);
        let blurred = gaussian_blur(&crop, params.blur_sigma)?;
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    out.set(x, y, z, blurred.get(x - clo[0], y - clo[1], z - clo[2]));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stamp = |out: &mut Volume3, voxels: &[usize], target: f64| {
        for &i in voxels {
            let z: f64 = StandardNormal.sample(&mut rng);
            out.data_mut()[i] = (target * (1.0 + params.noise_scale * z)) as f32;
        }
    };
    stamp(&mut out, lipiodol, HYPERDENSE);
    stamp(&mut out, necrosis, HYPODENSE);

    let mut post_mask = mask.clone();
    for &i in &tumor {
        if !viable[i] {
            post_mask.set_index(i, LIVER);
        }
    }
    Ok(SimulatedState {
        volume: out,
        mask: post_mask,
        params: *params,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::AttenuationLevel;
    use crate::voxel::{binary_erode, Spacing, StructuringElement};

    fn sphere(n: usize, radius: f64) -> (Volume3, Mask3) {
        let dims = Dims::new(n, n, n);
        let c = (n as f64 - 1.0) / 2.0;
        let mut m = vec![LIVER; dims.len()];
        let mut v = vec![0.2f32; dims.len()];
        for (i, (l, x)) in m.iter_mut().zip(v.iter_mut()).enumerate() {
            if dist2(dims, i, [c; 3]) <= radius * radius {
                *l = TUMOR;
                *x = -0.5;
            }
        }
        let spacing = Spacing::iso(1.0);
        (
            Volume3::new(dims, spacing, v)
                .unwrap()
                .with_intensity(Intensity::Normalized),
            Mask3::new(dims, spacing, m).unwrap(),
        )
    }

    #[test]
    fn depth_matches_erosion() {
        let (_, m) = sphere(21, 7.5);
        let depth = tumor_depth(&m);
        for r in 1..=4 {
            let eroded = binary_erode(&m.indicator(TUMOR), &StructuringElement::ball(r).unwrap());
            for i in 0..depth.len() {
                assert_eq!(eroded.get(i), depth[i] > r as u32, "radius {r} voxel {i}");
            }
        }
    }

    #[test]
    fn identity_configuration() {
        let (v, m) = sphere(17, 5.0);
        let s = attenuate(&v, &m, &AttenuationParams::identity(), 3).unwrap();
        assert_eq!(s.volume, v);
        assert_eq!(s.mask, m);
    }

    #[test]
    fn erosion_shrinks_viable_core() {
        let (v, m) = sphere(49, 20.0);
        let p = |l| AttenuationParams::for_level(AttenuationLevel::new(l).unwrap(), 0.1, 0.2, 0.0);
        let a = attenuate(&v, &m, &p(1), 0).unwrap();
        let b = attenuate(&v, &m, &p(2), 0).unwrap();
        assert!(b.mask.count(TUMOR) < a.mask.count(TUMOR));
    }

    #[test]
    fn deterministic_per_seed() {
        let (v, m) = sphere(21, 7.0);
        let p = AttenuationParams::for_level(AttenuationLevel::new(3).unwrap(), 0.1, 0.3, 0.05);
        assert_eq!(
            attenuate(&v, &m, &p, 9).unwrap(),
            attenuate(&v, &m, &p, 9).unwrap()
        );
        assert_ne!(
            attenuate(&v, &m, &p, 9).unwrap().volume,
            attenuate(&v, &m, &p, 10).unwrap().volume
        );
    }

    #[test]
    fn over_eroded_tumor_keeps_centre() {
        let (v, m) = sphere(15, 2.0);
        let p = AttenuationParams::for_level(AttenuationLevel::MAX, 0.0, 0.0, 0.0);
        let s = attenuate(&v, &m, &p, 0).unwrap();
        assert_eq!(s.mask.count(TUMOR), 1);
        assert_eq!(s.mask.get(7, 7, 7), TUMOR);
    }

    #[test]
    fn requires_tumor_and_normalized_input() {
        let (v, m) = sphere(9, 2.0);
        let empty = Mask3::new(m.dims(), m.spacing(), vec![LIVER; m.dims().len()]).unwrap();
        assert!(matches!(
            attenuate(&v, &empty, &AttenuationParams::identity(), 0),
            Err(Error::NoTumor)
        ));
        let hu = v.clone().with_intensity(Intensity::Hu);
        assert!(attenuate(&hu, &m, &AttenuationParams::identity(), 0).is_err());
    }
}
