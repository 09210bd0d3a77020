use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dims, Intensity, Mask3, Spacing, Volume3, BACKGROUND, TUMOR};
use crate::error::{Error, Result};

/// Default CT intensity window in Hounsfield units.
pub const CT_WINDOW: (f64, f64) = (-175.0, 600.0);

/// Trilinear resampling onto a new voxel spacing.
///
/// Output dims are `round(extent / target)` (at least 1). Voxel centres are
/// aligned, so output voxel `i` samples input coordinate
/// `(i + 0.5) * target / spacing - 0.5`, clamped to the grid.
pub fn resample(v: &Volume3, target: Spacing) -> Result<Volume3> {
    target.validate()?;
    let src = v.dims().0;
    let sp = v.spacing().0;
    let mut out_dims = [0usize; 3];
    for a in 0..3 {
        out_dims[a] = ((src[a] as f64 * sp[a] / target.0[a]).round() as usize).max(1);
    }
    let dims = Dims(out_dims);

    // per-axis (lower index, upper index, upper weight)
    let axis_taps: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            (0..out_dims[a])
                .map(|i| {
                    let pos = (i as f64 + 0.5) * target.0[a] / sp[a] - 0.5;
                    let pos = pos.clamp(0.0, (src[a] - 1) as f64);
                    let lo = pos.floor() as usize;
                    let hi = (lo + 1).min(src[a] - 1);
                    (lo, hi, pos - lo as f64)
                })
                .collect()
        })
        .collect();

    let mut data = Vec::with_capacity(dims.len());
    for &(z0, z1, wz) in &axis_taps[2] {
        for &(y0, y1, wy) in &axis_taps[1] {
            for &(x0, x1, wx) in &axis_taps[0] {
                let g = |x, y, z| v.get(x, y, z) as f64;
                let c00 = g(x0, y0, z0) * (1.0 - wx) + g(x1, y0, z0) * wx;
                let c10 = g(x0, y1, z0) * (1.0 - wx) + g(x1, y1, z0) * wx;
                let c01 = g(x0, y0, z1) * (1.0 - wx) + g(x1, y0, z1) * wx;
                let c11 = g(x0, y1, z1) * (1.0 - wx) + g(x1, y1, z1) * wx;
                let c0 = c00 * (1.0 - wy) + c10 * wy;
                let c1 = c01 * (1.0 - wy) + c11 * wy;
                data.push((c0 * (1.0 - wz) + c1 * wz) as f32);
            }
        }
    }
    Ok(Volume3::new(dims, target, data)?.with_intensity(v.intensity()))
}

/// Clamps to `[lo, hi]` and maps affinely onto `[-1, 1]`.
///
/// Volumes already in normalized units are returned unchanged.
pub fn window_normalize(v: &Volume3, lo: f64, hi: f64) -> Result<Volume3> {
    if !(lo < hi) {
        return Err(Error::invalid(format!(
            "window lower bound {lo} must be below {hi}"
        )));
    }
    if v.intensity() == Intensity::Normalized {
        return Ok(v.clone());
    }
    let width = hi - lo;
    let data = v
        .data()
        .iter()
        .map(|&x| ((2.0 * ((x as f64).clamp(lo, hi) - lo) - width) / width) as f32)
        .collect();
    Ok(Volume3::new(v.dims(), v.spacing(), data)?.with_intensity(Intensity::Normalized))
}

/// A cropped patch together with where it came from.
#[derive(Debug, Clone)]
pub struct Patch {
    pub volume: Volume3,
    pub mask: Mask3,
    /// Source coordinate of patch voxel (0, 0, 0); negative when padded.
    pub origin: [i64; 3],
    /// The sampled centre voxel in source coordinates.
    pub center: [usize; 3],
}

/// Random patch around a foreground (tumor) or background voxel.
///
/// The window is shifted to stay inside the volume along any axis where it
/// fits; along axes where `size` exceeds the volume the patch is padded
/// symmetrically with -1 (volume) and 0 (mask).
pub fn crop_patch(
    v: &Volume3,
    m: &Mask3,
    size: [usize; 3],
    around_foreground: bool,
    seed: u64,
) -> Result<Patch> {
    m.check_pair(v)?;
    if size.contains(&0) {
        return Err(Error::invalid("patch size must be positive"));
    }
    let dims = v.dims();
    let pool: Vec<usize> = m
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &l)| (l == TUMOR) == around_foreground)
        .map(|(i, _)| i)
        .collect();
    if pool.is_empty() {
        return Err(if around_foreground {
            Error::NoForeground
        } else {
            Error::invalid("mask has no background voxels")
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = dims.coords(pool[rng.random_range(0..pool.len())]);

    let mut origin = [0i64; 3];
    for a in 0..3 {
        let n = dims.0[a] as i64;
        let s = size[a] as i64;
        origin[a] = if s <= n {
            (center[a] as i64 - s / 2).clamp(0, n - s)
        } else {
            -((s - n) / 2)
        };
    }

    let out_dims = Dims(size);
    let mut vdata = vec![-1.0f32; out_dims.len()];
    let mut mdata = vec![BACKGROUND; out_dims.len()];
    for z in 0..size[2] {
        for y in 0..size[1] {
            for x in 0..size[0] {
                let src = [
                    x as i64 + origin[0],
                    y as i64 + origin[1],
                    z as i64 + origin[2],
                ];
                if (0..3).all(|a| src[a] >= 0 && src[a] < dims.0[a] as i64) {
                    let si = dims.index(src[0] as usize, src[1] as usize, src[2] as usize);
                    let di = out_dims.index(x, y, z);
                    vdata[di] = v.data()[si];
                    mdata[di] = m.data()[si];
                }
            }
        }
    }
    Ok(Patch {
        volume: Volume3::new(out_dims, v.spacing(), vdata)?.with_intensity(v.intensity()),
        mask: Mask3::new(out_dims, m.spacing(), mdata)?,
        origin,
        center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: Dims, data: Vec<f32>) -> Volume3 {
        Volume3::new(dims, Spacing::iso(1.0), data).unwrap()
    }

    #[test]
    fn window_endpoints() {
        let v = vol(
            Dims::new(5, 1, 1),
            vec![-175.0, 600.0, 212.5, -1000.0, 3000.0],
        );
        let n = window_normalize(&v, -175.0, 600.0).unwrap();
        assert_eq!(n.data(), &[-1.0, 1.0, 0.0, -1.0, 1.0]);
        assert_eq!(n.intensity(), Intensity::Normalized);
    }

    #[test]
    fn window_rejects_inverted_bounds() {
        let v = vol(Dims::new(1, 1, 1), vec![0.0]);
        assert!(window_normalize(&v, 10.0, 10.0).is_err());
        assert!(window_normalize(&v, 10.0, -10.0).is_err());
    }

    #[test]
    fn window_idempotent() {
        let v = vol(Dims::new(4, 1, 1), vec![-500.0, 0.0, 100.0, 900.0]);
        let once = window_normalize(&v, -175.0, 600.0).unwrap();
        let twice = window_normalize(&once, -175.0, 600.0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn resample_identity() {
        let data: Vec<f32> = (0..24).map(|i| (i * 7 % 5) as f32).collect();
        let v = vol(Dims::new(4, 3, 2), data);
        let r = resample(&v, Spacing::iso(1.0)).unwrap();
        assert_eq!(r, v);
    }

    #[test]
    fn resample_rejects_bad_spacing() {
        let v = vol(Dims::new(2, 2, 2), vec![0.0; 8]);
        assert!(resample(&v, Spacing([1.0, 0.0, 1.0])).is_err());
        assert!(resample(&v, Spacing([1.0, -2.0, 1.0])).is_err());
    }

    #[test]
    fn resample_dims_follow_extent() {
        let v = vol(Dims::new(10, 10, 4), vec![0.5; 400]);
        let r = resample(&v, Spacing([0.8, 0.8, 3.0])).unwrap();
        assert_eq!(r.dims().0, [13, 13, 1]);
        assert!(r.data().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn crop_full_volume() {
        let dims = Dims::new(4, 4, 4);
        let data: Vec<f32> = (0..64).map(|i| i as f32).collect();
        let v = vol(dims, data);
        let mut m = Mask3::empty(dims, Spacing::iso(1.0)).unwrap();
        m.set(1, 2, 3, TUMOR);
        let p = crop_patch(&v, &m, [4, 4, 4], true, 3).unwrap();
        assert_eq!(p.volume.data(), v.data());
        assert_eq!(p.mask, m);
        assert_eq!(p.center, [1, 2, 3]);
    }

    #[test]
    fn crop_pads_oversized() {
        let dims = Dims::new(2, 2, 2);
        let v = vol(dims, vec![0.25; 8]);
        let mut m = Mask3::empty(dims, Spacing::iso(1.0)).unwrap();
        m.set(0, 0, 0, TUMOR);
        let p = crop_patch(&v, &m, [4, 2, 2], true, 0).unwrap();
        assert_eq!(p.origin, [-1, 0, 0]);
        assert_eq!(p.volume.get(0, 0, 0), -1.0);
        assert_eq!(p.volume.get(1, 0, 0), 0.25);
        assert_eq!(p.mask.get(1, 0, 0), TUMOR);
        assert_eq!(p.mask.get(3, 0, 0), BACKGROUND);
    }

    #[test]
    fn crop_requires_foreground() {
        let dims = Dims::new(3, 3, 3);
        let v = vol(dims, vec![0.0; 27]);
        let m = Mask3::empty(dims, Spacing::iso(1.0)).unwrap();
        assert!(matches!(
            crop_patch(&v, &m, [2, 2, 2], true, 1),
            Err(Error::NoForeground)
        ));
        assert!(crop_patch(&v, &m, [2, 2, 2], false, 1).is_ok());
    }
}
