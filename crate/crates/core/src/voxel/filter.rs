use super::Volume3;
use crate::error::{Error, Result};

/// Normalized 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Symmetric (edge-inclusive) reflection of `i` into `0..n`.
#[inline]
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian blur in voxel units with reflective boundaries.
///
/// `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(v: &Volume3, sigma: f64) -> Result<Volume3> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(v.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let dims = v.dims();
    let n = dims.0;
    let mut cur: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
    let mut next = vec![0.0f64; cur.len()];

    for axis in 0..3 {
        let len = n[axis] as i64;
        let stride = match axis {
            0 => 1,
            1 => n[0],
            _ => n[0] * n[1],
        };
        for (i, out) in next.iter_mut().enumerate() {
            let c = dims.coords(i);
            let pos = c[axis] as i64;
            let base = i - c[axis] * stride;
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = reflect(pos + k as i64 - r, len);
                acc += w * cur[base + j * stride];
            }
            *out = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let data = cur.into_iter().map(|x| x as f32).collect();
    Ok(Volume3::new(dims, v.spacing(), data)?.with_intensity(v.intensity()))
}
