//! Axis-aligned slices encoded as 8-bit grayscale PNG.

use anyhow::{bail, Result};
use mewm_core::voxel::{window_normalize, Intensity, CT_WINDOW, LIVER, TUMOR};
use mewm_core::{Mask3, Volume3};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    #[default]
    Volume,
    Mask,
}

/// In-plane `(width, height)` and slice count along `axis`.
pub fn plane(dims: [usize; 3], axis: Axis) -> (usize, usize, usize) {
    let [nx, ny, nz] = dims;
    match axis {
        Axis::Z => (nx, ny, nz),
        Axis::Y => (nx, nz, ny),
        Axis::X => (ny, nz, nx),
    }
}

fn coords(axis: Axis, index: usize, u: usize, v: usize) -> (usize, usize, usize) {
    match axis {
        Axis::Z => (u, v, index),
        Axis::Y => (u, index, v),
        Axis::X => (index, u, v),
    }
}

fn check(dims: [usize; 3], axis: Axis, index: usize) -> Result<(usize, usize)> {
    let (w, h, n) = plane(dims, axis);
    if index >= n {
        bail!("slice index {index} out of range 0..{n}");
    }
    Ok((w, h))
}

/// Maps [-1, 1] onto [0, 255]; Hounsfield volumes are windowed first.
pub fn volume_slice(v: &Volume3, axis: Axis, index: usize) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h) = check(v.dims().0, axis, index)?;
    let norm;
    let v = if v.intensity() == Intensity::Hu {
        norm = window_normalize(v, CT_WINDOW.0, CT_WINDOW.1)?;
        &norm
    } else {
        v
    };
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (i, j, k) = coords(axis, index, x, y);
            let s = (v.get(i, j, k) as f64).clamp(-1.0, 1.0);
            px.push(((s + 1.0) * 127.5).round() as u8);
        }
    }
    Ok((w, h, px))
}

/// Background 0, liver 128, tumor 255.
pub fn mask_slice(m: &Mask3, axis: Axis, index: usize) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h) = check(m.dims().0, axis, index)?;
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (i, j, k) = coords(axis, index, x, y);
            px.push(match m.get(i, j, k) {
                LIVER => 128,
                TUMOR => 255,
                _ => 0,
            });
        }
    }
    Ok((w, h, px))
}

pub fn encode_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(pixels)?;
    }
    Ok(out)
}
