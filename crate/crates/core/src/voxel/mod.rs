//! Dense 3D volumes and label masks, plus the preprocessing and morphology
//! primitives the rest of the engine is built on.
//!
//! Storage is x-fastest: voxel `(x, y, z)` lives at `x + nx * (y + ny * z)`.

mod components;
mod filter;
pub mod io;
mod morphology;
mod preprocess;

pub use components::{connected_components, label_components, Component};
pub use filter::gaussian_blur;
pub use morphology::{
    binary_close, binary_dilate, binary_erode, dilate, erode, BinaryGrid, StructuringElement,
};
pub use preprocess::{crop_patch, resample, window_normalize, Patch, CT_WINDOW};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const LIVER: u8 = 1;
pub const TUMOR: u8 = 2;

/// Voxel counts along x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims([nx, ny, nz])
    }

    pub fn len(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.0[0] * (y + self.0[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.0[0];
        let ny = self.0[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Index of `(x, y, z) + offset`, or `None` when it leaves the grid.
    #[inline]
    pub fn offset(&self, c: [usize; 3], d: [i64; 3]) -> Option<usize> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + d[a];
            if v < 0 || v >= self.0[a] as i64 {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }
}

/// Physical voxel size in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing(pub [f64; 3]);

impl Spacing {
    pub fn iso(s: f64) -> Self {
        Spacing([s; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "spacing must be positive, got {:?}",
                self.0
            )))
        }
    }

    /// Voxel volume in millilitres.
    pub fn voxel_ml(&self) -> f64 {
        self.0[0] * self.0[1] * self.0[2] / 1000.0
    }
}

/// Whether a volume holds raw Hounsfield units or windowed `[-1, 1]` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    #[default]
    Hu,
    Normalized,
}

/// Dense scalar grid with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    dims: Dims,
    spacing: Spacing,
    intensity: Intensity,
    data: Vec<f32>,
}

impl Volume3 {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        spacing.validate()?;
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims.0
            )));
        }
        Ok(Volume3 {
            dims,
            spacing,
            intensity: Intensity::Hu,
            data,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }

    pub fn with_intensity(mut self, intensity: Intensity) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn intensity(&self) -> Intensity {
        self.intensity
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Per-voxel label grid: 0 background, 1 liver, 2 tumor.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3 {
    dims: Dims,
    spacing: Spacing,
    data: Vec<u8>,
}

impl Mask3 {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        spacing.validate()?;
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                dims.0
            )));
        }
        if let Some(bad) = data.iter().find(|&&l| l > TUMOR) {
            return Err(Error::invalid(format!("label {bad} outside {{0,1,2}}")));
        }
        Ok(Mask3 {
            dims,
            spacing,
            data,
        })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Result<Self> {
        Self::new(dims, spacing, vec![BACKGROUND; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.dims.index(x, y, z)]
    }

    /// Sets a label; panics on a label outside the declared set.
    #[inline]
    pub fn set_index(&mut self, idx: usize, label: u8) {
        assert!(label <= TUMOR, "label {label} outside {{0,1,2}}");
        self.data[idx] = label;
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) {
        let i = self.dims.index(x, y, z);
        self.set_index(i, label);
    }

    pub fn count(&self, label: u8) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }

    /// Indicator grid of a single label.
    pub fn indicator(&self, label: u8) -> BinaryGrid {
        BinaryGrid::from_fn(self.dims, |i| self.data[i] == label)
    }

    /// Indicator of the whole organ: liver plus tumor.
    pub fn organ(&self) -> BinaryGrid {
        BinaryGrid::from_fn(self.dims, |i| self.data[i] >= LIVER)
    }

    pub fn check_pair(&self, v: &Volume3) -> Result<()> {
        if self.dims != v.dims() {
            return Err(Error::invalid(format!(
                "mask dims {:?} differ from volume dims {:?}",
                self.dims.0,
                v.dims().0
            )));
        }
        Ok(())
    }
}
