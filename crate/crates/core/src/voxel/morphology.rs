use super::{Dims, Mask3, BACKGROUND, LIVER, TUMOR};
use crate::error::{Error, Result};

/// Discrete 6-connectivity ball: all offsets with `|dx| + |dy| + |dz| <= radius`.
///
/// Radius 1 is the 7-voxel 3D cross; larger radii are its iterated dilations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    offsets: Vec<[i64; 3]>,
}

impl StructuringElement {
    pub fn ball(radius: usize) -> Result<Self> {
        if radius < 1 {
            return Err(Error::invalid("structuring element radius must be >= 1"));
        }
        let r = radius as i64;
        let mut offsets = Vec::new();
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() + dy.abs() + dz.abs() <= r {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        Ok(StructuringElement { radius, offsets })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[[i64; 3]] {
        &self.offsets
    }
}

/// Boolean voxel grid used for set-valued morphology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    dims: Dims,
    bits: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(dims: Dims) -> Self {
        BinaryGrid {
            dims,
            bits: vec![false; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(usize) -> bool) -> Self {
        BinaryGrid {
            dims,
            bits: (0..dims.len()).map(f).collect(),
        }
    }

    pub fn from_bits(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::invalid("bit count does not match dims"));
        }
        Ok(BinaryGrid { dims, bits })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> Self {
        BinaryGrid {
            dims: self.dims,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &BinaryGrid) -> Self {
        BinaryGrid::from_fn(self.dims, |i| self.bits[i] && other.bits[i])
    }

    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// Inclusive bounding box `(min, max)` of set voxels.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for i in self.iter_set() {
            let c = self.dims.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }
}

// Neighbours that fall outside the grid are ignored by both operators, which
// keeps erosion and dilation exact duals under complementation.

pub fn binary_erode(g: &BinaryGrid, se: &StructuringElement) -> BinaryGrid {
    let dims = g.dims;
    let mut out = BinaryGrid::new(dims);
    for i in g.iter_set() {
        let c = dims.coords(i);
        let keep = se
            .offsets()
            .iter()
            .all(|&d| dims.offset(c, d).is_none_or(|j| g.bits[j]));
        out.bits[i] = keep;
    }
    out
}

pub fn binary_dilate(g: &BinaryGrid, se: &StructuringElement) -> BinaryGrid {
    let dims = g.dims;
    let mut out = g.clone();
    for i in g.iter_set() {
        let c = dims.coords(i);
        for &d in se.offsets() {
            if let Some(j) = dims.offset(c, d) {
                out.bits[j] = true;
            }
        }
    }
    out
}

/// Dilation followed by erosion.
pub fn binary_close(g: &BinaryGrid, se: &StructuringElement) -> BinaryGrid {
    binary_erode(&binary_dilate(g, se), se)
}

/// Label one step down the tumor > liver > background precedence.
fn demoted(label: u8) -> u8 {
    match label {
        TUMOR => LIVER,
        _ => BACKGROUND,
    }
}

/// Erodes the indicator of `label`. Voxels that drop out are demoted one
/// precedence step (tumor becomes liver, liver becomes background).
pub fn erode(m: &Mask3, se: &StructuringElement, label: u8) -> Mask3 {
    let ind = m.indicator(label);
    let eroded = binary_erode(&ind, se);
    let mut out = m.clone();
    for i in ind.iter_set() {
        if !eroded.get(i) {
            out.set_index(i, demoted(label));
        }
    }
    out
}

/// Dilates the indicator of `label`. New voxels only take the label where it
/// outranks the existing one, so liver never overwrites tumor.
pub fn dilate(m: &Mask3, se: &StructuringElement, label: u8) -> Mask3 {
    let ind = m.indicator(label);
    let grown = binary_dilate(&ind, se);
    let mut out = m.clone();
    for i in grown.iter_set() {
        if m.data()[i] < label {
            out.set_index(i, label);
        }
    }
    out
}
