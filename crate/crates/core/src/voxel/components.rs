use super::{BinaryGrid, Mask3};

/// A 26-connected set of voxels (linear indices, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub voxels: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

const NEIGHBORS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut k = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[k] = [dx, dy, dz];
                    k += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// All 26-connected components of a binary grid, largest first. Components
/// of equal size keep scan order (smallest first voxel index first).
pub fn label_components(g: &BinaryGrid) -> Vec<Component> {
    let dims = g.dims();
    let mut seen = vec![false; dims.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in g.iter_set() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut voxels = Vec::new();
        while let Some(i) = stack.pop() {
            voxels.push(i);
            let c = dims.coords(i);
            for d in NEIGHBORS_26 {
                if let Some(j) = dims.offset(c, d) {
                    if g.get(j) && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        voxels.sort_unstable();
        out.push(Component { voxels });
    }
    out.sort_by_key(|c| std::cmp::Reverse(c.len()));
    out
}

/// Components of `label` with at least `min_size` voxels (inclusive).
pub fn connected_components(m: &Mask3, label: u8, min_size: usize) -> Vec<Component> {
    label_components(&m.indicator(label))
        .into_iter()
        .filter(|c| c.len() >= min_size)
        .collect()
}
