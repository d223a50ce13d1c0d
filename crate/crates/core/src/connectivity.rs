//! Voxel adjacency.

use serde::{Deserialize, Serialize};

use crate::volume::VolumeMeta;

/// Which neighbors count as adjacent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Axis neighbors only: 2 in 1D, 4 in 2D, 6 in 3D.
    Face,
    /// All adjacent voxels including diagonals: 2 / 8 / 26.
    #[default]
    Full,
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "face" => Ok(Connectivity::Face),
            "full" => Ok(Connectivity::Full),
            other => Err(format!(
                "unknown connectivity `{other}` (expected face or full)"
            )),
        }
    }
}

/// Precomputed neighbor offsets for one grid.
///
/// Offsets are enumerated in raster order (z outermost, x innermost), which
/// fixes the enqueue order of every traversal built on top of this.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    dims: [usize; 3],
    offsets: Vec<[isize; 3]>,
}

impl Neighborhood {
    pub fn new(meta: &VolumeMeta, conn: Connectivity) -> Self {
        let ndims = meta.ndims();
        let span = |k: usize| if k < ndims { -1isize..=1 } else { 0..=0 };
        let mut offsets = Vec::new();
        for dz in span(2) {
            for dy in span(1) {
                for dx in span(0) {
                    let nonzero = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                    let keep = match conn {
                        Connectivity::Face => nonzero == 1,
                        Connectivity::Full => nonzero >= 1,
                    };
                    if keep {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        Self {
            dims: meta.dims3(),
            offsets,
        }
    }

    /// Offsets in enumeration order.
    pub fn offsets(&self) -> &[[isize; 3]] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Calls `f` with the linear index of every in-bounds neighbor of the
    /// voxel at `linear`, in offset order.
    #[inline]
    pub fn for_each(&self, linear: usize, mut f: impl FnMut(usize)) {
        let [nx, ny, nz] = self.dims;
        let c = [linear % nx, (linear / nx) % ny, linear / (nx * ny)];
        for o in &self.offsets {
            let x = c[0] as isize + o[0];
            let y = c[1] as isize + o[1];
            let z = c[2] as isize + o[2];
            if x < 0 || y < 0 || z < 0 || x >= nx as isize || y >= ny as isize || z >= nz as isize {
                continue;
            }
            f(x as usize + nx * (y as usize + ny * z as usize));
        }
    }

    /// Like [`Self::for_each`] but stops as soon as `f` returns true.
    #[inline]
    pub fn any(&self, linear: usize, mut f: impl FnMut(usize) -> bool) -> bool {
        let mut hit = false;
        self.for_each(linear, |n| {
            if !hit && f(n) {
                hit = true;
            }
        });
        hit
    }
}
