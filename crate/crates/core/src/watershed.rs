//! Deterministic morphological watershed by priority flooding.
//!
//! Basins grow from labeled seeds (either supplied markers or the regional
//! minima of the field). Unlabeled voxels are processed through a single
//! priority queue ordered by field value, FIFO among equal values, and adopt
//! the label of the neighbor that enqueued them. Neighbors are enqueued in
//! raster order of their offsets, so the labeling is a pure function of the
//! input: no thread count or hashing order can change it.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::connectivity::{Connectivity, Neighborhood};
use crate::error::{Error, Result};
use crate::volume::{LabelVolume, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// One basin per regional minimum of the field.
    #[default]
    FromMinima,
    /// One basin per label of a supplied marker volume.
    FromSeeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatershedOptions {
    pub connectivity: Connectivity,
    /// Mark voxels reached from two or more basins with label 0.
    pub produce_lines: bool,
    pub seed_mode: SeedMode,
    /// Minima shallower than this are merged into neighboring basins before
    /// flooding (h-minima suppression). Only used in [`SeedMode::FromMinima`].
    pub min_basin_depth: Option<f64>,
}

impl Default for WatershedOptions {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Full,
            produce_lines: false,
            seed_mode: SeedMode::FromMinima,
            min_basin_depth: None,
        }
    }
}

/// Labels each maximal connected plateau that has no strictly lower
/// neighbor. Labels are assigned in raster order of the plateau's first voxel.
///
/// The field is expected to be finite.
pub fn regional_minima(field: &Volume<f64>, conn: Connectivity) -> LabelVolume {
    let meta = field.meta().clone();
    let nb = Neighborhood::new(&meta, conn);
    let f = field.data();
    let mut visited = vec![false; f.len()];
    let mut labels = vec![0u32; f.len()];
    let mut members = Vec::new();
    let mut queue = VecDeque::new();
    let mut next = 0u32;

    for start in 0..f.len() {
        if visited[start] {
            continue;
        }
        let level = f[start];
        let mut is_min = true;
        members.clear();
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            nb.for_each(i, |j| {
                let v = f[j];
                if v < level {
                    is_min = false;
                } else if v == level && !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            });
        }
        if is_min {
            next += 1;
            for &m in &members {
                labels[m] = next;
            }
        }
    }
    Volume::from_vec(meta, labels).expect("same grid")
}

/// Maps an `f64` to a `u64` whose unsigned order matches `f64::total_cmp`.
#[inline]
fn order_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | 1 << 63
    }
}

const UNSEEN: u8 = 0;
const QUEUED: u8 = 1;
const DONE: u8 = 2;

/// Seeded priority flood.
///
/// Seed voxels (nonzero in `seeds`) keep their labels. With
/// `opts.produce_lines`, a voxel whose already-labeled neighbors carry two or
/// more distinct labels when it is popped becomes 0 and does not propagate.
pub fn flood(
    field: &Volume<f64>,
    seeds: &LabelVolume,
    opts: &WatershedOptions,
) -> Result<LabelVolume> {
    if !field.meta().same_grid(seeds.meta()) {
        return Err(Error::argument(format!(
            "seed grid {:?} does not match field grid {:?}",
            seeds.meta(),
            field.meta()
        )));
    }
    if seeds.data().iter().all(|&l| l == 0) {
        return Err(Error::domain("watershed needs at least one seed voxel"));
    }
    let meta = field.meta().clone();
    let nb = Neighborhood::new(&meta, opts.connectivity);
    let f = field.data();
    let mut out = seeds.data().to_vec();
    let mut state = vec![UNSEEN; f.len()];
    for (s, &l) in state.iter_mut().zip(&out) {
        if l != 0 {
            *s = DONE;
        }
    }

    let mut heap: BinaryHeap<Reverse<(u64, u64, u32, u32)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut enqueue_neighbors =
        |i: usize, label: u32, state: &mut [u8], heap: &mut BinaryHeap<_>| {
            nb.for_each(i, |j| {
                if state[j] == UNSEEN {
                    state[j] = QUEUED;
                    heap.push(Reverse((order_key(f[j]), seq, j as u32, label)));
                    seq += 1;
                }
            });
        };

    for i in 0..f.len() {
        if out[i] != 0 {
            enqueue_neighbors(i, out[i], &mut state, &mut heap);
        }
    }

    while let Some(Reverse((_, _, v, label))) = heap.pop() {
        let v = v as usize;
        let assigned = if opts.produce_lines {
            let mut seen = 0u32;
            let mut conflict = false;
            nb.for_each(v, |j| {
                if state[j] == DONE && out[j] != 0 {
                    if seen == 0 {
                        seen = out[j];
                    } else if out[j] != seen {
                        conflict = true;
                    }
                }
            });
            if conflict {
                0
            } else {
                label
            }
        } else {
            label
        };
        out[v] = assigned;
        state[v] = DONE;
        if assigned != 0 {
            enqueue_neighbors(v, assigned, &mut state, &mut heap);
        }
    }
    Volume::from_vec(meta, out)
}

/// Raises every minimum shallower than `depth` to the level of its lowest
/// pass, i.e. the morphological reconstruction by erosion of `field + depth`
/// above `field`.
pub fn fill_shallow_minima(field: &Volume<f64>, depth: f64, conn: Connectivity) -> Volume<f64> {
    let nb = Neighborhood::new(field.meta(), conn);
    let f = field.data();
    let mut r: Vec<f64> = f.iter().map(|&v| v + depth).collect();
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = r
        .iter()
        .enumerate()
        .map(|(i, &v)| Reverse((order_key(v), i as u32)))
        .collect();
    while let Some(Reverse((key, p))) = heap.pop() {
        let p = p as usize;
        if key != order_key(r[p]) {
            continue;
        }
        let level = r[p];
        nb.for_each(p, |q| {
            let cand = level.max(f[q]);
            if cand < r[q] {
                r[q] = cand;
                heap.push(Reverse((order_key(cand), q as u32)));
            }
        });
    }
    Volume::from_vec(field.meta().clone(), r).expect("same grid")
}

/// Unseeded watershed: regional minima (optionally depth-filtered) flooded
/// over `field`. The basin count equals the number of minima used as seeds.
pub fn morphological_watershed(field: &Volume<f64>, opts: &WatershedOptions) -> LabelVolume {
    let seeds = match opts.min_basin_depth {
        Some(h) if h > 0.0 => regional_minima(
            &fill_shallow_minima(field, h, opts.connectivity),
            opts.connectivity,
        ),
        _ => regional_minima(field, opts.connectivity),
    };
    flood(field, &seeds, opts).expect("a non-empty field has at least one regional minimum")
}

/// Dispatches on `opts.seed_mode`.
pub fn watershed(
    field: &Volume<f64>,
    seeds: Option<&LabelVolume>,
    opts: &WatershedOptions,
) -> Result<LabelVolume> {
    match opts.seed_mode {
        SeedMode::FromMinima => Ok(morphological_watershed(field, opts)),
        SeedMode::FromSeeds => {
            let seeds =
                seeds.ok_or_else(|| Error::argument("seeded watershed needs a seed volume"))?;
            flood(field, seeds, opts)
        }
    }
}
