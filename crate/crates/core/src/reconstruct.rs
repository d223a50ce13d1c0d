//! End-to-end surface reconstruction.
//!
//! Two binary masks drive the pipeline: an interior class (objects known to
//! sit inside the sought regions, e.g. nuclei or central veins) and a surface
//! class (markers known to lie on the sought surfaces, possibly covering
//! them only in part). Their distance fields are blended by the β-weighted
//! gradient and flooded from the interior components, so every interior
//! component yields exactly one region.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::connectivity::{Connectivity, Neighborhood};
use crate::edt::distance_to_set;
use crate::error::{Error, Result};
use crate::gradient::{combine, GradientParams};
use crate::maskprep::connected_components;
use crate::volume::{BinaryMask, LabelVolume};
use crate::watershed::{flood, SeedMode, WatershedOptions};

/// Per-label summary of a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    pub label: u32,
    pub voxels: usize,
    /// `voxels` times the physical voxel volume.
    pub volume: f64,
    /// Mean voxel index per axis.
    pub center_of_mass: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub labels: LabelVolume,
    pub boundary: BinaryMask,
    /// One entry per label, ascending.
    pub stats: Vec<RegionStats>,
    /// Number of watershed-line voxels (label 0).
    pub line_voxels: usize,
}

/// Runs the full pipeline on an interior mask and a surface mask.
///
/// Seeds are the connected components of `interior` under
/// `opts.connectivity`; `opts.seed_mode` and `opts.min_basin_depth` are
/// ignored because the basins are pinned to those components.
pub fn reconstruct_surfaces(
    interior: &BinaryMask,
    surface: &BinaryMask,
    beta: f64,
    opts: &WatershedOptions,
) -> Result<ReconstructionResult> {
    let params = GradientParams::new(beta)?;
    if !interior.meta().same_grid(surface.meta()) {
        return Err(Error::argument(format!(
            "interior and surface masks differ in geometry: {:?} vs {:?}",
            interior.meta(),
            surface.meta()
        )));
    }
    if interior.count() == 0 {
        return Err(Error::domain(
            "class mask empty: interior class has no foreground",
        ));
    }
    if surface.count() == 0 {
        return Err(Error::domain(
            "class mask empty: surface class has no foreground",
        ));
    }

    let seeds = connected_components(interior, opts.connectivity);
    let field = combine(
        &distance_to_set(interior)?,
        &distance_to_set(surface)?,
        params,
    )?;
    let flood_opts = WatershedOptions {
        seed_mode: SeedMode::FromSeeds,
        min_basin_depth: None,
        ..*opts
    };
    let labels = flood(&field, &seeds, &flood_opts)?;
    let boundary = extract_boundary(&labels, opts.connectivity);
    let stats = region_stats(&labels);
    let line_voxels = labels.data().iter().filter(|&&l| l == 0).count();
    Ok(ReconstructionResult {
        labels,
        boundary,
        stats,
        line_voxels,
    })
}

/// Voxel count, physical volume and center of mass for every nonzero label.
pub fn region_stats(labels: &LabelVolume) -> Vec<RegionStats> {
    let meta = labels.meta();
    let ndims = meta.ndims();
    let mut acc: HashMap<u32, (usize, [f64; 3])> = HashMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = meta.coords3(i);
        let e = acc.entry(l).or_insert((0, [0.0; 3]));
        e.0 += 1;
        for k in 0..3 {
            e.1[k] += c[k] as f64;
        }
    }
    let mut stats: Vec<RegionStats> = acc
        .into_iter()
        .map(|(label, (n, sum))| RegionStats {
            label,
            voxels: n,
            volume: n as f64 * meta.voxel_volume(),
            center_of_mass: sum[..ndims].iter().map(|s| s / n as f64).collect(),
        })
        .collect();
    stats.sort_by_key(|s| s.label);
    stats
}

/// Interface voxels: labeled voxels with a neighbor of a different nonzero
/// label, plus line voxels touching two or more labels.
pub fn extract_boundary(labels: &LabelVolume, conn: Connectivity) -> BinaryMask {
    let meta = labels.meta().clone();
    let nb = Neighborhood::new(&meta, conn);
    let l = labels.data();
    let bits: Vec<bool> = (0..l.len())
        .into_par_iter()
        .map(|i| {
            let own = l[i];
            let mut first = 0u32;
            nb.any(i, |j| {
                let other = l[j];
                if other == 0 || other == own {
                    return false;
                }
                if own != 0 {
                    return true;
                }
                if first == 0 {
                    first = other;
                    false
                } else {
                    other != first
                }
            })
        })
        .collect();
    BinaryMask::from_bools(meta, &bits).expect("same grid")
}

/// Which labels [`export_obj`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSelector {
    All,
    Single(u32),
}

/// Triangle mesh of voxel faces, one vertex set per label group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoxelMesh {
    pub vertices: Vec<[f64; 3]>,
    /// `(label, triangles)` per group, triangles as 0-based vertex indices.
    pub groups: Vec<(u32, Vec<[usize; 3]>)>,
}

impl VoxelMesh {
    pub fn triangle_count(&self) -> usize {
        self.groups.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Face direction `0..6`: axis `dir / 2`, positive when `dir` is odd.
fn direction(axis: usize, positive: bool) -> u8 {
    (2 * axis + usize::from(positive)) as u8
}

fn unit(axis: usize, sign: isize) -> [isize; 3] {
    let mut u = [0; 3];
    u[axis] = sign;
    u
}

fn add(a: [isize; 3], b: [isize; 3]) -> [isize; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Corners of the face of voxel `c` in direction `dir`, counter-clockwise
/// seen from outside.
fn quad_corners(c: [usize; 3], dir: u8) -> [[usize; 3]; 4] {
    let axis = usize::from(dir / 2);
    let positive = dir % 2 == 1;
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut base = c;
    if positive {
        base[axis] += 1;
    }
    let mut q = [base; 4];
    q[1][u] += 1;
    q[2][u] += 1;
    q[2][v] += 1;
    q[3][v] += 1;
    if !positive {
        q.swap(1, 3);
    }
    q
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Builds the voxel-face surface of each selected label.
///
/// A face is emitted wherever a voxel of the label borders a voxel with a
/// different value or the volume edge. Vertices sit on voxel corners at
/// physical coordinates `(index - 0.5) * spacing`, so voxel centers map to
/// `index * spacing`. Triangles wind counter-clockwise seen from outside.
///
/// Corners are deduplicated per label and surface sheet: where two voxels
/// of a label meet only along an edge or at a corner the surface is split
/// there, except at edges where splitting would leave two coincident mesh
/// edges. Every mesh edge then belongs to exactly two triangles.
pub fn voxel_mesh(labels: &LabelVolume, selector: LabelSelector) -> Result<VoxelMesh> {
    let meta = labels.meta();
    let mut present: Vec<u32> = labels.data().iter().copied().filter(|&l| l != 0).collect();
    present.par_sort_unstable();
    present.dedup();
    let selected = match selector {
        LabelSelector::All => present,
        LabelSelector::Single(id) => {
            if id == 0 || present.binary_search(&id).is_err() {
                return Err(Error::argument(format!("label {id} not present in volume")));
            }
            vec![id]
        }
    };
    let group_of: HashMap<u32, usize> = selected.iter().enumerate().map(|(g, &l)| (l, g)).collect();

    let dims = meta.dims3();
    let holds = |c: [isize; 3], label: u32| {
        (0..3).all(|k| c[k] >= 0 && (c[k] as usize) < dims[k])
            && labels.at3([c[0] as usize, c[1] as usize, c[2] as usize]) == label
    };

    let mut faces: Vec<Vec<(usize, u8)>> = vec![Vec::new(); selected.len()];
    for (i, &label) in labels.data().iter().enumerate() {
        let Some(&group) = group_of.get(&label) else {
            continue;
        };
        let c = meta.coords3(i).map(|v| v as isize);
        for axis in 0..3 {
            for positive in [false, true] {
                let n = add(c, unit(axis, if positive { 1 } else { -1 }));
                if !holds(n, label) {
                    faces[group].push((i, direction(axis, positive)));
                }
            }
        }
    }

    let spacing = meta.spacing3();
    let mut mesh = VoxelMesh::default();
    for (group, list) in faces.into_iter().enumerate() {
        let label = selected[group];
        let index: HashMap<(usize, u8), usize> =
            list.iter().enumerate().map(|(f, &k)| (k, f)).collect();
        let quads: Vec<[[usize; 3]; 4]> = list
            .iter()
            .map(|&(i, d)| quad_corners(meta.coords3(i), d))
            .collect();
        let sheet = |switched: &HashSet<([usize; 3], usize)>| {
            let mut sets = DisjointSets::new(4 * list.len());
            for (f, &(i, dir)) in list.iter().enumerate() {
                let v = meta.coords3(i).map(|x| x as isize);
                let axis = usize::from(dir / 2);
                let normal = unit(axis, if dir % 2 == 1 { 1 } else { -1 });
                let q = quads[f];
                for s in 0..4 {
                    let (a, b) = (q[s], q[(s + 1) % 4]);
                    let along = (0..3).find(|&k| a[k] != b[k]).expect("distinct corners");
                    let w = 3 - axis - along;
                    let toward: isize = if a[w] as isize == v[w] + 1 { 1 } else { -1 };
                    let side = add(v, unit(w, toward));
                    let diagonal = add(side, normal);
                    let (in_side, in_diagonal) = (holds(side, label), holds(diagonal, label));
                    // Diagonal-only contacts separate the two voxels unless
                    // the edge was switched to keep the surface edge-manifold.
                    let wrap_outside =
                        in_diagonal && (in_side || switched.contains(&(a.min(b), along)));
                    let (pv, pd) = if wrap_outside {
                        (diagonal, direction(w, toward < 0))
                    } else if in_side {
                        (side, dir)
                    } else {
                        (v, direction(w, toward > 0))
                    };
                    let pidx = meta.index3(pv.map(|x| x as usize));
                    let pf = index[&(pidx, pd)];
                    let slot = |corner: [usize; 3]| {
                        4 * pf
                            + quads[pf]
                                .iter()
                                .position(|&c| c == corner)
                                .expect("shared edge")
                    };
                    sets.union(4 * f + s, slot(a));
                    sets.union(4 * f + (s + 1) % 4, slot(b));
                }
            }
            sets
        };
        let mut switched = HashSet::new();
        let mut sets = sheet(&switched);
        loop {
            let mut uses: HashMap<(usize, usize), Vec<([usize; 3], usize)>> = HashMap::new();
            for (f, q) in quads.iter().enumerate() {
                for s in 0..4 {
                    let (ra, rb) = (sets.find(4 * f + s), sets.find(4 * f + (s + 1) % 4));
                    let (a, b) = (q[s], q[(s + 1) % 4]);
                    let along = (0..3).find(|&k| a[k] != b[k]).expect("distinct corners");
                    uses.entry((ra.min(rb), ra.max(rb)))
                        .or_default()
                        .push((a.min(b), along));
                }
            }
            let before = switched.len();
            for edges in uses.values().filter(|e| e.len() > 2) {
                switched.extend(edges.iter().copied());
            }
            if switched.len() == before {
                break;
            }
            sets = sheet(&switched);
        }
        let mut vertex_of: HashMap<usize, usize> = HashMap::new();
        let mut tris = Vec::with_capacity(2 * list.len());
        for (f, q) in quads.iter().enumerate() {
            let ids: [usize; 4] = std::array::from_fn(|s| {
                let root = sets.find(4 * f + s);
                *vertex_of.entry(root).or_insert_with(|| {
                    let c = q[s];
                    mesh.vertices.push([
                        (c[0] as f64 - 0.5) * spacing[0],
                        (c[1] as f64 - 0.5) * spacing[1],
                        (c[2] as f64 - 0.5) * spacing[2],
                    ]);
                    mesh.vertices.len() - 1
                })
            });
            tris.push([ids[0], ids[1], ids[2]]);
            tris.push([ids[0], ids[2], ids[3]]);
        }
        mesh.groups.push((label, tris));
    }
    Ok(mesh)
}

/// Writes [`voxel_mesh`] as ASCII Wavefront OBJ with one `g label_<id>`
/// group per label.
pub fn export_obj(
    labels: &LabelVolume,
    selector: LabelSelector,
    path: impl AsRef<Path>,
) -> Result<VoxelMesh> {
    let mesh = voxel_mesh(labels, selector)?;
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(
        w,
        "# voxel surface: {} vertices, {} triangles",
        mesh.vertices.len(),
        mesh.triangle_count()
    )
    .map_err(io_err)?;
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2]).map_err(io_err)?;
    }
    for (label, tris) in &mesh.groups {
        writeln!(w, "g label_{label}").map_err(io_err)?;
        for t in tris {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(mesh)
}
