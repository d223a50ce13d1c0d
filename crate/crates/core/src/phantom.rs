//! Synthetic interior/surface masks with constructed ground truth.
//!
//! Points are given in continuous voxel coordinates: voxel `i` spans
//! `[i, i + 1)` along each axis, so its center sits at `i + 0.5`. Distances
//! are physical (scaled by spacing). A ball contains every voxel whose center
//! lies within its radius, plus the voxel containing its center point, so a
//! radius of 0 still yields one voxel.
//!
//! All randomness comes from a ChaCha8 stream seeded with the spec's
//! `rng_seed`; identical specs give bit-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{Connectivity, Neighborhood};
use crate::error::{Error, Result};
use crate::io::write_metaimage;
use crate::reconstruct::extract_boundary;
use crate::volume::{BinaryMask, LabelVolume, Volume, VolumeMeta};

/// Attempts per seed before voronoi placement gives up.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

pub const SPEC_FILE: &str = "phantom.json";
pub const INTERIOR_FILE: &str = "interior.mhd";
pub const SURFACE_FILE: &str = "surface.mhd";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.mhd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    TwoSpheres {
        centers: [Vec<f64>; 2],
        nucleus_radius: f64,
        coverage: f64,
        rng_seed: u64,
    },
    VoronoiCells {
        n_seeds: usize,
        rng_seed: u64,
        nucleus_radius: f64,
        coverage: f64,
        /// Minimum physical distance between seed points.
        min_seed_distance: f64,
    },
    Lobule2d {
        central_veins: Vec<Vec<f64>>,
        portal_veins: Vec<Vec<f64>>,
        vein_radius: f64,
    },
}

/// Complete, replayable description of a phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    #[serde(flatten)]
    pub generator: Generator,
}

#[derive(Debug, Clone)]
pub struct PhantomOutput {
    pub interior: BinaryMask,
    pub surface: BinaryMask,
    /// Absent for the lobule layout.
    pub ground_truth: Option<LabelVolume>,
}

impl PhantomSpec {
    /// 64³ volume with nuclei at (16, 32, 32) and (48, 32, 32).
    pub fn two_spheres_default() -> Self {
        Self {
            dims: vec![64, 64, 64],
            spacing: vec![1.0; 3],
            generator: Generator::TwoSpheres {
                centers: [vec![16.0, 32.0, 32.0], vec![48.0, 32.0, 32.0]],
                nucleus_radius: 4.0,
                coverage: 1.0,
                rng_seed: 42,
            },
        }
    }

    pub fn meta(&self) -> Result<VolumeMeta> {
        VolumeMeta::new(&self.dims, &self.spacing)
    }

    pub fn generate(&self) -> Result<PhantomOutput> {
        let meta = self.meta()?;
        match &self.generator {
            Generator::TwoSpheres {
                centers,
                nucleus_radius,
                coverage,
                rng_seed,
            } => two_spheres(
                &meta,
                [&centers[0], &centers[1]],
                *nucleus_radius,
                *coverage,
                *rng_seed,
            ),
            Generator::VoronoiCells {
                n_seeds,
                rng_seed,
                nucleus_radius,
                coverage,
                min_seed_distance,
            } => voronoi_cells(
                &meta,
                *n_seeds,
                *rng_seed,
                *nucleus_radius,
                *coverage,
                *min_seed_distance,
            ),
            Generator::Lobule2d {
                central_veins,
                portal_veins,
                vein_radius,
            } => lobule_2d(&meta, central_veins, portal_veins, *vein_radius),
        }
    }
}

fn check_coverage(coverage: f64) -> Result<()> {
    if coverage > 0.0 && coverage <= 1.0 {
        Ok(())
    } else {
        Err(Error::argument(format!(
            "coverage must lie in (0, 1], got {coverage}"
        )))
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius >= 0.0 {
        Ok(())
    } else {
        Err(Error::argument(format!(
            "radius must be finite and >= 0, got {radius}"
        )))
    }
}

/// Validates a point against the grid and pads it to three axes.
fn point3(meta: &VolumeMeta, p: &[f64]) -> Result<[f64; 3]> {
    if p.len() != meta.ndims() {
        return Err(Error::argument(format!(
            "point {p:?} has {} coordinates, volume has {} axes",
            p.len(),
            meta.ndims()
        )));
    }
    let dims = meta.dims3();
    let mut out = [0.5; 3];
    for (k, &v) in p.iter().enumerate() {
        if !(v >= 0.0 && v < dims[k] as f64) {
            return Err(Error::argument(format!(
                "point {p:?} lies outside dims {:?}",
                meta.dims()
            )));
        }
        out[k] = v;
    }
    Ok(out)
}

fn squared_distance(meta: &VolumeMeta, c: [usize; 3], p: [f64; 3]) -> f64 {
    let sp = meta.spacing3();
    (0..3)
        .map(|k| ((c[k] as f64 + 0.5 - p[k]) * sp[k]).powi(2))
        .sum()
}

/// Linear indices of the ball around `p`, in raster order.
fn ball(meta: &VolumeMeta, p: [f64; 3], radius: f64) -> Vec<usize> {
    let dims = meta.dims3();
    let sp = meta.spacing3();
    let home = p.map(|v| v.floor() as usize);
    let range = |k: usize| {
        let reach = (radius / sp[k]).ceil() + 1.0;
        let lo = (p[k] - reach).floor().max(0.0) as usize;
        let hi = ((p[k] + reach).ceil() as usize).min(dims[k] - 1);
        lo..=hi
    };
    let r2 = radius * radius;
    let mut out = Vec::new();
    for z in range(2) {
        for y in range(1) {
            for x in range(0) {
                let c = [x, y, z];
                if c == home || squared_distance(meta, c, p) <= r2 {
                    out.push(meta.index3(c));
                }
            }
        }
    }
    out
}

/// Keeps `round(coverage * n)` of the candidates, chosen by `rng`.
fn thin(candidates: Vec<usize>, coverage: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = candidates.len();
    let keep = ((coverage * n as f64).round() as usize).min(n);
    if keep == n {
        return candidates;
    }
    let mut picked: Vec<usize> = sample(rng, n, keep)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn mask_from_indices(meta: &VolumeMeta, indices: &[usize]) -> BinaryMask {
    let mut m = BinaryMask::empty(meta.clone());
    for &i in indices {
        m.set(i, true);
    }
    m
}

/// Nearest-point labels (1-based), ties to the lower index.
fn nearest_point_labels(meta: &VolumeMeta, points: &[[f64; 3]]) -> LabelVolume {
    let data = (0..meta.len())
        .into_par_iter()
        .map(|i| {
            let c = meta.coords3(i);
            let mut best = (f64::INFINITY, 0u32);
            for (k, &p) in points.iter().enumerate() {
                let d = squared_distance(meta, c, p);
                if d < best.0 {
                    best = (d, k as u32 + 1);
                }
            }
            best.1
        })
        .collect();
    Volume::from_vec(meta.clone(), data).expect("same grid")
}

/// Two balls inside a box whose one-voxel outer shell is the surface class.
pub fn two_spheres(
    meta: &VolumeMeta,
    centers: [&[f64]; 2],
    nucleus_radius: f64,
    coverage: f64,
    rng_seed: u64,
) -> Result<PhantomOutput> {
    check_coverage(coverage)?;
    check_radius(nucleus_radius)?;
    let points = [point3(meta, centers[0])?, point3(meta, centers[1])?];
    let balls = [
        ball(meta, points[0], nucleus_radius),
        ball(meta, points[1], nucleus_radius),
    ];
    let first = mask_from_indices(meta, &balls[0]);
    let nb = Neighborhood::new(meta, Connectivity::Full);
    if balls[1]
        .iter()
        .any(|&i| first.is_set(i) || nb.any(i, |j| first.is_set(j)))
    {
        return Err(Error::argument("nucleus balls overlap or touch"));
    }
    let mut interior = first;
    for &i in &balls[1] {
        interior.set(i, true);
    }

    let shell: Vec<usize> = (0..meta.len())
        .filter(|&i| meta.on_border(meta.coords3(i)) && !interior.is_set(i))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let surface = mask_from_indices(meta, &thin(shell, coverage, &mut rng));
    Ok(PhantomOutput {
        interior,
        surface,
        ground_truth: Some(nearest_point_labels(meta, &points)),
    })
}

/// Voronoi mosaic of `n_seeds` random points; the surface class is the
/// mosaic's inter-cell boundary.
pub fn voronoi_cells(
    meta: &VolumeMeta,
    n_seeds: usize,
    rng_seed: u64,
    nucleus_radius: f64,
    coverage: f64,
    min_seed_distance: f64,
) -> Result<PhantomOutput> {
    if n_seeds < 2 {
        return Err(Error::argument(format!(
            "need at least 2 seeds, got {n_seeds}"
        )));
    }
    check_coverage(coverage)?;
    check_radius(nucleus_radius)?;
    if !(min_seed_distance >= 0.0) {
        return Err(Error::argument(format!(
            "min_seed_distance must be >= 0, got {min_seed_distance}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let dims = meta.dims3();
    let sp = meta.spacing3();
    let ndims = meta.ndims();
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(n_seeds);
    let min2 = min_seed_distance * min_seed_distance;
    while points.len() < n_seeds {
        let placed = (0..MAX_PLACEMENT_ATTEMPTS).find_map(|_| {
            let mut p = [0.5; 3];
            for k in 0..ndims {
                p[k] = rng.random_range(0.0..dims[k] as f64);
            }
            let clear = points.iter().all(|q| {
                let d2: f64 = (0..3).map(|k| ((p[k] - q[k]) * sp[k]).powi(2)).sum();
                d2 >= min2
            });
            clear.then_some(p)
        });
        match placed {
            Some(p) => points.push(p),
            None => {
                return Err(Error::Generation(format!(
                    "placed {} of {n_seeds} seeds with minimum distance {min_seed_distance}",
                    points.len()
                )))
            }
        }
    }

    let truth = nearest_point_labels(meta, &points);
    let mut interior = BinaryMask::empty(meta.clone());
    let nb = Neighborhood::new(meta, Connectivity::Full);
    for &p in &points {
        let b = ball(meta, p, nucleus_radius);
        let prior = interior.clone();
        if b.iter()
            .any(|&i| prior.is_set(i) || nb.any(i, |j| prior.is_set(j)))
        {
            return Err(Error::Generation(
                "nucleus balls overlap; raise min_seed_distance".to_string(),
            ));
        }
        for i in b {
            interior.set(i, true);
        }
    }
    let boundary = extract_boundary(&truth, Connectivity::Full);
    let candidates: Vec<usize> = boundary
        .foreground()
        .filter(|&i| !interior.is_set(i))
        .collect();
    let surface = mask_from_indices(meta, &thin(candidates, coverage, &mut rng));
    Ok(PhantomOutput {
        interior,
        surface,
        ground_truth: Some(truth),
    })
}

/// 2D lobule layout: central-vein disks form the interior class, portal-vein
/// disks the surface class.
pub fn lobule_2d(
    meta: &VolumeMeta,
    central_veins: &[Vec<f64>],
    portal_veins: &[Vec<f64>],
    vein_radius: f64,
) -> Result<PhantomOutput> {
    if meta.ndims() != 2 {
        return Err(Error::argument(format!(
            "lobule layout is two-dimensional, got {} axes",
            meta.ndims()
        )));
    }
    check_radius(vein_radius)?;
    let disks = |pts: &[Vec<f64>]| -> Result<BinaryMask> {
        let mut m = BinaryMask::empty(meta.clone());
        for p in pts {
            for i in ball(meta, point3(meta, p)?, vein_radius) {
                m.set(i, true);
            }
        }
        Ok(m)
    };
    let interior = disks(central_veins)?;
    let surface = disks(portal_veins)?;
    if interior.foreground().any(|i| surface.is_set(i)) {
        return Err(Error::argument("central and portal vein disks overlap"));
    }
    Ok(PhantomOutput {
        interior,
        surface,
        ground_truth: None,
    })
}

/// Writes the masks, the ground truth (when present) and the JSON spec
/// sidecar into `dir`. Returns the written paths.
pub fn write_phantom(
    spec: &PhantomSpec,
    output: &PhantomOutput,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let interior = dir.join(INTERIOR_FILE);
    write_metaimage(output.interior.volume(), &interior)?;
    written.push(interior);
    let surface = dir.join(SURFACE_FILE);
    write_metaimage(output.surface.volume(), &surface)?;
    written.push(surface);
    if let Some(truth) = &output.ground_truth {
        let path = dir.join(GROUND_TRUTH_FILE);
        write_metaimage(truth, &path)?;
        written.push(path);
    }
    let sidecar = dir.join(SPEC_FILE);
    let json = serde_json::to_string_pretty(spec).expect("spec serializes");
    fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))?;
    written.push(sidecar);
    Ok(written)
}

pub fn read_spec(path: impl AsRef<Path>) -> Result<PhantomSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::argument(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskprep::{connected_components, label_count};

    fn disjoint(out: &PhantomOutput) -> bool {
        out.interior.foreground().all(|i| !out.surface.is_set(i))
    }

    #[test]
    fn two_spheres_split() {
        let spec = PhantomSpec::two_spheres_default();
        let out = spec.generate().unwrap();
        let truth = out.ground_truth.as_ref().unwrap();
        let ones = truth.data().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 131072);
        assert_eq!(truth.len() - ones, 131072);
        assert_eq!(truth.at3([31, 10, 50]), 1);
        assert_eq!(truth.at3([32, 10, 50]), 2);
        assert_eq!(
            label_count(&connected_components(&out.interior, Connectivity::Full)),
            2
        );
        // shell of a 64³ box
        assert_eq!(out.surface.count(), 64 * 64 * 64 - 62 * 62 * 62);
        assert!(disjoint(&out));
    }

    #[test]
    fn mirror_symmetric_nuclei() {
        let out = PhantomSpec::two_spheres_default().generate().unwrap();
        let meta = out.interior.meta().clone();
        for i in out.interior.foreground() {
            let [x, y, z] = meta.coords3(i);
            assert!(out.interior.is_set(meta.index3([63 - x, y, z])));
        }
    }

    #[test]
    fn coverage_thins_to_exact_count() {
        let meta = VolumeMeta::isotropic(&[32, 32, 32]).unwrap();
        let shell = 32usize.pow(3) - 30usize.pow(3);
        let c = [&[8.0, 16.0, 16.0][..], &[24.0, 16.0, 16.0][..]];
        let a = two_spheres(&meta, c, 3.0, 0.3, 7).unwrap();
        assert_eq!(a.surface.count(), (0.3 * shell as f64).round() as usize);
        let b = two_spheres(&meta, c, 3.0, 0.3, 7).unwrap();
        assert_eq!(a.surface.volume().data(), b.surface.volume().data());
        let other = two_spheres(&meta, c, 3.0, 0.3, 8).unwrap();
        assert_ne!(a.surface.volume().data(), other.surface.volume().data());
        assert!(two_spheres(&meta, c, 3.0, 0.0, 7).is_err());
        assert!(two_spheres(&meta, c, 3.0, 1.2, 7).is_err());
    }

    #[test]
    fn zero_radius_gives_single_voxels() {
        let meta = VolumeMeta::isotropic(&[16, 8, 8]).unwrap();
        let out = two_spheres(&meta, [&[4.0, 4.0, 4.0], &[12.0, 4.0, 4.0]], 0.0, 1.0, 1).unwrap();
        assert_eq!(out.interior.count(), 2);
        assert!(out.interior.is_set(meta.index3([4, 4, 4])));
    }

    #[test]
    fn overlapping_balls_rejected() {
        let meta = VolumeMeta::isotropic(&[32, 16, 16]).unwrap();
        let err = two_spheres(&meta, [&[12.0, 8.0, 8.0], &[16.0, 8.0, 8.0]], 3.0, 1.0, 1);
        assert!(matches!(err, Err(Error::Argument(_))));
        assert!(two_spheres(&meta, [&[12.0, 8.0], &[16.0, 8.0, 8.0]], 1.0, 1.0, 1).is_err());
        assert!(two_spheres(&meta, [&[40.0, 8.0, 8.0], &[16.0, 8.0, 8.0]], 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn voronoi_partition_and_reproducibility() {
        let meta = VolumeMeta::isotropic(&[32, 32, 32]).unwrap();
        let a = voronoi_cells(&meta, 6, 11, 1.5, 1.0, 8.0).unwrap();
        let truth = a.ground_truth.as_ref().unwrap();
        assert!(truth.data().iter().all(|&l| (1..=6).contains(&l)));
        let mut counts = [0usize; 7];
        for &l in truth.data() {
            counts[l as usize] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 32 * 32 * 32);
        assert!(counts[1..].iter().all(|&c| c > 0));
        assert!(disjoint(&a));
        assert_eq!(
            label_count(&connected_components(&a.interior, Connectivity::Full)),
            6
        );
        let b = voronoi_cells(&meta, 6, 11, 1.5, 1.0, 8.0).unwrap();
        assert_eq!(a.interior.volume().data(), b.interior.volume().data());
        assert_eq!(a.surface.volume().data(), b.surface.volume().data());
    }

    #[test]
    fn voronoi_errors() {
        let meta = VolumeMeta::isotropic(&[8, 8, 8]).unwrap();
        assert!(matches!(
            voronoi_cells(&meta, 1, 0, 1.0, 1.0, 1.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            voronoi_cells(&meta, 50, 0, 0.0, 1.0, 6.0),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn lobule_layouts() {
        let meta = VolumeMeta::isotropic(&[64, 64]).unwrap();
        let hex: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                vec![32.0 + 20.0 * a.cos(), 32.0 + 20.0 * a.sin()]
            })
            .collect();
        let one = lobule_2d(&meta, &[vec![32.0, 32.0]], &hex, 3.0).unwrap();
        assert!(one.ground_truth.is_none());
        assert_eq!(
            label_count(&connected_components(&one.interior, Connectivity::Full)),
            1
        );
        assert!(disjoint(&one));

        let three = [vec![12.0, 12.0], vec![50.0, 14.0], vec![30.0, 50.0]];
        let out = lobule_2d(&meta, &three, &hex, 3.0).unwrap();
        assert_eq!(
            label_count(&connected_components(&out.interior, Connectivity::Full)),
            3
        );

        assert!(lobule_2d(&meta, &[vec![32.0, 32.0]], &[vec![33.0, 32.0]], 3.0).is_err());
        let meta3 = VolumeMeta::isotropic(&[8, 8, 8]).unwrap();
        assert!(lobule_2d(&meta3, &[], &[], 1.0).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PhantomSpec {
            dims: vec![24, 16, 16],
            spacing: vec![1.0, 1.0, 2.0],
            generator: Generator::TwoSpheres {
                centers: [vec![6.0, 8.0, 8.0], vec![18.0, 8.0, 8.0]],
                nucleus_radius: 2.0,
                coverage: 0.5,
                rng_seed: 3,
            },
        };
        let out = spec.generate().unwrap();
        let files = write_phantom(&spec, &out, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let back = read_spec(dir.path().join(SPEC_FILE)).unwrap();
        assert_eq!(back, spec);
        let text = std::fs::read_to_string(dir.path().join(SPEC_FILE)).unwrap();
        assert!(text.contains("\"generator\": \"two_spheres\""));
        assert!(text.contains("\"rng_seed\": 3"));
    }
}
