//! Building blocks for turning gray-value volumes into class masks:
//! global and tiled Otsu thresholding, binary morphology, connected
//! components, hole filling and small-object removal.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{Connectivity, Neighborhood};
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Element, LabelVolume, Volume, FOREGROUND};

pub const DEFAULT_BINS: usize = 256;

/// Otsu threshold over a `bins`-bucket histogram spanning `[min, max]`.
///
/// The returned value lies strictly between the largest value of the lower
/// class and the smallest value of the upper class, so `v > threshold`
/// reproduces the histogram partition exactly. Ties between equally good
/// buckets resolve to the lowest one.
pub fn otsu_threshold<T: Element>(gray: &Volume<T>, bins: usize) -> Result<f64> {
    let values: Vec<f64> = gray.data().iter().map(|v| v.to_f64()).collect();
    otsu_on_values(&values, bins)
}

/// Foreground where `value > threshold`.
pub fn binarize<T: Element>(gray: &Volume<T>, threshold: f64) -> BinaryMask {
    BinaryMask::from_nonzero(&gray.map(|v| u8::from(v.to_f64() > threshold)))
}

fn otsu_on_values(values: &[f64], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::argument(format!(
            "need at least 2 histogram bins, got {bins}"
        )));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return Err(Error::domain("degenerate histogram: image is constant"));
    }
    let range = hi - lo;
    let bucket = |v: f64| (((v - lo) / range * bins as f64) as usize).min(bins - 1);

    let mut counts = vec![0u64; bins];
    let mut sums = vec![0f64; bins];
    let mut bucket_min = vec![f64::INFINITY; bins];
    let mut bucket_max = vec![f64::NEG_INFINITY; bins];
    for &v in values {
        let b = bucket(v);
        counts[b] += 1;
        sums[b] += v;
        bucket_min[b] = bucket_min[b].min(v);
        bucket_max[b] = bucket_max[b].max(v);
    }
    let total = values.len() as f64;
    let total_sum: f64 = sums.iter().sum();

    let (mut best_k, mut best_var) = (None, -1.0f64);
    let (mut w0, mut s0) = (0f64, 0f64);
    for k in 0..bins - 1 {
        w0 += counts[k] as f64;
        s0 += sums[k];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = s0 / w0 - (total_sum - s0) / w1;
        let var = w0 * w1 * diff * diff;
        // relative slack so mathematically equal splits tie toward the lower bucket
        if var > best_var + best_var.abs() * 1e-12 {
            best_var = var;
            best_k = Some(k);
        }
    }
    let k = best_k.expect("two distinct values give a valid split");
    let below = bucket_max[..=k]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let above = bucket_min[k + 1..]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mid = below + (above - below) / 2.0;
    Ok(if mid < above { mid } else { below })
}

/// Locally adaptive Otsu binarization.
///
/// The volume is tiled into `window_dims` blocks (the last block along an
/// axis may be smaller). Each tile gets its own Otsu threshold, falling back
/// to the global threshold when the tile is constant. Per-voxel thresholds
/// are interpolated multilinearly between tile centers and clamped to the
/// outermost centers.
pub fn adaptive_otsu<T: Element>(
    gray: &Volume<T>,
    window_dims: &[usize],
    bins: usize,
) -> Result<BinaryMask> {
    let meta = gray.meta();
    if window_dims.len() != meta.ndims() {
        return Err(Error::argument(format!(
            "window has {} axes, volume has {}",
            window_dims.len(),
            meta.ndims()
        )));
    }
    if window_dims
        .iter()
        .zip(meta.dims())
        .any(|(&w, &d)| w == 0 || w > d)
    {
        return Err(Error::argument(format!(
            "window {window_dims:?} must be between 1 and dims {:?} per axis",
            meta.dims()
        )));
    }
    let dims = meta.dims3();
    let mut win = [1usize; 3];
    win[..window_dims.len()].copy_from_slice(window_dims);
    let tiles: [usize; 3] = std::array::from_fn(|k| dims[k].div_ceil(win[k]));
    let tile_of =
        |c: [usize; 3]| c[0] / win[0] + tiles[0] * (c[1] / win[1] + tiles[1] * (c[2] / win[2]));

    let n_tiles = tiles.iter().product::<usize>();
    let mut tile_values: Vec<Vec<f64>> = vec![Vec::new(); n_tiles];
    for (i, v) in gray.data().iter().enumerate() {
        tile_values[tile_of(meta.coords3(i))].push(v.to_f64());
    }
    let local: Vec<Option<f64>> = tile_values
        .par_iter()
        .map(|vals| otsu_on_values(vals, bins).ok())
        .collect();
    let thresholds: Vec<f64> = if local.iter().all(Option::is_some) {
        local.into_iter().map(Option::unwrap).collect()
    } else {
        let global = otsu_threshold(gray, bins)?;
        local.into_iter().map(|t| t.unwrap_or(global)).collect()
    };

    let centers: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            (0..tiles[k])
                .map(|t| {
                    let start = t * win[k];
                    let end = (start + win[k]).min(dims[k]);
                    (start + end - 1) as f64 / 2.0
                })
                .collect()
        })
        .collect();
    let bracket = |k: usize, c: usize| -> (usize, usize, f64) {
        let cs = &centers[k];
        let c = c as f64;
        let last = cs.len() - 1;
        if c <= cs[0] {
            return (0, 0, 0.0);
        }
        if c >= cs[last] {
            return (last, last, 0.0);
        }
        let i = cs.partition_point(|&x| x <= c) - 1;
        (i, i + 1, (c - cs[i]) / (cs[i + 1] - cs[i]))
    };

    let data: Vec<u8> = (0..gray.len())
        .into_par_iter()
        .map(|i| {
            let c = meta.coords3(i);
            let b: [(usize, usize, f64); 3] = std::array::from_fn(|k| bracket(k, c[k]));
            let mut t = 0.0;
            for corner in 0..8 {
                let mut w = 1.0;
                let mut idx = [0usize; 3];
                for k in 0..3 {
                    let upper = corner >> k & 1 == 1;
                    let (i0, i1, f) = b[k];
                    idx[k] = if upper { i1 } else { i0 };
                    w *= if upper { f } else { 1.0 - f };
                }
                if w != 0.0 {
                    t += w * thresholds[idx[0] + tiles[0] * (idx[1] + tiles[1] * idx[2])];
                }
            }
            if gray.data()[i].to_f64() > t {
                FOREGROUND
            } else {
                0
            }
        })
        .collect();
    BinaryMask::from_volume(Volume::from_vec(meta.clone(), data)?)
}

/// Shape of a structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeShape {
    /// Chebyshev ball: the full `(2r+1)^n` block.
    Box,
    /// City-block ball: voxels within L1 distance `r` (the face-connected
    /// neighborhood iterated `r` times).
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: SeShape,
    pub radius: usize,
}

impl StructuringElement {
    pub fn new(shape: SeShape, radius: usize) -> Self {
        Self { shape, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
    /// Erode, then dilate.
    Open,
    /// Dilate, then erode; the dilation may extend past the border.
    Close,
}

/// Binary morphology. Voxels outside the volume count as background.
pub fn morph(mask: &BinaryMask, op: MorphOp, se: StructuringElement) -> BinaryMask {
    match op {
        MorphOp::Erode => erode(mask, se),
        MorphOp::Dilate => dilate(mask, se),
        MorphOp::Open => dilate(&erode(mask, se), se),
        MorphOp::Close => close(mask, se),
    }
}

/// Closing on a grid padded by the radius, so the dilation is not clipped
/// before the erosion undoes it. This keeps closing extensive at the border.
fn close(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    if se.radius == 0 {
        return mask.clone();
    }
    let meta = mask.meta();
    let r = se.radius;
    let nd = meta.ndims();
    let dims = meta.dims3();
    let padded_dims: Vec<usize> = meta.dims().iter().map(|&n| n + 2 * r).collect();
    let padded_meta =
        crate::volume::VolumeMeta::new(&padded_dims, meta.spacing()).expect("padding a valid grid");
    let padded = BinaryMask::from_fn(padded_meta.clone(), |c| {
        let mut inner = [0usize; 3];
        for k in 0..nd {
            if c[k] < r || c[k] >= r + dims[k] {
                return false;
            }
            inner[k] = c[k] - r;
        }
        mask.is_set(meta.index3(inner))
    });
    let closed = erode(&dilate(&padded, se), se);
    BinaryMask::from_fn(meta.clone(), |c| {
        let mut outer = c;
        for v in outer.iter_mut().take(nd) {
            *v += r;
        }
        closed.is_set(padded_meta.index3(outer))
    })
}

fn dilate(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    apply(mask, se, true)
}

fn erode(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    apply(mask, se, false)
}

fn apply(mask: &BinaryMask, se: StructuringElement, dilating: bool) -> BinaryMask {
    let mut bits: Vec<bool> = mask.iter().collect();
    if se.radius == 0 {
        return mask.clone();
    }
    let meta = mask.meta();
    match se.shape {
        SeShape::Box => {
            let dims = meta.dims3();
            let mut stride = 1;
            for &n in &dims[..meta.ndims()] {
                bits = box_pass(&bits, n, stride, se.radius, dilating);
                stride *= n;
            }
        }
        SeShape::Cross => {
            let nb = Neighborhood::new(meta, Connectivity::Face);
            let full = nb.len();
            for _ in 0..se.radius {
                bits = (0..bits.len())
                    .into_par_iter()
                    .map(|i| {
                        let mut hits = 0;
                        nb.for_each(i, |j| hits += usize::from(bits[j]));
                        if dilating {
                            bits[i] || hits > 0
                        } else {
                            bits[i] && hits == full
                        }
                    })
                    .collect();
            }
        }
    }
    BinaryMask::from_bools(meta.clone(), &bits).expect("same grid")
}

/// 1D running window of half-width `r` along one axis, via prefix counts.
fn box_pass(bits: &[bool], n: usize, stride: usize, r: usize, dilating: bool) -> Vec<bool> {
    let block = n * stride;
    let mut out = vec![false; bits.len()];
    out.par_chunks_mut(block)
        .enumerate()
        .for_each(|(outer, chunk)| {
            let mut prefix = vec![0usize; n + 1];
            for inner in 0..stride {
                let base = outer * block + inner;
                for i in 0..n {
                    prefix[i + 1] = prefix[i] + usize::from(bits[base + i * stride]);
                }
                for i in 0..n {
                    let lo = i.saturating_sub(r);
                    let hi = (i + r).min(n - 1);
                    let count = prefix[hi + 1] - prefix[lo];
                    chunk[inner + i * stride] = if dilating {
                        count > 0
                    } else {
                        i >= r && i + r < n && count == 2 * r + 1
                    };
                }
            }
        });
    out
}

/// Labels maximal connected foreground sets 1..K, numbered in raster order of
/// each component's first voxel.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> LabelVolume {
    let meta = mask.meta().clone();
    let nb = Neighborhood::new(&meta, conn);
    let mut labels = vec![0u32; mask.len()];
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for start in 0..mask.len() {
        if !mask.is_set(start) || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            nb.for_each(i, |j| {
                if mask.is_set(j) && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            });
        }
    }
    Volume::from_vec(meta, labels).expect("same grid")
}

/// Number of labels in a 1..K labeling (its maximum).
pub fn label_count(labels: &LabelVolume) -> u32 {
    labels.data().iter().copied().max().unwrap_or(0)
}

/// Background components that do not reach the volume border (under `conn`
/// applied to the background) become foreground.
pub fn fill_holes(mask: &BinaryMask, conn: Connectivity) -> BinaryMask {
    let meta = mask.meta();
    let nb = Neighborhood::new(meta, conn);
    let mut outside = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    for i in 0..mask.len() {
        if !mask.is_set(i) && meta.on_border(meta.coords3(i)) {
            outside[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        nb.for_each(i, |j| {
            if !mask.is_set(j) && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        });
    }
    let bits: Vec<bool> = outside.iter().map(|&o| !o).collect();
    BinaryMask::from_bools(meta.clone(), &bits).expect("same grid")
}

/// Drops components smaller than `min_voxels` (relabeled 0) and renumbers the
/// survivors 1..K' in raster order of first appearance.
pub fn remove_small(labels: &LabelVolume, min_voxels: usize) -> LabelVolume {
    let max = label_count(labels) as usize;
    let mut sizes = vec![0usize; max + 1];
    for &l in labels.data() {
        sizes[l as usize] += 1;
    }
    let mut remap = vec![u32::MAX; max + 1];
    remap[0] = 0;
    let mut next = 0u32;
    let data = labels
        .data()
        .iter()
        .map(|&l| {
            let l = l as usize;
            if remap[l] == u32::MAX {
                remap[l] = if sizes[l] >= min_voxels {
                    next += 1;
                    next
                } else {
                    0
                };
            }
            remap[l]
        })
        .collect();
    Volume::from_vec(labels.meta().clone(), data).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeMeta;
    use proptest::prelude::*;

    fn gray(dims: &[usize], values: Vec<u8>) -> Volume<u8> {
        Volume::from_vec(VolumeMeta::isotropic(dims).unwrap(), values).unwrap()
    }

    /// Exhaustive between-class variance over every split of the sorted
    /// distinct integer values, compared exactly as rationals
    /// `(w1*s0 - w0*s1)^2 / (w0*w1)`. Returns the lower-class maximum of the
    /// first best split.
    fn brute_force_split(values: &[f64]) -> f64 {
        let ints: Vec<i128> = values.iter().map(|&v| v as i128).collect();
        let mut distinct = ints.clone();
        distinct.sort();
        distinct.dedup();
        let mut best: Option<(i128, i128, i128)> = None;
        for &t in &distinct[..distinct.len() - 1] {
            let (lo, hi): (Vec<i128>, Vec<i128>) = ints.iter().partition(|&&v| v <= t);
            let (w0, w1) = (lo.len() as i128, hi.len() as i128);
            let (s0, s1): (i128, i128) = (lo.iter().sum(), hi.iter().sum());
            let num = (w1 * s0 - w0 * s1).pow(2);
            let den = w0 * w1;
            let better = match best {
                None => true,
                Some((_, bn, bd)) => num * bd > bn * den,
            };
            if better {
                best = Some((t, num, den));
            }
        }
        best.unwrap().0 as f64
    }

    #[test]
    fn otsu_two_deltas() {
        let mut v = vec![0u8; 100];
        v.extend(vec![200u8; 100]);
        let g = gray(&[200], v);
        let t = otsu_threshold(&g, 256).unwrap();
        assert!((0.0..200.0).contains(&t));
        let m = binarize(&g, t);
        assert_eq!(m.count(), 100);
        assert!(m.foreground().all(|i| g.data()[i] == 200));
    }

    #[test]
    fn otsu_imbalanced_matches_brute_force() {
        let mut v = vec![0u8; 1000];
        v.extend(vec![200u8; 10]);
        let g = gray(&[1010], v);
        let values: Vec<f64> = g.data().iter().map(|&x| x as f64).collect();
        let split = brute_force_split(&values);
        assert_eq!(split, 0.0);
        let t = otsu_threshold(&g, 256).unwrap();
        let m = binarize(&g, t);
        assert!(m.iter().zip(&values).all(|(on, &v)| on == (v > split)));
    }

    #[test]
    fn otsu_constant_is_degenerate() {
        let g = gray(&[10], vec![7; 10]);
        let err = otsu_threshold(&g, 256).unwrap_err();
        assert!(err.to_string().contains("degenerate histogram"));
    }

    proptest! {
        #[test]
        fn otsu_matches_brute_force_on_small_value_sets(
            values in prop::collection::vec(0u8..16, 2..60),
        ) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let g = gray(&[values.len()], values.clone());
            let f: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            // with 256 bins over a range < 16 every distinct value has its own bucket
            let split = brute_force_split(&f);
            let t = otsu_threshold(&g, 256).unwrap();
            let m = binarize(&g, t);
            for (on, v) in m.iter().zip(&f) {
                prop_assert_eq!(on, *v > split);
            }
        }
    }

    #[test]
    fn adaptive_single_tile_equals_global() {
        let meta = VolumeMeta::isotropic(&[12, 10]).unwrap();
        let g = Volume::from_fn(meta, |[x, y, _]| ((x * 37 + y * 11) % 97) as u8);
        let global = binarize(&g, otsu_threshold(&g, 256).unwrap());
        let adaptive = adaptive_otsu(&g, &[12, 10], 256).unwrap();
        assert_eq!(global, adaptive);
    }

    #[test]
    fn adaptive_recovers_pattern_under_illumination_ramp() {
        // Two-level stripe pattern (height 40) on a ramp of 2 gray levels per
        // column; global Otsu fails, 8-wide tiles stay bimodal.
        let meta = VolumeMeta::isotropic(&[64, 16]).unwrap();
        let pattern = |x: usize, y: usize| (x / 2 + y / 2) % 2 == 0;
        let g = Volume::from_fn(meta.clone(), |[x, y, _]| {
            (2 * x + if pattern(x, y) { 40 } else { 0 }) as f64
        });
        let expected = BinaryMask::from_fn(meta, |[x, y, _]| pattern(x, y));
        let global = binarize(&g, otsu_threshold(&g, 256).unwrap());
        assert_ne!(global, expected);
        let adaptive = adaptive_otsu(&g, &[8, 16], 256).unwrap();
        assert_eq!(adaptive, expected);
    }

    #[test]
    fn adaptive_constant_image_errors() {
        let g = gray(&[8, 8], vec![3; 64]);
        assert!(adaptive_otsu(&g, &[4, 4], 256).is_err());
    }

    #[test]
    fn adaptive_constant_tile_uses_global() {
        // left tile constant, right tile bimodal
        let meta = VolumeMeta::isotropic(&[8, 2]).unwrap();
        let g = Volume::from_fn(meta, |[x, y, _]| if x < 4 { 5u8 } else { (y * 100) as u8 });
        let m = adaptive_otsu(&g, &[4, 2], 256).unwrap();
        assert!(m.count() > 0);
    }

    fn single_voxel(dims: &[usize], at: [usize; 3]) -> BinaryMask {
        BinaryMask::from_fn(VolumeMeta::isotropic(dims).unwrap(), |c| c == at)
    }

    #[test]
    fn dilate_cross_single_voxel() {
        let m = single_voxel(&[5, 5, 5], [2, 2, 2]);
        let d = morph(
            &m,
            MorphOp::Dilate,
            StructuringElement::new(SeShape::Cross, 1),
        );
        assert_eq!(d.count(), 7);
        let d2 = morph(
            &m,
            MorphOp::Dilate,
            StructuringElement::new(SeShape::Cross, 2),
        );
        assert_eq!(d2.count(), 25);
        let b = morph(
            &m,
            MorphOp::Dilate,
            StructuringElement::new(SeShape::Box, 1),
        );
        assert_eq!(b.count(), 27);
    }

    #[test]
    fn erode_box_cube_to_center() {
        let meta = VolumeMeta::isotropic(&[5, 5, 5]).unwrap();
        let cube = BinaryMask::from_fn(meta, |c| c.iter().all(|&v| (1..=3).contains(&v)));
        let e = morph(
            &cube,
            MorphOp::Erode,
            StructuringElement::new(SeShape::Box, 1),
        );
        assert_eq!(e.foreground().collect::<Vec<_>>(), vec![62]);
    }

    #[test]
    fn radius_zero_is_identity() {
        let m = single_voxel(&[4, 4], [1, 2, 0]);
        for op in [
            MorphOp::Erode,
            MorphOp::Dilate,
            MorphOp::Open,
            MorphOp::Close,
        ] {
            for shape in [SeShape::Box, SeShape::Cross] {
                assert_eq!(morph(&m, op, StructuringElement::new(shape, 0)), m);
            }
        }
    }

    #[test]
    fn outside_counts_as_background() {
        let full = BinaryMask::from_fn(VolumeMeta::isotropic(&[5]).unwrap(), |_| true);
        let e = morph(
            &full,
            MorphOp::Erode,
            StructuringElement::new(SeShape::Box, 1),
        );
        assert_eq!(
            e.iter().collect::<Vec<_>>(),
            vec![false, true, true, true, false]
        );
    }

    fn random_mask(dims: &[usize], bits: &[bool]) -> BinaryMask {
        let meta = VolumeMeta::isotropic(dims).unwrap();
        let n = meta.len();
        BinaryMask::from_bools(meta, &bits[..n]).unwrap()
    }

    /// Places `inner` in the middle of a grid padded by `pad` on every axis.
    fn pad(inner: &BinaryMask, pad: usize) -> BinaryMask {
        let d = inner.meta().dims();
        let dims: Vec<usize> = d.iter().map(|&n| n + 2 * pad).collect();
        let meta = VolumeMeta::isotropic(&dims).unwrap();
        let nd = d.len();
        BinaryMask::from_fn(meta, |c| {
            let mut ic = [0usize; 3];
            for k in 0..nd {
                if c[k] < pad || c[k] >= pad + d[k] {
                    return false;
                }
                ic[k] = c[k] - pad;
            }
            inner.is_set(inner.meta().index3(ic))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn open_close_idempotent(
            dims in prop::collection::vec(2usize..8, 2..=3),
            bits in prop::collection::vec(any::<bool>(), 512),
            box_shape in any::<bool>(),
            radius in 1usize..3,
        ) {
            let m = random_mask(&dims, &bits);
            let se = StructuringElement::new(if box_shape { SeShape::Box } else { SeShape::Cross }, radius);
            let co = morph(&morph(&m, MorphOp::Open, se), MorphOp::Close, se);
            let again = morph(&morph(&co, MorphOp::Open, se), MorphOp::Close, se);
            prop_assert_eq!(&again, &co);
            let o = morph(&m, MorphOp::Open, se);
            prop_assert_eq!(morph(&o, MorphOp::Open, se), o);
            let c = morph(&m, MorphOp::Close, se);
            prop_assert_eq!(morph(&c, MorphOp::Close, se), c);
        }

        #[test]
        fn erosion_dilation_duality(
            dims in prop::collection::vec(2usize..7, 2..=3),
            bits in prop::collection::vec(any::<bool>(), 512),
            box_shape in any::<bool>(),
            radius in 1usize..3,
        ) {
            // foreground kept away from the border so the outside convention never matters
            let m = pad(&random_mask(&dims, &bits), 2 * radius);
            let se = StructuringElement::new(if box_shape { SeShape::Box } else { SeShape::Cross }, radius);
            let lhs = morph(&m, MorphOp::Erode, se);
            let rhs = morph(&m.complement(), MorphOp::Dilate, se).complement();
            // the complement is foreground on the padding, where outside-background erodes
            let interior = pad(&BinaryMask::from_fn(VolumeMeta::isotropic(&dims).unwrap(), |_| true), 2 * radius);
            for i in interior.foreground() {
                prop_assert_eq!(lhs.is_set(i), rhs.is_set(i));
            }
        }
    }

    #[test]
    fn components_scan_order() {
        let meta = VolumeMeta::isotropic(&[5, 3]).unwrap();
        let m = BinaryMask::from_fn(meta, |c| c == [3, 0, 0] || c == [1, 2, 0]);
        let l = connected_components(&m, Connectivity::Full);
        assert_eq!(l.get(&[3, 0]).unwrap(), 1);
        assert_eq!(l.get(&[1, 2]).unwrap(), 2);
    }

    #[test]
    fn components_diagonal_depends_on_connectivity() {
        let meta = VolumeMeta::isotropic(&[3, 3]).unwrap();
        let m = BinaryMask::from_fn(meta, |c| c == [0, 0, 0] || c == [1, 1, 0]);
        assert_eq!(
            label_count(&connected_components(&m, Connectivity::Full)),
            1
        );
        assert_eq!(
            label_count(&connected_components(&m, Connectivity::Face)),
            2
        );
    }

    #[test]
    fn components_empty() {
        let m = BinaryMask::empty(VolumeMeta::isotropic(&[4, 4]).unwrap());
        assert_eq!(
            label_count(&connected_components(&m, Connectivity::Full)),
            0
        );
    }

    #[test]
    fn fill_hollow_shell() {
        let meta = VolumeMeta::isotropic(&[7, 7, 7]).unwrap();
        let inside = |c: [usize; 3]| c.iter().all(|&v| (1..=5).contains(&v));
        let solid = BinaryMask::from_fn(meta.clone(), inside);
        let shell = BinaryMask::from_fn(meta, |c| inside(c) && c.iter().any(|&v| v == 1 || v == 5));
        assert_eq!(fill_holes(&shell, Connectivity::Face), solid);
        assert_eq!(fill_holes(&solid, Connectivity::Face), solid);
    }

    #[test]
    fn fill_open_background_unchanged() {
        let meta = VolumeMeta::isotropic(&[6, 6]).unwrap();
        // C shape open to the right
        let m = BinaryMask::from_fn(meta, |[x, y, _]| {
            (1..=4).contains(&x) && (1..=4).contains(&y) && !(x >= 2 && (2..=3).contains(&y))
        });
        assert_eq!(fill_holes(&m, Connectivity::Face), m);
    }

    #[test]
    fn remove_small_examples() {
        let meta = VolumeMeta::isotropic(&[13]).unwrap();
        let labels = Volume::from_vec(meta, vec![1, 1, 1, 0, 2, 2, 2, 2, 2, 2, 2, 2, 2]).unwrap();
        let kept = remove_small(&labels, 5);
        assert_eq!(label_count(&kept), 1);
        assert_eq!(&kept.data()[..4], &[0, 0, 0, 0]);
        assert!(kept.data()[4..].iter().all(|&l| l == 1));
        assert_eq!(remove_small(&labels, 0), labels);
        assert_eq!(label_count(&remove_small(&labels, 100)), 0);
    }

    #[test]
    fn components_deterministic_under_thread_count() {
        let meta = VolumeMeta::isotropic(&[16, 16, 8]).unwrap();
        let m = BinaryMask::from_fn(meta, |[x, y, z]| (x * 31 + y * 17 + z * 7) % 5 < 2);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = one.install(|| connected_components(&m, Connectivity::Face));
        let b = connected_components(&m, Connectivity::Face);
        assert_eq!(a, b);
    }
}
