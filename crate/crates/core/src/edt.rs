//! Exact Euclidean distance transforms.
//!
//! Linear-time separable scheme after Maurer, Qi & Raghavan: the squared
//! distance map is built one axis at a time, each pass replacing every
//! scanline by the lower envelope of the parabolas rooted at the sites
//! surviving the previous passes. All arithmetic before the final square
//! root is on squared distances, so with unit spacing every intermediate
//! value is an exactly represented integer.
//!
//! Distances are measured between voxel centers in physical units
//! (`index * spacing`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, DistanceField, Volume};

/// Squared Euclidean distance from every voxel center to the nearest
/// foreground voxel center.
pub fn squared_distance_to_set(mask: &BinaryMask) -> Result<Volume<f64>> {
    transform(mask, false)
}

/// Euclidean distance to the nearest foreground voxel; zero on the foreground.
///
/// Fails with "class mask empty" when the mask has no foreground.
pub fn distance_to_set(mask: &BinaryMask) -> Result<DistanceField> {
    transform(mask, true)
}

fn transform(mask: &BinaryMask, root: bool) -> Result<Volume<f64>> {
    if mask.count() == 0 {
        return Err(Error::domain("class mask empty"));
    }
    let meta = mask.meta().clone();
    let dims = meta.dims3();
    let spacing = meta.spacing3();
    let last = meta.ndims() - 1;

    let mut dist = vec![0.0; meta.len()];
    let bits = mask.volume().data();
    if last == 2 {
        // Rows and columns of each slice are solved while it is cache resident.
        let (nx, ny) = (dims[0], dims[1]);
        dist.par_chunks_mut(nx * ny)
            .zip(bits.par_chunks(nx * ny))
            .for_each_init(
                || {
                    (
                        Vec::with_capacity(ny),
                        Vec::with_capacity(ny),
                        vec![0.0; ny],
                    )
                },
                |(g, h, line), (plane, plane_bits)| {
                    for (row, b) in plane.chunks_mut(nx).zip(plane_bits.chunks(nx)) {
                        nearest_site(b, spacing[0], false, row);
                    }
                    if ny == 1 {
                        return;
                    }
                    for c in 0..nx {
                        for (i, l) in line.iter_mut().enumerate() {
                            *l = plane[i * nx + c];
                        }
                        lower_envelope(line, spacing[1], false, g, h);
                        for (i, &l) in line.iter().enumerate() {
                            plane[i * nx + c] = l;
                        }
                    }
                },
            );
        envelope_pass(&mut dist, dims[2], nx * ny, spacing[2], root);
    } else {
        dist.par_chunks_mut(dims[0])
            .zip(bits.par_chunks(dims[0]))
            .for_each(|(line, b)| nearest_site(b, spacing[0], root && last == 0, line));
        if last == 1 {
            envelope_pass(&mut dist, dims[1], dims[0], spacing[1], root);
        }
    }
    Volume::from_vec(meta, dist)
}

/// Signed distance: positive outside the foreground (distance to it), negative
/// inside (minus the distance to the background). Boundary foreground voxels
/// therefore carry `-spacing`, never 0.
pub fn signed_distance(mask: &BinaryMask) -> Result<DistanceField> {
    let fg = mask.count();
    if fg == 0 {
        return Err(Error::domain("class mask empty"));
    }
    if fg == mask.len() {
        return Err(Error::domain(
            "signed distance needs background voxels; mask is all foreground",
        ));
    }
    let outside = distance_to_set(mask)?;
    let inside = distance_to_set(&mask.complement())?;
    let data = outside
        .data()
        .par_iter()
        .zip(inside.data().par_iter())
        .map(|(&o, &i)| if o == 0.0 { -i } else { o })
        .collect();
    Volume::from_vec(mask.meta().clone(), data)
}

/// Columns gathered together by a strided pass.
const TILE: usize = 32;

/// One separable pass along the axis with extent `n` and memory stride `stride`.
fn envelope_pass(dist: &mut [f64], n: usize, stride: usize, spacing: f64, root: bool) {
    if n == 1 {
        if root {
            dist.par_iter_mut().for_each(|d| *d = d.sqrt());
        }
        return;
    }
    let init = || (Vec::with_capacity(n), Vec::with_capacity(n));
    if stride == 1 {
        dist.par_chunks_mut(n).for_each_init(init, |(g, h), line| {
            lower_envelope(line, spacing, root, g, h)
        });
        return;
    }

    // Strided lines are solved in tiles of adjacent columns. Each tile owns
    // disjoint runs of every row it spans, so tiles are independent and the
    // result does not depend on the worker count.
    let tiles = stride.div_ceil(TILE);
    let mut columns: Vec<Vec<&mut [f64]>> = Vec::new();
    for block in dist.chunks_mut(stride * n) {
        let first = columns.len();
        columns.extend((0..tiles).map(|_| Vec::with_capacity(n)));
        for row in block.chunks_mut(stride) {
            for (t, run) in row.chunks_mut(TILE).enumerate() {
                columns[first + t].push(run);
            }
        }
    }
    columns.into_par_iter().for_each_init(
        || {
            (
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                vec![0.0; n],
                Vec::new(),
            )
        },
        |(g, h, line, tile), mut runs| {
            let width = runs[0].len();
            tile.clear();
            for run in &runs {
                tile.extend_from_slice(run);
            }
            for c in 0..width {
                for (i, l) in line.iter_mut().enumerate() {
                    *l = tile[i * width + c];
                }
                lower_envelope(line, spacing, root, g, h);
                for (i, &l) in line.iter().enumerate() {
                    tile[i * width + c] = l;
                }
            }
            for (run, src) in runs.iter_mut().zip(tile.chunks(width)) {
                run.copy_from_slice(src);
            }
        },
    );
}

/// First pass: squared distance along a scanline to the nearest set bit,
/// infinite when the scanline has none.
fn nearest_site(bits: &[u8], spacing: f64, root: bool, line: &mut [f64]) {
    let mut last = None;
    for (i, (out, &b)) in line.iter_mut().zip(bits).enumerate() {
        if b != 0 {
            last = Some(i);
        }
        *out = last.map_or(f64::INFINITY, |j| (i - j) as f64);
    }
    let mut next = None;
    for (i, (out, &b)) in line.iter_mut().zip(bits).enumerate().rev() {
        if b != 0 {
            next = Some(i);
        }
        if let Some(j) = next {
            *out = out.min((j - i) as f64);
        }
        let d = *out * spacing;
        *out = if root { d.abs() } else { d * d };
    }
}

/// Replaces a scanline of squared partial distances by the exact squared
/// distances including this axis. `sites` / `pos` are reusable scratch.
fn lower_envelope(
    line: &mut [f64],
    spacing: f64,
    root: bool,
    sites: &mut Vec<f64>,
    pos: &mut Vec<usize>,
) {
    sites.clear();
    pos.clear();
    for (i, &f) in line.iter().enumerate() {
        if f.is_infinite() {
            continue;
        }
        while sites.len() >= 2 {
            let k = sites.len();
            if hidden(
                sites[k - 2],
                sites[k - 1],
                f,
                pos[k - 2],
                pos[k - 1],
                i,
                spacing,
            ) {
                sites.pop();
                pos.pop();
            } else {
                break;
            }
        }
        sites.push(f);
        pos.push(i);
    }
    if sites.is_empty() {
        return;
    }
    let sq = |site: usize, i: usize| {
        let d = (pos[site] as f64 - i as f64) * spacing;
        sites[site] + d * d
    };
    let mut l = 0;
    for (i, out) in line.iter_mut().enumerate() {
        while l + 1 < sites.len() && sq(l, i) > sq(l + 1, i) {
            l += 1;
        }
        let d = sq(l, i);
        *out = if root { d.sqrt() } else { d };
    }
}

/// True when the middle parabola (rooted at `v` with height `dv`) never
/// attains the minimum over the scanline, given neighbors at `u` and `w`.
#[inline]
fn hidden(du: f64, dv: f64, dw: f64, u: usize, v: usize, w: usize, spacing: f64) -> bool {
    let a = (v - u) as f64 * spacing;
    let b = (w - v) as f64 * spacing;
    let c = a + b;
    c * dv - b * du - a * dw - a * b * c > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeMeta;
    use proptest::prelude::*;

    fn mask_1d(n: usize, fg: &[usize], spacing: f64) -> BinaryMask {
        let meta = VolumeMeta::new(&[n], &[spacing]).unwrap();
        BinaryMask::from_fn(meta, |c| fg.contains(&c[0]))
    }

    /// Minimum over all foreground voxels of the squared physical distance.
    fn brute_force_sq(mask: &BinaryMask) -> Vec<f64> {
        let meta = mask.meta();
        let sp = meta.spacing3();
        let fg: Vec<[usize; 3]> = mask.foreground().map(|i| meta.coords3(i)).collect();
        (0..mask.len())
            .map(|i| {
                let c = meta.coords3(i);
                fg.iter()
                    .map(|f| {
                        (0..3)
                            .map(|k| {
                                let d = (c[k] as f64 - f[k] as f64) * sp[k];
                                d * d
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn line_example() {
        let d = distance_to_set(&mask_1d(5, &[2], 1.0)).unwrap();
        assert_eq!(d.data(), &[2.0, 1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn corner_diagonal() {
        let meta = VolumeMeta::isotropic(&[3, 3]).unwrap();
        let mask = BinaryMask::from_fn(meta, |c| c == [0, 0, 0]);
        let d = distance_to_set(&mask).unwrap();
        let expected = brute_force_sq(&mask)[8].sqrt();
        assert_eq!(d.get(&[2, 2]).unwrap(), expected);
        assert!((expected - 2.8284271).abs() < 1e-7);
    }

    #[test]
    fn spacing_scales_distance() {
        let d = distance_to_set(&mask_1d(5, &[0], 2.0)).unwrap();
        assert_eq!(d.data()[3], 6.0);
    }

    #[test]
    fn empty_mask_is_domain_error() {
        let err = distance_to_set(&mask_1d(5, &[], 1.0)).unwrap_err();
        assert!(err.to_string().contains("class mask empty"));
    }

    #[test]
    fn signed_line_example() {
        let d = signed_distance(&mask_1d(5, &[2], 1.0)).unwrap();
        assert_eq!(d.data(), &[2.0, 1.0, -1.0, 1.0, 2.0]);
    }

    #[test]
    fn signed_outside_matches_unsigned() {
        let mask = mask_1d(6, &[2, 3], 1.0);
        let signed = signed_distance(&mask).unwrap();
        let unsigned = distance_to_set(&mask).unwrap();
        let oracle = brute_force_sq(&mask);
        for i in [0, 1, 4, 5] {
            assert_eq!(signed.data()[i], unsigned.data()[i]);
            assert_eq!(signed.data()[i], oracle[i].sqrt());
        }
        assert_eq!(&signed.data()[2..4], &[-1.0, -1.0]);
    }

    #[test]
    fn signed_rejects_uniform_masks() {
        assert!(signed_distance(&mask_1d(3, &[0, 1, 2], 1.0)).is_err());
        assert!(signed_distance(&mask_1d(3, &[], 1.0)).is_err());
    }

    #[test]
    fn signed_antisymmetric_under_complement() {
        let meta = VolumeMeta::isotropic(&[6, 5, 4]).unwrap();
        let mask = BinaryMask::from_fn(meta, |[x, y, z]| (x * 7 + y * 3 + z * 5) % 4 == 0);
        let a = signed_distance(&mask).unwrap();
        let b = signed_distance(&mask.complement()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn translation_equivariance() {
        let meta = VolumeMeta::isotropic(&[20, 20, 20]).unwrap();
        let pts = [[5usize, 6, 7], [9, 4, 8], [6, 10, 5]];
        let shift = [3usize, 2, 4];
        let a = BinaryMask::from_fn(meta.clone(), |c| pts.contains(&c));
        let b = BinaryMask::from_fn(meta.clone(), |c| {
            pts.iter().any(|p| (0..3).all(|k| c[k] == p[k] + shift[k]))
        });
        let da = distance_to_set(&a).unwrap();
        let db = distance_to_set(&b).unwrap();
        for z in 4..10 {
            for y in 4..10 {
                for x in 4..10 {
                    assert_eq!(
                        da.at3([x, y, z]),
                        db.at3([x + shift[0], y + shift[1], z + shift[2]])
                    );
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force(
            dims in prop::collection::vec(1usize..9, 1..=3),
            spacing in prop::collection::vec(0.25f64..3.0, 3),
            bits in prop::collection::vec(prop::bool::weighted(0.1), 512),
            anisotropic in any::<bool>(),
        ) {
            let sp: Vec<f64> = if anisotropic { spacing[..dims.len()].to_vec() } else { vec![1.0; dims.len()] };
            let meta = VolumeMeta::new(&dims, &sp).unwrap();
            let mut fg: Vec<bool> = bits[..meta.len()].to_vec();
            fg[0] |= !fg.iter().any(|&b| b);
            let mask = BinaryMask::from_bools(meta, &fg).unwrap();
            let got = squared_distance_to_set(&mask).unwrap();
            let want = brute_force_sq(&mask);
            for (g, w) in got.data().iter().zip(&want) {
                if anisotropic {
                    prop_assert!((g - w).abs() <= 1e-12 * w, "{} vs {}", g, w);
                } else {
                    prop_assert_eq!(*g, *w);
                }
            }
            // zero set equals the foreground exactly
            for (i, g) in got.data().iter().enumerate() {
                prop_assert_eq!(*g == 0.0, mask.is_set(i));
            }
        }
    }
}
