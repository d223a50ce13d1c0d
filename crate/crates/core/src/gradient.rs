//! The β-weighted gradient function
//!
//! ```text
//! g(x) = β·d_I(x) / (β·d_I(x) + (1 − β)·d_S(x))
//! ```
//!
//! combining the distance to the interior class (`d_I`) with the distance to
//! the surface class (`d_S`). `g` is 0 on interior objects, 1 on surface
//! markers, and lower β shifts the watershed ridges toward the surface
//! markers.
//!
//! Distances are clamped to `max(d, 0)` first, so signed fields behave like
//! distance-to-set fields. Where the denominator vanishes:
//! both clamped distances 0 (overlapping classes) gives 0.5; otherwise β = 0
//! gives 0 and β = 1 gives 1.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::write_slice_pgm;
use crate::volume::{DistanceField, GradientField, Volume};

/// β used for cell-shape reconstruction, where nuclei (interior class) are
/// unreliable position markers.
pub const CELL_SHAPE_BETA: f64 = 0.1;
/// β used for lobule reconstruction, where central and portal veins weigh
/// equally.
pub const LOBULE_BETA: f64 = 0.5;

/// Value assigned where both classes claim a voxel.
pub const OVERLAP_VALUE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientParams {
    beta: f64,
}

impl GradientParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::argument(format!(
                "beta must lie in [0, 1], got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Pointwise gradient function for one voxel.
#[inline]
pub fn gradient_value(d_interior: f64, d_surface: f64, beta: f64) -> f64 {
    let a = d_interior.max(0.0);
    let b = d_surface.max(0.0);
    if a == 0.0 && b == 0.0 {
        return OVERLAP_VALUE;
    }
    let num = beta * a;
    let den = num + (1.0 - beta) * b;
    if den == 0.0 {
        // Only reachable at the endpoints: β = 0 with b = 0, or β = 1 with a = 0.
        return if beta >= 1.0 { 1.0 } else { 0.0 };
    }
    num / den
}

/// Applies [`gradient_value`] to every voxel.
pub fn combine(
    d_interior: &DistanceField,
    d_surface: &DistanceField,
    params: GradientParams,
) -> Result<GradientField> {
    if !d_interior.meta().same_grid(d_surface.meta()) {
        return Err(Error::argument(format!(
            "distance fields differ in geometry: {:?} vs {:?}",
            d_interior.meta(),
            d_surface.meta()
        )));
    }
    let beta = params.beta;
    let data = d_interior
        .data()
        .par_iter()
        .zip(d_surface.data().par_iter())
        .map(|(&a, &b)| gradient_value(a, b, beta))
        .collect();
    Volume::from_vec(d_interior.meta().clone(), data)
}

/// File name used for one β in a sweep.
pub fn sweep_file_name(beta: f64) -> String {
    format!("gradient_beta_{beta}.pgm")
}

/// Writes one normalized PGM slice of `g` per β into `out_dir`.
///
/// All β values are validated before anything is written.
pub fn beta_sweep(
    d_interior: &DistanceField,
    d_surface: &DistanceField,
    betas: &[f64],
    axis: usize,
    slice_index: usize,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let params: Vec<GradientParams> = betas
        .iter()
        .map(|&b| GradientParams::new(b))
        .collect::<Result<_>>()?;
    let out_dir = out_dir.as_ref();
    if !params.is_empty() {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    params
        .into_iter()
        .map(|p| {
            let g = combine(d_interior, d_surface, p)?;
            let path = out_dir.join(sweep_file_name(p.beta()));
            write_slice_pgm(&g, axis, slice_index, true, &path)?;
            Ok(path)
        })
        .collect()
}
