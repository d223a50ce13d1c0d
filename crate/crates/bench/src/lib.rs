//! Shared fixtures for the benchmarks.

use surfrecon::phantom::two_spheres;
use surfrecon::{BinaryMask, GradientParams, PhantomOutput, PhantomSpec, Volume, VolumeMeta};

/// Two-spheres phantom in an `n^3` grid, geometry scaled with `n / 64`.
pub fn spheres(n: usize, coverage: f64) -> PhantomOutput {
    let meta = VolumeMeta::isotropic(&[n, n, n]).expect("valid grid");
    let s = n as f64 / 64.0;
    two_spheres(
        &meta,
        [
            &[16.0 * s, 32.0 * s, 32.0 * s],
            &[48.0 * s, 32.0 * s, 32.0 * s],
        ],
        4.0 * s,
        coverage,
        42,
    )
    .expect("spheres fit the grid")
}

/// Voronoi mosaic with `cells` nuclei in a `dims` grid.
pub fn mosaic(dims: &[usize], cells: usize, coverage: f64) -> PhantomOutput {
    PhantomSpec {
        dims: dims.to_vec(),
        spacing: vec![1.0; dims.len()],
        generator: surfrecon::phantom::Generator::VoronoiCells {
            n_seeds: cells,
            rng_seed: 9,
            nucleus_radius: 2.0,
            coverage,
            min_seed_distance: 12.0,
        },
    }
    .generate()
    .expect("mosaic placement succeeds")
}

/// Gradient field of a phantom, ready for flooding.
pub fn gradient_of(interior: &BinaryMask, surface: &BinaryMask, beta: f64) -> Volume<f64> {
    let d_i = surfrecon::edt::distance_to_set(interior).expect("interior not empty");
    let d_s = surfrecon::edt::distance_to_set(surface).expect("surface not empty");
    surfrecon::gradient::combine(
        &d_i,
        &d_s,
        GradientParams::new(beta).expect("beta in range"),
    )
    .expect("same grid")
}
