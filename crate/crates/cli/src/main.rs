//! `surfrecon` command line.
//!
//! Every subcommand reads and writes MetaImage (`.mhd` + `.raw`) volumes;
//! numeric flags are checked by the argument parser, so a bad value is a
//! usage error before any file is touched.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use surfrecon::edt::{distance_to_set, signed_distance};
use surfrecon::gradient::{beta_sweep, combine};
use surfrecon::io::{read_metaimage, write_metaimage};
use surfrecon::maskprep::{
    adaptive_otsu, binarize, morph, otsu_threshold, MorphOp, SeShape, StructuringElement,
};
use surfrecon::phantom::{read_spec, write_phantom, Generator};
use surfrecon::reconstruct::{export_obj, reconstruct_surfaces, LabelSelector};
use surfrecon::validate::{validate, write_report};
use surfrecon::watershed::watershed;
use surfrecon::{
    BinaryMask, Connectivity, GradientParams, LabelVolume, PhantomSpec, SeedMode, WatershedOptions,
};

const THREADS_ENV: &str = "SURFRECON_THREADS";

#[derive(Parser)]
#[command(
    name = "surfrecon",
    version,
    about = "Surface reconstruction from interior and partial surface evidence"
)]
struct Cli {
    /// Worker threads; 0 picks one per core. Results never depend on this.
    /// Falls back to SURFRECON_THREADS when not given.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Euclidean distance to the foreground of a mask.
    Edt(EdtArgs),
    /// Blend interior and surface distance fields into the gradient g.
    Gradient(GradientArgs),
    /// Flood a scalar field, from its regional minima or from seed labels.
    Watershed(WatershedArgs),
    /// Full pipeline: distance fields, gradient, seeded watershed and exports.
    Reconstruct(ReconstructArgs),
    /// Compare an approximated labeling against a reference labeling.
    Validate(ValidateArgs),
    /// Generate a synthetic phantom with ground truth.
    Phantom(PhantomArgs),
    /// Write one gradient slice per beta as PGM.
    Sweep(SweepArgs),
    /// Threshold a grayscale volume into a binary mask.
    Segment(SegmentArgs),
}

#[derive(Args)]
struct EdtArgs {
    /// Input mask; nonzero voxels are foreground.
    #[arg(long)]
    mask: PathBuf,
    /// Output distance field (float64).
    #[arg(long)]
    out: PathBuf,
    /// Negative inside the foreground, positive outside.
    #[arg(long)]
    signed: bool,
}

#[derive(Args)]
struct GradientArgs {
    #[arg(long)]
    interior: PathBuf,
    #[arg(long)]
    surface: PathBuf,
    /// Weight of the interior distance, in [0, 1].
    #[arg(long, value_parser = parse_beta)]
    beta: f64,
    /// Output gradient field (float64).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WatershedArgs {
    /// Scalar field to flood.
    #[arg(long)]
    field: PathBuf,
    /// Seed labels; without it every regional minimum seeds a basin.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Output labels (uint32).
    #[arg(long)]
    out: PathBuf,
    /// Mark voxels where basins meet with label 0.
    #[arg(long)]
    lines: bool,
    #[arg(long, default_value = "full")]
    connectivity: Connectivity,
    /// Merge minima shallower than this depth before flooding.
    #[arg(long, value_parser = parse_non_negative)]
    min_depth: Option<f64>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Interior class mask (nuclei, central veins, ...).
    #[arg(long)]
    interior: PathBuf,
    /// Surface class mask (membrane markers, portal veins, ...).
    #[arg(long)]
    surface: PathBuf,
    /// Weight of the interior distance. 0.1 suits cells, 0.5 lobules.
    #[arg(long, value_parser = parse_beta, default_value_t = 0.1)]
    beta: f64,
    #[arg(long)]
    out_labels: PathBuf,
    /// Voxels adjacent to a different label (uint8 mask).
    #[arg(long)]
    out_boundary: Option<PathBuf>,
    /// Voxel-face surface mesh of every label.
    #[arg(long)]
    out_obj: Option<PathBuf>,
    /// Keep watershed lines as label 0.
    #[arg(long)]
    lines: bool,
    #[arg(long, default_value = "full")]
    connectivity: Connectivity,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    approx: PathBuf,
    /// Output CSV report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhantomArgs {
    /// JSON phantom spec; defaults to two spheres in a 64^3 grid.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the surface coverage fraction.
    #[arg(long, value_parser = parse_fraction)]
    coverage: Option<f64>,
    /// Override the random seed.
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    interior: PathBuf,
    #[arg(long)]
    surface: PathBuf,
    /// Comma-separated betas, each in [0, 1].
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_beta)]
    betas: Vec<f64>,
    /// Axis perpendicular to the exported slice.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
    axis: u8,
    /// Slice index; defaults to the middle slice.
    #[arg(long)]
    slice: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("method").required(true).args(["otsu", "adaptive"])))]
struct SegmentArgs {
    /// Grayscale input volume.
    #[arg(long)]
    input: PathBuf,
    /// Output mask (uint8).
    #[arg(long)]
    out: PathBuf,
    /// One global Otsu threshold.
    #[arg(long)]
    otsu: bool,
    /// Per-window Otsu thresholds, interpolated between windows.
    #[arg(long, requires = "window")]
    adaptive: bool,
    /// Window extent per axis, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(usize))]
    window: Vec<usize>,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(2..))]
    bins: u32,
    /// Morphology applied in order, e.g. `open:box:1,close:cross:2`.
    #[arg(long, value_delimiter = ',', value_parser = parse_morph)]
    morph: Vec<(MorphOp, StructuringElement)>,
}

fn parse_beta(s: &str) -> std::result::Result<f64, String> {
    let beta: f64 = s.parse().map_err(|e| format!("{e}"))?;
    GradientParams::new(beta)
        .map(|p| p.beta())
        .map_err(|e| e.to_string())
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_non_negative(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and non-negative"))
    }
}

fn parse_morph(s: &str) -> std::result::Result<(MorphOp, StructuringElement), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [op, shape, radius] = parts[..] else {
        return Err(format!("`{s}` is not op:shape:radius"));
    };
    let op = match op {
        "erode" => MorphOp::Erode,
        "dilate" => MorphOp::Dilate,
        "open" => MorphOp::Open,
        "close" => MorphOp::Close,
        other => {
            return Err(format!(
                "unknown morphology `{other}` (erode, dilate, open, close)"
            ))
        }
    };
    let shape = match shape {
        "box" => SeShape::Box,
        "cross" => SeShape::Cross,
        other => return Err(format!("unknown element shape `{other}` (box, cross)")),
    };
    let radius = radius
        .parse()
        .map_err(|e| format!("radius `{radius}`: {e}"))?;
    Ok((op, StructuringElement::new(shape, radius)))
}

fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(read_metaimage(path)
        .with_context(|| format!("reading {}", path.display()))?
        .to_mask())
}

fn read_labels(path: &Path) -> Result<LabelVolume> {
    read_metaimage(path)
        .and_then(|v| v.to_labels())
        .with_context(|| format!("reading {}", path.display()))
}

fn run_edt(args: EdtArgs) -> Result<()> {
    let mask = read_mask(&args.mask)?;
    let field = if args.signed {
        signed_distance(&mask)?
    } else {
        distance_to_set(&mask)?
    };
    write_metaimage(&field, &args.out)?;
    Ok(())
}

fn run_gradient(args: GradientArgs) -> Result<()> {
    let params = GradientParams::new(args.beta)?;
    let interior = read_mask(&args.interior)?;
    let surface = read_mask(&args.surface)?;
    if !interior.meta().same_grid(surface.meta()) {
        bail!("interior and surface masks are on different grids");
    }
    let d_i = distance_to_set(&interior).context("interior class")?;
    let d_s = distance_to_set(&surface).context("surface class")?;
    write_metaimage(&combine(&d_i, &d_s, params)?, &args.out)?;
    Ok(())
}

fn run_watershed(args: WatershedArgs) -> Result<()> {
    let field = read_metaimage(&args.field)
        .with_context(|| format!("reading {}", args.field.display()))?
        .to_f64();
    let seeds = args.seeds.as_deref().map(read_labels).transpose()?;
    let opts = WatershedOptions {
        connectivity: args.connectivity,
        produce_lines: args.lines,
        seed_mode: if seeds.is_some() {
            SeedMode::FromSeeds
        } else {
            SeedMode::FromMinima
        },
        min_basin_depth: args.min_depth,
    };
    let labels = watershed(&field, seeds.as_ref(), &opts)?;
    write_metaimage(&labels, &args.out)?;
    Ok(())
}

fn run_reconstruct(args: ReconstructArgs) -> Result<()> {
    let interior = read_mask(&args.interior)?;
    let surface = read_mask(&args.surface)?;
    let opts = WatershedOptions {
        connectivity: args.connectivity,
        produce_lines: args.lines,
        ..Default::default()
    };
    let result = reconstruct_surfaces(&interior, &surface, args.beta, &opts)?;
    write_metaimage(&result.labels, &args.out_labels)?;
    if let Some(path) = &args.out_boundary {
        write_metaimage(result.boundary.volume(), path)?;
    }
    if let Some(path) = &args.out_obj {
        export_obj(&result.labels, LabelSelector::All, path)?;
    }

    println!(
        "{} regions, {} line voxels",
        result.stats.len(),
        result.line_voxels
    );
    println!("label\tvoxels\tvolume\tcenter_of_mass");
    for s in &result.stats {
        let com: Vec<String> = s.center_of_mass.iter().map(|c| format!("{c:.3}")).collect();
        println!(
            "{}\t{}\t{}\t({})",
            s.label,
            s.voxels,
            s.volume,
            com.join(", ")
        );
    }
    Ok(())
}

fn run_validate(args: ValidateArgs) -> Result<()> {
    let reference = read_labels(&args.reference)?;
    let approx = read_labels(&args.approx)?;
    let report = validate(&reference, &approx)?;
    write_report(&report, &args.out)?;
    let s = &report.summary;
    println!(
        "{} pairs scored, median deviation {}, max deviation {}, fraction below 10% {}",
        s.scored_pairs, s.median_deviation, s.max_deviation, s.fraction_lt_10pct
    );
    Ok(())
}

fn run_phantom(args: PhantomArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => read_spec(path)?,
        None => PhantomSpec::two_spheres_default(),
    };
    match &mut spec.generator {
        Generator::TwoSpheres {
            coverage, rng_seed, ..
        }
        | Generator::VoronoiCells {
            coverage, rng_seed, ..
        } => {
            if let Some(c) = args.coverage {
                *coverage = c;
            }
            if let Some(s) = args.rng_seed {
                *rng_seed = s;
            }
        }
        Generator::Lobule2d { .. } => {
            if args.coverage.is_some() || args.rng_seed.is_some() {
                bail!("the lobule_2d generator takes neither --coverage nor --rng-seed");
            }
        }
    }
    let output = spec.generate()?;
    for path in write_phantom(&spec, &output, &args.out_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let interior = read_mask(&args.interior)?;
    let surface = read_mask(&args.surface)?;
    if !interior.meta().same_grid(surface.meta()) {
        bail!("interior and surface masks are on different grids");
    }
    let axis = usize::from(args.axis);
    let slice = args.slice.unwrap_or(interior.meta().dims3()[axis] / 2);
    let d_i = distance_to_set(&interior).context("interior class")?;
    let d_s = distance_to_set(&surface).context("surface class")?;
    for path in beta_sweep(&d_i, &d_s, &args.betas, axis, slice, &args.out_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run_segment(args: SegmentArgs) -> Result<()> {
    let gray = read_metaimage(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .to_f64();
    let bins = args.bins as usize;
    let mut mask = if args.adaptive {
        adaptive_otsu(&gray, &args.window, bins)?
    } else {
        let t = otsu_threshold(&gray, bins)?;
        println!("threshold {t}");
        binarize(&gray, t)
    };
    for (op, se) in args.morph {
        mask = morph(&mask, op, se);
    }
    println!("{} foreground voxels", mask.count());
    write_metaimage(mask.volume(), &args.out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .parse()
                .with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    match cli.command {
        Command::Edt(a) => run_edt(a),
        Command::Gradient(a) => run_gradient(a),
        Command::Watershed(a) => run_watershed(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Validate(a) => run_validate(a),
        Command::Phantom(a) => run_phantom(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Segment(a) => run_segment(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
