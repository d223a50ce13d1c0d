//! Comparison of an approximated labeling against a reference labeling.
//!
//! Each reference region that does not touch the volume border is paired
//! with the approximated region found at its (rounded) center of mass, and
//! the pair is scored by three voxel classes: overlap (in both), error class
//! 1 (reference only) and error class 2 (approximation only). Line voxels
//! (label 0) belong to no region on either side.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, VolumeMeta};

pub const CSV_HEADER: &str = "reference_label,approx_label,ref_vol,approx_vol,overlap,error1,error2,volume_deviation,error1_ratio,error2_ratio";

/// Deviation below which a pair counts as well reconstructed in the summary.
pub const GOOD_DEVIATION: f64 = 0.10;

/// Unweighted mean voxel index of label `id`, one entry per axis.
pub fn center_of_mass(labels: &LabelVolume, id: u32) -> Result<Vec<f64>> {
    let meta = labels.meta();
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for (i, _) in labels.data().iter().enumerate().filter(|(_, &l)| l == id) {
        let c = meta.coords3(i);
        for k in 0..3 {
            sum[k] += c[k] as f64;
        }
        n += 1;
    }
    if n == 0 || id == 0 {
        return Err(Error::argument(format!("label {id} not present")));
    }
    Ok(sum[..meta.ndims()].iter().map(|s| s / n as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub reference_label: u32,
    /// `None` when no approximated region could be found.
    pub approx_label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairMatching {
    pub pairs: Vec<MatchedPair>,
    /// Reference labels owning at least one voxel on a volume face.
    pub excluded_border_labels: Vec<u32>,
}

/// Per-label voxel statistics gathered in one raster scan.
struct LabelScan {
    /// label -> (count, coordinate sum, touches border)
    regions: BTreeMap<u32, (usize, [f64; 3], bool)>,
}

impl LabelScan {
    fn new(labels: &LabelVolume) -> Self {
        let meta = labels.meta();
        let mut regions = BTreeMap::new();
        for (i, &l) in labels.data().iter().enumerate() {
            if l == 0 {
                continue;
            }
            let c = meta.coords3(i);
            let e = regions.entry(l).or_insert((0usize, [0.0f64; 3], false));
            e.0 += 1;
            for k in 0..3 {
                e.1[k] += c[k] as f64;
            }
            e.2 |= meta.on_border(c);
        }
        Self { regions }
    }
}

fn check_grids(a: &VolumeMeta, b: &VolumeMeta) -> Result<()> {
    if a.same_grid(b) {
        Ok(())
    } else {
        Err(Error::argument(format!(
            "reference and approximation differ in geometry: {a:?} vs {b:?}"
        )))
    }
}

/// Pairs every interior reference region with an approximated region.
///
/// The partner is the approximated label at the voxel nearest the region's
/// center of mass. When that voxel lies outside the reference region or is
/// unlabeled in the approximation, the partner is taken from the reference
/// voxel with a nonzero approximated label that is closest to the center of
/// mass (first in raster order on ties).
pub fn match_pairs(reference: &LabelVolume, approx: &LabelVolume) -> Result<PairMatching> {
    check_grids(reference.meta(), approx.meta())?;
    let scan = LabelScan::new(reference);
    Ok(match_from_scan(reference, approx, &scan))
}

fn match_from_scan(
    reference: &LabelVolume,
    approx: &LabelVolume,
    scan: &LabelScan,
) -> PairMatching {
    let meta = reference.meta();
    let dims = meta.dims3();
    let mut out = PairMatching::default();
    let mut needs_fallback: HashMap<u32, [f64; 3]> = HashMap::new();
    for (&label, &(n, sum, border)) in &scan.regions {
        if border {
            out.excluded_border_labels.push(label);
            continue;
        }
        let com = sum.map(|s| s / n as f64);
        let mut c = [0usize; 3];
        for k in 0..3 {
            c[k] = (com[k].round() as usize).min(dims[k] - 1);
        }
        let idx = meta.index3(c);
        let a = approx.data()[idx];
        let approx_label = if reference.data()[idx] == label && a != 0 {
            Some(a)
        } else {
            needs_fallback.insert(label, com);
            None
        };
        out.pairs.push(MatchedPair {
            reference_label: label,
            approx_label,
        });
    }
    if !needs_fallback.is_empty() {
        // label -> (squared distance, approx label), first hit kept on ties
        let mut best: HashMap<u32, (f64, u32)> = HashMap::new();
        for (i, (&r, &a)) in reference.data().iter().zip(approx.data()).enumerate() {
            if a == 0 {
                continue;
            }
            let Some(com) = needs_fallback.get(&r) else {
                continue;
            };
            let c = meta.coords3(i);
            let d2: f64 = (0..3).map(|k| (c[k] as f64 - com[k]).powi(2)).sum();
            match best.get(&r) {
                Some(&(d, _)) if d <= d2 => {}
                _ => {
                    best.insert(r, (d2, a));
                }
            }
        }
        for p in &mut out.pairs {
            if p.approx_label.is_none() {
                p.approx_label = best.get(&p.reference_label).map(|&(_, a)| a);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPairComparison {
    pub reference_label: u32,
    pub approx_label: Option<u32>,
    pub overlap_voxels: u64,
    /// Reference-only voxels.
    pub error1_voxels: u64,
    /// Approximation-only voxels.
    pub error2_voxels: u64,
    pub reference_volume: u64,
    pub approx_volume: u64,
    /// `|approx_volume - reference_volume| / reference_volume`
    pub volume_deviation: f64,
    /// `error1 / overlap`, infinite or NaN when there is no overlap.
    pub error1_ratio: f64,
    pub error2_ratio: f64,
}

impl CellPairComparison {
    pub fn from_counts(
        reference_label: u32,
        approx_label: Option<u32>,
        reference_volume: u64,
        approx_volume: u64,
        overlap_voxels: u64,
    ) -> Self {
        let error1_voxels = reference_volume - overlap_voxels;
        let error2_voxels = approx_volume - overlap_voxels;
        let overlap = overlap_voxels as f64;
        Self {
            reference_label,
            approx_label,
            overlap_voxels,
            error1_voxels,
            error2_voxels,
            reference_volume,
            approx_volume,
            volume_deviation: (approx_volume as f64 - reference_volume as f64).abs()
                / reference_volume as f64,
            error1_ratio: error1_voxels as f64 / overlap,
            error2_ratio: error2_voxels as f64 / overlap,
        }
    }

    /// A pair without overlap carries no usable shape comparison and is left
    /// out of the summary statistics.
    pub fn is_degenerate(&self) -> bool {
        self.overlap_voxels == 0
    }
}

/// Voxel counts for one pair.
pub fn compare_pair(
    reference: &LabelVolume,
    approx: &LabelVolume,
    pair: MatchedPair,
) -> Result<CellPairComparison> {
    check_grids(reference.meta(), approx.meta())?;
    let (mut r, mut a, mut o) = (0u64, 0u64, 0u64);
    for (&rl, &al) in reference.data().iter().zip(approx.data()) {
        let in_r = rl == pair.reference_label;
        let in_a = pair.approx_label == Some(al) && al != 0;
        r += u64::from(in_r);
        a += u64::from(in_a);
        o += u64::from(in_r && in_a);
    }
    if r == 0 {
        return Err(Error::argument(format!(
            "reference label {} not present",
            pair.reference_label
        )));
    }
    Ok(CellPairComparison::from_counts(
        pair.reference_label,
        pair.approx_label,
        r,
        a,
        o,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    /// Non-degenerate pairs entering the statistics below.
    pub scored_pairs: usize,
    pub degenerate_pairs: usize,
    /// NaN when no pair is scored.
    pub median_deviation: f64,
    pub max_deviation: f64,
    pub fraction_lt_10pct: f64,
}

impl ValidationSummary {
    pub fn from_pairs(pairs: &[CellPairComparison]) -> Self {
        let mut devs: Vec<f64> = pairs
            .iter()
            .filter(|p| !p.is_degenerate())
            .map(|p| p.volume_deviation)
            .collect();
        devs.sort_by(f64::total_cmp);
        let n = devs.len();
        let (median, max, frac) = if n == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let median = if n % 2 == 1 {
                devs[n / 2]
            } else {
                (devs[n / 2 - 1] + devs[n / 2]) / 2.0
            };
            let good = devs.iter().filter(|&&d| d < GOOD_DEVIATION).count();
            (median, devs[n - 1], good as f64 / n as f64)
        };
        Self {
            scored_pairs: n,
            degenerate_pairs: pairs.len() - n,
            median_deviation: median,
            max_deviation: max,
            fraction_lt_10pct: frac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Sorted by `volume_deviation` ascending, then reference label.
    pub pairs: Vec<CellPairComparison>,
    pub excluded_border_labels: Vec<u32>,
    pub summary: ValidationSummary,
}

impl ValidationReport {
    pub fn new(mut pairs: Vec<CellPairComparison>, excluded_border_labels: Vec<u32>) -> Self {
        pairs.sort_by(|a, b| {
            a.volume_deviation
                .total_cmp(&b.volume_deviation)
                .then(a.reference_label.cmp(&b.reference_label))
        });
        let summary = ValidationSummary::from_pairs(&pairs);
        Self {
            pairs,
            excluded_border_labels,
            summary,
        }
    }
}

/// Matches regions and scores every pair.
pub fn validate(reference: &LabelVolume, approx: &LabelVolume) -> Result<ValidationReport> {
    check_grids(reference.meta(), approx.meta())?;
    let ref_scan = LabelScan::new(reference);
    let matching = match_from_scan(reference, approx, &ref_scan);

    let mut approx_counts: HashMap<u32, u64> = HashMap::new();
    let mut overlap: HashMap<(u32, u32), u64> = HashMap::new();
    for (&r, &a) in reference.data().iter().zip(approx.data()) {
        if a == 0 {
            continue;
        }
        *approx_counts.entry(a).or_default() += 1;
        if r != 0 {
            *overlap.entry((r, a)).or_default() += 1;
        }
    }
    let pairs = matching
        .pairs
        .iter()
        .map(|p| {
            let r = ref_scan.regions[&p.reference_label].0 as u64;
            let (a, o) = match p.approx_label {
                Some(al) => (
                    approx_counts.get(&al).copied().unwrap_or(0),
                    overlap.get(&(p.reference_label, al)).copied().unwrap_or(0),
                ),
                None => (0, 0),
            };
            CellPairComparison::from_counts(p.reference_label, p.approx_label, r, a, o)
        })
        .collect();
    Ok(ValidationReport::new(
        pairs,
        matching.excluded_border_labels,
    ))
}

/// Fraction of voxels labeled in both volumes whose approximated label maps
/// to the reference label, where each approximated label maps to the
/// reference label it overlaps most (lower label on ties). Line voxels are
/// ignored on both sides; NaN when no voxel is labeled in both.
pub fn label_agreement(reference: &LabelVolume, approx: &LabelVolume) -> Result<f64> {
    check_grids(reference.meta(), approx.meta())?;
    let mut overlap: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (&r, &a) in reference.data().iter().zip(approx.data()) {
        if r != 0 && a != 0 {
            *overlap.entry((a, r)).or_default() += 1;
        }
    }
    let mut best: BTreeMap<u32, (u64, u32)> = BTreeMap::new();
    let mut total = 0u64;
    for (&(a, r), &n) in &overlap {
        total += n;
        let e = best.entry(a).or_insert((n, r));
        if n > e.0 {
            *e = (n, r);
        }
    }
    let agreeing: u64 = best.values().map(|&(n, _)| n).sum();
    Ok(agreeing as f64 / total as f64)
}

/// Renders the CSV report.
pub fn report_to_csv(report: &ValidationReport) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for p in &report.pairs {
        let approx = p
            .approx_label
            .map_or_else(|| "none".to_string(), |a| a.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:?},{:?},{:?}",
            p.reference_label,
            approx,
            p.reference_volume,
            p.approx_volume,
            p.overlap_voxels,
            p.error1_voxels,
            p.error2_voxels,
            p.volume_deviation,
            p.error1_ratio,
            p.error2_ratio
        );
    }
    let m = &report.summary;
    let excluded: Vec<String> = report
        .excluded_border_labels
        .iter()
        .map(u32::to_string)
        .collect();
    let _ = writeln!(s, "# pairs={}", report.pairs.len());
    let _ = writeln!(s, "# scored_pairs={}", m.scored_pairs);
    let _ = writeln!(s, "# degenerate_pairs={}", m.degenerate_pairs);
    let _ = writeln!(s, "# median_deviation={:?}", m.median_deviation);
    let _ = writeln!(s, "# max_deviation={:?}", m.max_deviation);
    let _ = writeln!(s, "# fraction_lt_10pct={:?}", m.fraction_lt_10pct);
    let _ = writeln!(s, "# excluded_border_labels={}", excluded.join(";"));
    s
}

pub fn write_report(report: &ValidationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_to_csv(report)).map_err(|e| Error::io(path, e))
}

fn csv_error(line: usize, message: impl std::fmt::Display) -> Error {
    Error::argument(format!("report line {line}: {message}"))
}

/// Parses a report written by [`write_report`].
pub fn parse_report(text: &str) -> Result<ValidationReport> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(csv_error(1, "missing or unexpected header")),
    }
    let mut pairs = Vec::new();
    let mut meta: HashMap<String, String> = HashMap::new();
    for (n, line) in lines {
        let n = n + 1;
        if let Some(kv) = line.strip_prefix("# ") {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| csv_error(n, "expected key=value"))?;
            meta.insert(k.to_string(), v.to_string());
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(csv_error(
                n,
                format!("expected 10 fields, found {}", f.len()),
            ));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| csv_error(n, e));
        let real = |s: &str| s.parse::<f64>().map_err(|e| csv_error(n, e));
        let label = |s: &str| s.parse::<u32>().map_err(|e| csv_error(n, e));
        pairs.push(CellPairComparison {
            reference_label: label(f[0])?,
            approx_label: if f[1] == "none" {
                None
            } else {
                Some(label(f[1])?)
            },
            reference_volume: int(f[2])?,
            approx_volume: int(f[3])?,
            overlap_voxels: int(f[4])?,
            error1_voxels: int(f[5])?,
            error2_voxels: int(f[6])?,
            volume_deviation: real(f[7])?,
            error1_ratio: real(f[8])?,
            error2_ratio: real(f[9])?,
        });
    }
    let get = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::argument(format!("report lacks `# {k}=`")))
    };
    let parse_f = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|e| Error::argument(format!("report `{k}`: {e}")))
    };
    let parse_u = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|e| Error::argument(format!("report `{k}`: {e}")))
    };
    let excluded = get("excluded_border_labels")?;
    let excluded_border_labels = if excluded.is_empty() {
        Vec::new()
    } else {
        excluded
            .split(';')
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::argument(format!("report exclusions: {e}")))
            })
            .collect::<Result<_>>()?
    };
    Ok(ValidationReport {
        pairs,
        excluded_border_labels,
        summary: ValidationSummary {
            scored_pairs: parse_u("scored_pairs")?,
            degenerate_pairs: parse_u("degenerate_pairs")?,
            median_deviation: parse_f("median_deviation")?,
            max_deviation: parse_f("max_deviation")?,
            fraction_lt_10pct: parse_f("fraction_lt_10pct")?,
        },
    })
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ValidationReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text)
}
