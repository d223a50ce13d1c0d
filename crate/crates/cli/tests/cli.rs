use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surfrecon::io::{read_metaimage, read_pgm, write_metaimage};
use surfrecon::{AnyVolume, Volume, VolumeMeta};

fn surfrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surfrecon"))
        .args(args)
        .env_remove("SURFRECON_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = surfrecon(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn default_phantom(dir: &Path) -> PathBuf {
    let out = dir.join("phantom");
    ok(&["phantom", "--out-dir", s(&out)]);
    out
}

fn cube_labels(lo: usize) -> Volume<u32> {
    let meta = VolumeMeta::isotropic(&[12, 12, 12]).unwrap();
    Volume::from_fn(meta, move |[x, y, z]| {
        u32::from((lo..lo + 10).contains(&x) && (1..11).contains(&y) && (1..11).contains(&z))
    })
}

#[test]
fn phantom_writes_masks_truth_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = default_phantom(dir.path());
    for name in [
        "interior.mhd",
        "surface.mhd",
        "ground_truth.mhd",
        "phantom.json",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let spec = fs::read_to_string(out.join("phantom.json")).unwrap();
    assert!(spec.contains("two_spheres"));
}

#[test]
fn reconstruct_phantom_gives_two_labels_and_obj() {
    let dir = tempfile::tempdir().unwrap();
    let ph = default_phantom(dir.path());
    let labels = dir.path().join("labels.mhd");
    let obj = dir.path().join("cells.obj");
    let boundary = dir.path().join("boundary.mhd");
    let stdout = ok(&[
        "reconstruct",
        "--interior",
        s(&ph.join("interior.mhd")),
        "--surface",
        s(&ph.join("surface.mhd")),
        "--beta",
        "0.5",
        "--out-labels",
        s(&labels),
        "--out-boundary",
        s(&boundary),
        "--out-obj",
        s(&obj),
    ]);
    assert!(stdout.starts_with("2 regions"), "{stdout}");
    assert!(stdout.contains("\n1\t131072\t"), "{stdout}");

    let AnyVolume::U32(l) = read_metaimage(&labels).unwrap() else {
        panic!("labels are not uint32");
    };
    let mut ids: Vec<u32> = l.data().to_vec();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids, vec![1, 2]);
    assert!(read_metaimage(&boundary).unwrap().to_mask().count() > 0);

    let text = fs::read_to_string(&obj).unwrap();
    assert!(text.lines().any(|l| l == "g label_1"));
    assert!(text.lines().any(|l| l == "g label_2"));
}

#[test]
fn out_of_range_beta_is_a_usage_error_before_io() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.mhd");
    let out = surfrecon(&[
        "reconstruct",
        "--interior",
        "/nonexistent/interior.mhd",
        "--surface",
        "/nonexistent/surface.mhd",
        "--beta",
        "1.5",
        "--out-labels",
        s(&labels),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("--beta"), "{err}");
    assert!(!err.contains("nonexistent"), "{err}");
    assert!(!labels.exists());
}

#[test]
fn mismatched_grids_fail() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mhd");
    let b = dir.path().join("b.mhd");
    write_metaimage(
        &Volume::<u8>::from_fn(VolumeMeta::isotropic(&[8, 8]).unwrap(), |[x, _, _]| {
            u8::from(x == 2)
        }),
        &a,
    )
    .unwrap();
    write_metaimage(
        &Volume::<u8>::from_fn(VolumeMeta::isotropic(&[8, 9]).unwrap(), |[x, _, _]| {
            u8::from(x == 6)
        }),
        &b,
    )
    .unwrap();
    let labels = dir.path().join("labels.mhd");
    let out = surfrecon(&[
        "reconstruct",
        "--interior",
        s(&a),
        "--surface",
        s(&b),
        "--out-labels",
        s(&labels),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).starts_with("error:"));
    assert!(!labels.exists());
}

#[test]
fn edt_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::isotropic(&[5]).unwrap();
    let point = dir.path().join("point.mhd");
    let empty = dir.path().join("empty.mhd");
    let full = dir.path().join("full.mhd");
    write_metaimage(
        &Volume::<u8>::from_fn(meta.clone(), |[x, _, _]| u8::from(x == 2)),
        &point,
    )
    .unwrap();
    write_metaimage(&Volume::<u8>::zeros(meta.clone()), &empty).unwrap();
    write_metaimage(&Volume::<u8>::from_fn(meta, |_| 1), &full).unwrap();

    let field = dir.path().join("d.mhd");
    ok(&["edt", "--mask", s(&point), "--out", s(&field)]);
    let AnyVolume::F64(d) = read_metaimage(&field).unwrap() else {
        panic!("distance field is not float64");
    };
    assert_eq!(d.data(), &[2.0, 1.0, 0.0, 1.0, 2.0]);

    let out = surfrecon(&[
        "edt",
        "--mask",
        s(&empty),
        "--out",
        s(&dir.path().join("e.mhd")),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr_of(&out).contains("class mask empty"));

    let out = surfrecon(&[
        "edt",
        "--signed",
        "--mask",
        s(&full),
        "--out",
        s(&dir.path().join("f.mhd")),
    ]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn validate_identical_and_shifted() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("r.mhd");
    let a = dir.path().join("a.mhd");
    write_metaimage(&cube_labels(1), &r).unwrap();
    write_metaimage(&cube_labels(2), &a).unwrap();

    let csv = dir.path().join("same.csv");
    ok(&[
        "validate",
        "--reference",
        s(&r),
        "--approx",
        s(&r),
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(
        text.contains("\n1,1,1000,1000,1000,0,0,0.0,0.0,0.0\n"),
        "{text}"
    );
    assert!(text.contains("# fraction_lt_10pct=1.0\n"), "{text}");

    let csv = dir.path().join("shifted.csv");
    ok(&[
        "validate",
        "--reference",
        s(&r),
        "--approx",
        s(&a),
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(
        text.contains("\n1,1,1000,1000,900,100,100,0.0,0.1111111111111111,0.1111111111111111\n"),
        "{text}"
    );
}

#[test]
fn validate_border_only_reference() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::isotropic(&[6, 6]).unwrap();
    let r = dir.path().join("r.mhd");
    write_metaimage(
        &Volume::<u32>::from_fn(meta, |[x, _, _]| 1 + u32::from(x >= 3)),
        &r,
    )
    .unwrap();
    let csv = dir.path().join("v.csv");
    ok(&[
        "validate",
        "--reference",
        s(&r),
        "--approx",
        s(&r),
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let body: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert!(body.is_empty(), "{text}");
    assert!(text.contains("# excluded_border_labels=1;2\n"), "{text}");
}

#[test]
fn sweep_writes_one_pgm_per_beta() {
    let dir = tempfile::tempdir().unwrap();
    let ph = default_phantom(dir.path());
    let out = dir.path().join("sweep");
    ok(&[
        "sweep",
        "--interior",
        s(&ph.join("interior.mhd")),
        "--surface",
        s(&ph.join("surface.mhd")),
        "--betas",
        "0.1,0.5,0.9",
        "--out-dir",
        s(&out),
    ]);
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3, "{names:?}");
    for name in names {
        let (w, h, _) = read_pgm(out.join(name)).unwrap();
        assert_eq!((w, h), (64, 64));
    }
}

#[test]
fn segment_otsu_splits_bimodal_volume() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::isotropic(&[8, 8, 4]).unwrap();
    let gray = Volume::<u8>::from_fn(meta, |[x, y, _]| if (x + y) % 3 == 0 { 200 } else { 40 });
    let input = dir.path().join("gray.mhd");
    let out = dir.path().join("mask.mhd");
    write_metaimage(&gray, &input).unwrap();
    ok(&["segment", "--otsu", "--input", s(&input), "--out", s(&out)]);
    let mask = read_metaimage(&out).unwrap().to_mask();
    let expected: Vec<bool> = gray.data().iter().map(|&g| g == 200).collect();
    assert_eq!(mask.iter().collect::<Vec<_>>(), expected);

    let out = surfrecon(&[
        "segment",
        "--input",
        s(&input),
        "--out",
        s(&dir.path().join("x.mhd")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn segment_adaptive_with_morphology() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::isotropic(&[16, 16]).unwrap();
    let gray = Volume::<u8>::from_fn(meta, |[x, y, _]| {
        let base = if x < 8 { 0 } else { 100 };
        base + if (4..12).contains(&y) && x % 8 >= 2 && x % 8 < 6 {
            80
        } else {
            10
        }
    });
    let input = dir.path().join("gray.mhd");
    let out = dir.path().join("mask.mhd");
    write_metaimage(&gray, &input).unwrap();
    ok(&[
        "segment",
        "--adaptive",
        "--window",
        "8,16",
        "--morph",
        "open:box:1",
        "--input",
        s(&input),
        "--out",
        s(&out),
    ]);
    assert_eq!(read_metaimage(&out).unwrap().to_mask().count(), 2 * 4 * 8);
}

#[test]
fn gradient_and_watershed_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VolumeMeta::isotropic(&[9]).unwrap();
    let interior = dir.path().join("i.mhd");
    let surface = dir.path().join("s.mhd");
    write_metaimage(
        &Volume::<u8>::from_fn(meta.clone(), |[x, _, _]| u8::from(x == 0 || x == 8)),
        &interior,
    )
    .unwrap();
    write_metaimage(
        &Volume::<u8>::from_fn(meta, |[x, _, _]| u8::from(x == 4)),
        &surface,
    )
    .unwrap();

    let g = dir.path().join("g.mhd");
    ok(&[
        "gradient",
        "--interior",
        s(&interior),
        "--surface",
        s(&surface),
        "--beta",
        "0.5",
        "--out",
        s(&g),
    ]);
    let AnyVolume::F64(field) = read_metaimage(&g).unwrap() else {
        panic!("gradient is not float64");
    };
    assert_eq!(field.data()[0], 0.0);
    assert_eq!(field.data()[4], 1.0);
    assert_eq!(field.data()[2], 0.5);

    let labels = dir.path().join("w.mhd");
    ok(&[
        "watershed",
        "--field",
        s(&g),
        "--lines",
        "--out",
        s(&labels),
    ]);
    let AnyVolume::U32(l) = read_metaimage(&labels).unwrap() else {
        panic!("labels are not uint32");
    };
    assert_eq!(l.data(), &[1, 1, 1, 1, 0, 2, 2, 2, 2]);
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ph = default_phantom(dir.path());
    let run = |threads: &str, name: &str| {
        let labels = dir.path().join(format!("{name}.mhd"));
        let obj = dir.path().join(format!("{name}.obj"));
        ok(&[
            "--threads",
            threads,
            "reconstruct",
            "--interior",
            s(&ph.join("interior.mhd")),
            "--surface",
            s(&ph.join("surface.mhd")),
            "--lines",
            "--out-labels",
            s(&labels),
            "--out-obj",
            s(&obj),
        ]);
        (
            fs::read(labels.with_extension("raw")).unwrap(),
            fs::read(obj).unwrap(),
        )
    };
    let one = run("1", "one");
    assert_eq!(one, run("4", "four"));
    assert_eq!(one, run("1", "again"));
}

#[test]
fn thread_flag_wins_over_environment() {
    let dir = tempfile::tempdir().unwrap();
    let base = |extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_surfrecon"));
        cmd.env("SURFRECON_THREADS", "not-a-number").args(extra);
        cmd.args(["phantom", "--out-dir", s(&dir.path().join("p"))]);
        cmd.output().unwrap()
    };
    assert_eq!(base(&[]).status.code(), Some(1));
    assert!(base(&["--threads", "2"]).status.success());
}
