//! End-to-end runs of the `acind` binary: file layouts, exit codes and
//! determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use acind::io::{
    parse_acv_csv, parse_geometry_csv, parse_pgm16, parse_trace_csv, F32Grid, F32GRID_HEADER_LEN,
};
use acind::{forward_project, ImageGrid};
use tempfile::TempDir;

fn acind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acind"))
        .args(args)
        .env_remove("ACIND_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = acind(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    acind(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Ellipse phantom plus one scan, returning (prefix, sinogram path).
fn scanned(dir: &Path, size: usize, views: usize) -> (PathBuf, PathBuf) {
    let prefix = dir.join("ph");
    let size = size.to_string();
    let materials = "3";
    ok(&[
        "phantom",
        "--kind",
        "ellipse",
        "--size",
        &size,
        "--seed",
        "7",
        "--materials",
        materials,
        "--out-prefix",
        s(&prefix),
    ]);
    let sino = dir.join(format!("sino{views}.f32g"));
    let img = dir.join("ph.img.f32g");
    ok(&[
        "scan",
        "--image",
        s(&img),
        "--views",
        &views.to_string(),
        "--out",
        s(&sino),
    ]);
    (prefix, sino)
}

#[test]
fn phantom_writes_three_files_with_exact_sizes() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("ell");
    let args = [
        "phantom",
        "--kind",
        "ellipse",
        "--size",
        "64",
        "--seed",
        "7",
        "--materials",
        "6",
        "--out-prefix",
        s(&prefix),
    ];
    ok(&args);
    let img = fs::read(dir.path().join("ell.img.f32g")).unwrap();
    let labels = fs::read(dir.path().join("ell.labels.f32g")).unwrap();
    let acv = fs::read_to_string(dir.path().join("ell.acv.csv")).unwrap();
    assert_eq!(img.len(), 4 + 2 + 4 + 4 + 64 * 64 * 4);
    assert_eq!(labels.len(), F32GRID_HEADER_LEN + 64 * 64 * 4);
    assert_eq!(parse_acv_csv(&acv).unwrap().len(), 6);

    let lm = F32Grid::from_bytes(&labels)
        .unwrap()
        .to_labels(Some(6))
        .unwrap();
    assert_eq!(lm.num_materials(), 6);

    ok(&args);
    assert_eq!(fs::read(dir.path().join("ell.img.f32g")).unwrap(), img);
    assert_eq!(
        fs::read(dir.path().join("ell.labels.f32g")).unwrap(),
        labels
    );
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&["phantom", "--kind", "ellipse", "--size", "64"]), 2);
    assert_eq!(code(&["phantom", "--kind", "cube", "--out-prefix", "x"]), 2);
    assert_eq!(code(&["recon", "--sino", "a.f32g"]), 2);
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("p");
    assert_eq!(
        code(&[
            "phantom",
            "--kind",
            "ellipse",
            "--materials",
            "9",
            "--out-prefix",
            s(&prefix)
        ]),
        2
    );
}

#[test]
fn unreadable_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.f32g");
    let out = dir.path().join("s.f32g");
    assert_eq!(
        code(&[
            "scan",
            "--image",
            s(&missing),
            "--views",
            "20",
            "--out",
            s(&out)
        ]),
        1
    );

    let garbage = dir.path().join("garbage.f32g");
    fs::write(&garbage, b"not a grid").unwrap();
    assert_eq!(
        code(&[
            "scan",
            "--image",
            s(&garbage),
            "--views",
            "20",
            "--out",
            s(&out)
        ]),
        1
    );
}

#[test]
fn zero_image_scans_to_zero_sinogram() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("zero.f32g");
    F32Grid::from_image(&ImageGrid::zeros(16, 16))
        .save(&img)
        .unwrap();
    let sino = dir.path().join("zero.sino.f32g");
    ok(&[
        "scan",
        "--image",
        s(&img),
        "--views",
        "8",
        "--out",
        s(&sino),
    ]);
    let g = F32Grid::load(&sino).unwrap();
    assert_eq!((g.height, g.width), (8, 23));
    assert!(g.data.iter().all(|&v| v == 0.0));
}

#[test]
fn sinograms_round_trip_through_files() {
    let dir = TempDir::new().unwrap();
    let (prefix, _) = scanned(dir.path(), 32, 20);
    let img_path = PathBuf::from(format!("{}.img.f32g", s(&prefix)));
    let image = F32Grid::load(&img_path).unwrap().to_image().unwrap();
    for views in [20usize, 60] {
        let sino = dir.path().join(format!("v{views}.f32g"));
        ok(&[
            "scan",
            "--image",
            s(&img_path),
            "--views",
            &views.to_string(),
            "--out",
            s(&sino),
        ]);
        let grid = F32Grid::load(&sino).unwrap();
        assert_eq!(grid.height, views);

        let geom_text = fs::read_to_string(dir.path().join(format!("v{views}.geom.csv"))).unwrap();
        let geom = parse_geometry_csv(&geom_text).unwrap();
        assert_eq!(geom.num_angles(), views);
        let expected = forward_project(&image, &geom).unwrap();
        let rounded: Vec<f32> = expected.data().iter().map(|&v| v as f32).collect();
        assert_eq!(grid.data, rounded);
    }
}

#[test]
fn fbp_recon_is_fast() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("ph");
    ok(&[
        "phantom",
        "--kind",
        "ellipse",
        "--size",
        "64",
        "--seed",
        "7",
        "--out-prefix",
        s(&prefix),
    ]);
    let sino = dir.path().join("s.f32g");
    ok(&[
        "scan",
        "--image",
        s(&dir.path().join("ph.img.f32g")),
        "--views",
        "60",
        "--out",
        s(&sino),
    ]);
    let out = dir.path().join("fbp");
    let t = Instant::now();
    ok(&[
        "recon",
        "--sino",
        s(&sino),
        "--method",
        "fbp",
        "--out-dir",
        s(&out),
    ]);
    assert!(t.elapsed() < Duration::from_secs(5));
    let recon = F32Grid::load(out.join("recon.f32g")).unwrap();
    assert_eq!((recon.height, recon.width), (64, 64));
}

fn small_recon(sino: &Path, method: &str, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "recon",
        "--sino",
        s(sino),
        "--method",
        method,
        "--materials",
        "3",
        "--epochs",
        "30",
        "--eval-every",
        "10",
        "--features",
        "8",
        "--width",
        "16",
        "--depth",
        "2",
        "--out-dir",
        s(out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn acind_recon_writes_all_artifacts_deterministically() {
    let dir = TempDir::new().unwrap();
    let (prefix, sino) = scanned(dir.path(), 16, 12);
    let gt = format!("{}.img.f32g", s(&prefix));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    small_recon(&sino, "ac-ind", &a, &["--eval-gt", &gt]);
    small_recon(&sino, "ac-ind", &b, &["--eval-gt", &gt]);

    for name in [
        "recon.f32g",
        "seg.f32g",
        "trace.csv",
        "ckpt.bin",
        "acv.csv",
        "best.f32g",
    ] {
        let first = fs::read(a.join(name)).unwrap_or_else(|_| panic!("{name} missing"));
        assert_eq!(
            first,
            fs::read(b.join(name)).unwrap(),
            "{name} differs between runs"
        );
    }
    let trace = parse_trace_csv(&fs::read_to_string(a.join("trace.csv")).unwrap()).unwrap();
    assert_eq!(trace.len(), 30 / 10);
    assert!(trace.iter().all(|r| r.phi.len() == 3 && r.psnr.is_some()));
    // Labels and ACV were discovered next to the ground-truth image.
    assert!(trace
        .iter()
        .all(|r| r.acv_distance.is_some() && r.seg_accuracy.is_some()));
    let seg = F32Grid::load(a.join("seg.f32g"))
        .unwrap()
        .to_labels(Some(3))
        .unwrap();
    assert_eq!((seg.height(), seg.width()), (16, 16));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let (_, sino) = scanned(dir.path(), 16, 12);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    small_recon(&sino, "inr", &a, &[]);
    let status = Command::new(env!("CARGO_BIN_EXE_acind"))
        .args([
            "recon",
            "--sino",
            s(&sino),
            "--method",
            "inr",
            "--materials",
            "3",
            "--epochs",
            "30",
            "--eval-every",
            "10",
            "--features",
            "8",
            "--width",
            "16",
            "--depth",
            "2",
            "--out-dir",
            s(&b),
        ])
        .env("ACIND_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(a.join("recon.f32g")).unwrap(),
        fs::read(b.join("recon.f32g")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("ckpt.bin")).unwrap(),
        fs::read(b.join("ckpt.bin")).unwrap()
    );
    assert!(!a.join("seg.f32g").exists());
}

#[test]
fn acind_plus_records_both_initializations() {
    let dir = TempDir::new().unwrap();
    let (_, sino) = scanned(dir.path(), 16, 12);
    let out = dir.path().join("plus");
    small_recon(&sino, "ac-ind-plus", &out, &["--inner-epochs", "20"]);
    let text = fs::read_to_string(out.join("init.acv.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("material,fbp,ac_ind"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], (k + 1).to_string());
        assert!(row[1].parse::<f64>().is_ok() && row[2].parse::<f64>().is_ok());
    }
}

#[test]
fn missing_ground_truth_exits_two() {
    let dir = TempDir::new().unwrap();
    let (_, sino) = scanned(dir.path(), 16, 8);
    let missing = dir.path().join("absent.img.f32g");
    let out = dir.path().join("r");
    let c = code(&[
        "recon",
        "--sino",
        s(&sino),
        "--method",
        "ac-ind",
        "--materials",
        "3",
        "--epochs",
        "2",
        "--eval-gt",
        s(&missing),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(c, 2);
}

#[test]
fn divergence_exits_three() {
    let dir = TempDir::new().unwrap();
    let (_, sino) = scanned(dir.path(), 16, 8);
    let out = dir.path().join("r");
    let c = code(&[
        "recon",
        "--sino",
        s(&sino),
        "--method",
        "ac-ind",
        "--materials",
        "3",
        "--epochs",
        "20",
        "--lr-phi",
        "1e308",
        "--features",
        "8",
        "--width",
        "16",
        "--depth",
        "2",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(c, 3);
}

#[test]
fn metrics_report_inf_and_reject_mismatched_dims() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.f32g");
    let b = dir.path().join("b.f32g");
    let image = ImageGrid::from_fn(16, 16, |i, j| (i * 16 + j) as f64 / 256.0).unwrap();
    F32Grid::from_image(&image).save(&a).unwrap();
    F32Grid::from_image(&ImageGrid::zeros(16, 12))
        .save(&b)
        .unwrap();

    let csv = dir.path().join("m.csv");
    ok(&[
        "metrics",
        "--gt",
        s(&a),
        "--recon",
        s(&a),
        "--method",
        "fbp",
        "--views",
        "20",
        "--out",
        s(&csv),
    ]);
    ok(&[
        "metrics",
        "--gt",
        s(&a),
        "--recon",
        s(&a),
        "--method",
        "sirt",
        "--views",
        "20",
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[0].starts_with("method,views,psnr,ssim"));
    assert!(lines[1].starts_with("fbp,20,inf,"), "{}", lines[1]);

    let stdout = ok(&["metrics", "--gt", s(&a), "--recon", s(&a)]).stdout;
    assert!(String::from_utf8(stdout).unwrap().contains(",inf,"));

    assert_eq!(code(&["metrics", "--gt", s(&a), "--recon", s(&b)]), 2);
}

#[test]
fn pgm_export_spans_the_full_range() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("bin.f32g");
    let image = ImageGrid::from_fn(4, 6, |i, j| ((i + j) % 2) as f64).unwrap();
    F32Grid::from_image(&image).save(&img).unwrap();
    let pgm = dir.path().join("bin.pgm");
    ok(&["pgm", "--image", s(&img), "--out", s(&pgm)]);
    let (h, w, levels) = parse_pgm16(&fs::read(&pgm).unwrap()).unwrap();
    assert_eq!((h, w), (4, 6));
    for (l, v) in levels.iter().zip(image.data()) {
        assert_eq!(*l, if *v == 0.0 { 0 } else { 65535 });
    }
    let range = fs::read_to_string(dir.path().join("bin.pgm.range.csv")).unwrap();
    assert_eq!(range, "min,max\n0,1\n");
}

#[test]
fn dynamics_table_follows_the_trace() {
    let dir = TempDir::new().unwrap();
    let (prefix, sino) = scanned(dir.path(), 16, 12);
    let out = dir.path().join("r");
    small_recon(
        &sino,
        "ac-ind",
        &out,
        &["--eval-gt", &format!("{}.img.f32g", s(&prefix))],
    );
    let stdout = ok(&["dynamics", "--trace", s(&out.join("trace.csv"))]).stdout;
    let text = String::from_utf8(stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,psnr,acv_distance,seg_accuracy,phi_1,phi_2,phi_3")
    );
    let epochs: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["10", "20", "30"]);
}

#[test]
fn params_report_prints_both_totals() {
    let text = String::from_utf8(ok(&["params-report"]).stdout).unwrap();
    assert!(text.contains("396038"), "{text}");
    assert!(text.contains("460545"), "{text}");
}
