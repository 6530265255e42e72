//! Byte-exact file formats and run-to-run determinism.

use std::fs;
use std::path::{Path, PathBuf};

use kld_filter::cli;
use kld_filter::grid::{self, GridMeta, ScanGrid};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = cli::run(std::iter::once("kldf").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scan_csv_round_trips_byte_for_byte() {
    let text = fs::read_to_string(golden("scan_small.csv")).unwrap();
    let g = grid::from_csv_str(&text).unwrap();
    assert_eq!(g.shape(), (2, 3));
    assert_eq!(g.get(1, 0), 101.9);
    assert_eq!(grid::to_csv_string(&g), text);
}

#[test]
fn binary_layout_is_fixed() {
    let g = ScanGrid::new(1, 2, vec![0.5, -2.0], GridMeta {
        axial_pitch: 1.0,
        circ_pitch: 2.0,
        quantization: 0.0,
        periodic_circ: true,
    })
    .unwrap();
    let mut expected = b"KLDG\x01".to_vec();
    expected.extend_from_slice(&1u64.to_le_bytes());
    expected.extend_from_slice(&2u64.to_le_bytes());
    for x in [1.0f64, 2.0, 0.0] {
        expected.extend_from_slice(&x.to_le_bytes());
    }
    expected.extend_from_slice(&1u64.to_le_bytes());
    expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0xe0, 0x3f]);
    expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0x00, 0xc0]);
    assert_eq!(grid::to_binary_bytes(&g), expected);
    assert_eq!(grid::from_binary_bytes(&expected).unwrap(), g);
}

#[test]
fn grayscale_pgm_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ramp.pgm");
    let (code, _) = run(&["render", "--in", s(&golden("ramp.csv")), "--out", s(&out), "--palette", "grayscale"]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(golden("ramp_gray.pgm")).unwrap());
}

#[test]
fn heat_ppm_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ramp.ppm");
    let (code, _) = run(&["render", "--in", s(&golden("ramp.csv")), "--out", s(&out), "--palette", "heat"]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(golden("ramp_heat.ppm")).unwrap());
    // rank scaling of evenly spaced distinct values is the same ramp
    let (code, _) = run(&["render", "--in", s(&golden("ramp.csv")), "--out", s(&out), "--scale", "rank"]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(golden("ramp_heat.ppm")).unwrap());
}

#[test]
fn detection_reports_golden() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["blobs_report.csv", "blobs_report.txt"] {
        let out = dir.path().join(name);
        let (code, _) = run(&["detect", "--in", s(&golden("blobs_map.csv")), "--report", s(&out), "--min-area", "1"]);
        assert_eq!(code, 0);
        assert_eq!(
            fs::read_to_string(&out).unwrap(),
            fs::read_to_string(golden(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn map_csv_round_trips() {
    let text = fs::read_to_string(golden("blobs_map.csv")).unwrap();
    let g = grid::from_csv_str(&text).unwrap();
    assert_eq!(grid::to_csv_string(&g), text);
}

#[test]
fn identical_flags_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    for tag in ["a", "b"] {
        let scan = p(&format!("scan_{tag}.kldg"));
        let mask = p(&format!("mask_{tag}.pgm"));
        let map = p(&format!("map_{tag}.csv"));
        let report = p(&format!("report_{tag}.csv"));
        let image = p(&format!("map_{tag}.ppm"));
        assert_eq!(run(&["synth", "--out", s(&scan), "--seed", "7", "--truth-mask", s(&mask)]).0, 0);
        assert_eq!(run(&["filter", "--in", s(&scan), "--out", s(&map), "--l", "20"]).0, 0);
        assert_eq!(run(&["detect", "--in", s(&map), "--report", s(&report), "--l", "20"]).0, 0);
        assert_eq!(run(&["render", "--in", s(&map), "--out", s(&image)]).0, 0);
    }
    for stem in ["scan_{}.kldg", "mask_{}.pgm", "map_{}.csv", "report_{}.csv", "map_{}.ppm"] {
        let a = fs::read(p(&stem.replace("{}", "a"))).unwrap();
        let b = fs::read(p(&stem.replace("{}", "b"))).unwrap();
        assert!(!a.is_empty());
        assert!(a == b, "{stem} differs between runs");
    }
    // a different seed changes the scan
    let other = p("scan_c.kldg");
    assert_eq!(run(&["synth", "--out", s(&other), "--seed", "8"]).0, 0);
    assert_ne!(fs::read(other).unwrap(), fs::read(p("scan_a.kldg")).unwrap());
}
