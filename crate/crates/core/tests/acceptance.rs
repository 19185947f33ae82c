//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use nalgebra::{Point3, Vector3};

use quantvol::camera::{Camera, CameraPose, CameraRig};
use quantvol::config::default_sweep_values;
use quantvol::experiment::{
    fit_sweep, run_plane_map, run_sweep, LocalGrid, Plane, PlaneSpec, RowVolumes, Scenario, SweepParameter, SweepRow,
};
use quantvol::grid::{generate_grid, Region, SceneGrid};
use quantvol::metrics::{median_symmetric_accuracy, rms_error, SeriesPair};
use quantvol::persist::{decode_table, encode_table, load_table, save_table, PersistError};
use quantvol::tables::{build_correspondence, build_pixel_view_table, intersect_tables, CorrespondenceTable};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn toy_cases() -> Vec<(CameraRig, SceneGrid)> {
    let cube = |min: Point3<f64>, spacing: f64| {
        let max = min + Vector3::repeat(9.0 * spacing);
        generate_grid(Region::new(min, max).unwrap(), spacing).unwrap()
    };
    let single = CameraRig::new(vec![Camera::new(toy_intrinsics(8), CameraPose::at(Point3::origin()).unwrap())]).unwrap();
    let five = generate_grid(Region::new(Point3::new(-0.37, -0.41, 1.03), Point3::new(0.43, 0.39, 1.83)).unwrap(), 0.2)
        .unwrap();
    vec![
        (single, five),
        (toy_pair(8), cube(Point3::new(-0.61, -0.57, 2.03), 0.13)),
        (toy_pair(16), cube(Point3::new(-1.2, -0.9, 0.8), 0.2)),
        (toy_verged(16), cube(Point3::new(-0.5, -0.45, 2.5), 0.11)),
        (toy_verged(12), cube(Point3::new(-1.0, -1.0, 1.0), 0.3)),
    ]
}

fn pipeline(rig: &CameraRig, grid: &SceneGrid) -> Option<CorrespondenceTable> {
    let tables: Vec<_> = rig.cameras().iter().enumerate().map(|(i, c)| build_pixel_view_table(c, i, grid)).collect();
    (tables.len() >= 2).then(|| intersect_tables(&tables).unwrap())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut compared, mut mismatches, mut ties) = (0usize, 0usize, 0usize);
    for (rig, grid) in toy_cases() {
        let joint = pipeline(&rig, &grid);
        let single = build_pixel_view_table(&rig.cameras()[0], 0, &grid);
        for flat in 0..grid.len() as u32 {
            let expected = match oracle_tuple(&rig, &grid.point(flat)) {
                Ok(e) => e,
                Err(()) => {
                    ties += 1;
                    continue;
                }
            };
            compared += 1;
            let got = match &joint {
                Some(t) => t.owner_of(flat).map(|k| k.pixels().to_vec()),
                None => single.entries().iter().find(|(_, p)| p.contains(&flat)).map(|(px, _)| vec![*px]),
            };
            mismatches += usize::from(got != expected);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 1.0,
        format!("{compared} points compared, {mismatches} mismatches, {ties} ties excluded, {secs:.3} s"),
    )
}

fn partition_ok(rig: &CameraRig, grid: &SceneGrid) -> bool {
    let tables: Vec<_> = rig.cameras().iter().enumerate().map(|(i, c)| build_pixel_view_table(c, i, grid)).collect();
    for (cam, table) in rig.cameras().iter().zip(&tables) {
        let mut seen = BTreeSet::new();
        for (px, pts) in table.entries() {
            for &p in pts {
                if !seen.insert(p) || cam.locate_pixel(&grid.point(p)).ok() != Some(*px) {
                    return false;
                }
            }
        }
        let visible = (0..grid.len() as u32).filter(|&p| cam.locate_pixel(&grid.point(p)).is_ok()).count();
        if seen.len() != visible || visible as u64 + table.discards().total() != grid.len() as u64 {
            return false;
        }
    }
    if rig.len() < 2 {
        return true;
    }
    let (joint, report) = build_correspondence(rig, grid);
    let total: usize = joint.entries().values().map(Vec::len).sum();
    let jointly = (0..grid.len() as u32)
        .filter(|&p| rig.cameras().iter().all(|c| c.locate_pixel(&grid.point(p)).is_ok()))
        .count();
    total == jointly && total as u64 == report.jointly_visible && joint == intersect_tables(&tables).unwrap()
}

fn criterion_2() -> Outcome {
    let mut cases = toy_cases();
    let paper = Scenario::default().rig.build().unwrap();
    let region = Region::around(Point3::new(0.0, 0.0, 100.0), Vector3::new(0.3, 0.3, 0.5)).unwrap();
    cases.push((paper, generate_grid(region, 0.02).unwrap()));
    let n = cases.len();
    let ok = cases.iter().filter(|(rig, grid)| partition_ok(rig, grid)).count();
    outcome(ok == n, format!("{ok}/{n} rigs partition and conserve"))
}

struct Sweeps {
    baseline: Vec<SweepRow>,
    focal: Vec<SweepRow>,
    pixel: Vec<SweepRow>,
    distance: Vec<SweepRow>,
}

fn sweep(parameter: SweepParameter) -> Vec<SweepRow> {
    run_sweep(&Scenario::default(), parameter, &default_sweep_values(parameter))
}

fn law_check(rows: &[SweepRow], expected: f64, tol: f64) -> (bool, String) {
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    match fit_sweep(rows) {
        Ok((poly, _)) => (
            failed == 0 && within(poly.exponent, expected, tol) && poly.r_squared >= 0.99,
            format!(
                "exponent {:.4} (want {expected} ± {tol}), R² {:.5}, a {:.4e}, {failed} failed rows",
                poly.exponent, poly.r_squared, poly.coefficient
            ),
        ),
        Err(e) => (false, format!("fit failed: {e}")),
    }
}

fn criterion_3(s: &Sweeps) -> Outcome {
    let (pass, detail) = law_check(&s.baseline, -1.008, 0.15);
    outcome(pass, format!("baseline {detail}"))
}

fn criterion_4(s: &Sweeps) -> Outcome {
    let (fp, fd) = law_check(&s.focal, -2.948, 0.2);
    let (pp, pd) = law_check(&s.pixel, 2.9253, 0.2);
    let (dp, dd) = law_check(&s.distance, 4.0321, 0.2);
    outcome(fp && pp && dp, format!("focal {fd}; pixel {pd}; distance {dd}"))
}

fn criterion_5() -> Outcome {
    let mut s = Scenario { local: LocalGrid::new(0.01).with_phase(Vector3::zeros()), ..Default::default() };
    let center = RowVolumes::from_measurement(&s.measure().unwrap());
    s.target = Point3::new(-80.0, -80.0, 100.0);
    let corner = RowVolumes::from_measurement(&s.measure().unwrap());
    let checks = [
        within(center.points as f64, 2548.0, 0.02 * 2548.0),
        within(center.cuboid, 0.0042, 0.05 * 0.0042),
        within(corner.points as f64, 2362.0, 0.02 * 2362.0),
        within(corner.cuboid, 0.015, 0.10 * 0.015),
        corner.overestimate() > 5.0,
        center.overestimate() < 2.0,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "center {} pts, poly {:.6}, cuboid {:.6}, ratio {:.3}; corner {} pts, cuboid {:.6}, ratio {:.3}; checks {:?}",
            center.points,
            center.polyhedron,
            center.cuboid,
            center.overestimate(),
            corner.points,
            corner.cuboid,
            corner.overestimate(),
            checks
        ),
    )
}

fn criterion_6(s: &Sweeps, plane: &[RowVolumes]) -> Outcome {
    let all: Vec<&RowVolumes> = [&s.baseline, &s.focal, &s.pixel, &s.distance]
        .iter()
        .flat_map(|rows| rows.iter().filter_map(|r| r.outcome.as_ref().ok()))
        .chain(plane.iter())
        .collect();
    let violations = all.iter().filter(|v| v.points > 1 && v.cuboid < v.polyhedron).count();
    let min_ratio = all.iter().filter(|v| v.points > 1).map(|v| v.overestimate()).fold(f64::INFINITY, f64::min);
    let at5 = s.baseline.iter().find(|r| r.value == 5.0).and_then(|r| r.outcome.as_ref().ok()).map(|v| v.overestimate());
    let pass = violations == 0 && at5.is_some_and(|r| r >= 1.8);
    outcome(
        pass,
        format!(
            "{} regions, {violations} with cuboid < polyhedron, min ratio {min_ratio:.3}, ratio at b = 5 m {}",
            all.len(),
            at5.map_or("n/a".into(), |r| format!("{r:.3}"))
        ),
    )
}

fn criterion_7(cells: &[(Point3<f64>, RowVolumes)]) -> Outcome {
    let polys: Vec<f64> = cells.iter().map(|(_, v)| v.polyhedron).collect();
    let mean = polys.iter().sum::<f64>() / polys.len() as f64;
    let sd = (polys.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / polys.len() as f64).sqrt();
    let cv = sd / mean;
    let center = cells.iter().find(|(p, _)| p.x == 0.0 && p.y == 0.0).map(|(_, v)| v.cuboid).unwrap();
    let edge: Vec<f64> = cells.iter().filter(|(p, _)| p.x.abs() == 80.0).map(|(_, v)| v.cuboid / center - 1.0).collect();
    let min_excess = edge.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_excess = edge.iter().sum::<f64>() / edge.len() as f64;
    let below = edge.iter().filter(|&&e| e <= 1.0).count();
    outcome(
        cv < 0.05 && !edge.is_empty() && below == 0,
        format!(
            "{} cells, polyhedron CV {:.2}%; cuboid excess over center at |x| = 80 m: min {:+.0}%, mean {:+.0}%, {below}/{} cells not above +100%",
            cells.len(),
            100.0 * cv,
            100.0 * min_excess,
            100.0 * mean_excess,
            edge.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut s = Scenario::default();
    let v3 = s.measure().unwrap().region.polyhedron_volume();
    s.local.spacing = 0.01 / 6.0;
    let v6 = s.measure().unwrap().region.polyhedron_volume();
    let convergence = (v3 - v6).abs() / v6;

    let mut jitter: f64 = 0.0;
    for seed in 1..=5 {
        let mut j = Scenario::default();
        j.local.phase = LocalGrid::random_phase(seed);
        let v = j.measure().unwrap().region.polyhedron_volume();
        jitter = jitter.max((v - v3).abs() / v3);
    }
    outcome(
        convergence < 0.05 && jitter < 0.03,
        format!(
            "3/cm {v3:.6} vs 6/cm {v6:.6}: {:.2}% apart; max change over 5 random phases {:.2}%",
            100.0 * convergence,
            100.0 * jitter
        ),
    )
}

fn criterion_9() -> Outcome {
    let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { ((a - b) / b).abs() };
    let e = std::f64::consts::E;
    let pair = |p: &'static [f64], o: &'static [f64]| SeriesPair::new(p, o).unwrap();
    let ratio_p: Vec<f64> = vec![e, 2.0 * e, 0.5 * e];
    let ratio_p: &'static [f64] = Box::leak(ratio_p.into_boxed_slice());
    let cases = [
        rel(rms_error(&pair(&[1.0, 2.0], &[1.0, 2.0])), 0.0),
        rel(rms_error(&pair(&[3.0], &[0.0])), 3.0),
        rel(rms_error(&pair(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0])), (2.0f64 / 3.0).sqrt()),
        rel(median_symmetric_accuracy(&pair(&[1.0, 2.0], &[1.0, 2.0])).unwrap(), 0.0),
        rel(median_symmetric_accuracy(&pair(ratio_p, &[1.0, 2.0, 0.5])).unwrap(), 100.0 * (e - 1.0)),
    ];
    let worst = cases.iter().copied().fold(0.0, f64::max);
    let p = [0.8, 1.7, 3.1, 0.2];
    let o = [1.0, 1.5, 2.9, 0.35];
    let fwd = SeriesPair::new(&p, &o).unwrap();
    let symmetric = median_symmetric_accuracy(&fwd).unwrap() == median_symmetric_accuracy(&fwd.swapped()).unwrap();
    outcome(worst <= 1e-12 && symmetric, format!("worst relative error {worst:.1e}, MSA swap-symmetric {symmetric}"))
}

fn criterion_10() -> Outcome {
    let rig = toy_pair(16);
    let region = Region::new(Point3::new(-1.0, -1.0, 1.0), Point3::new(0.98, 0.98, 2.98)).unwrap();
    let grid = generate_grid(region, 0.02).unwrap();
    let (table, _) = build_correspondence(&rig, &grid);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.qvt");
    let b = dir.path().join("b.qvt");
    save_table(&table, &a).unwrap();
    save_table(&load_table(&a).unwrap(), &b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    let lossless = load_table(&a).unwrap() == table;
    let deterministic = bytes == std::fs::read(&b).unwrap() && bytes == encode_table(&table);
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x01;
    let corrupt_rejected = matches!(decode_table(&flipped), Err(PersistError::CorruptFile(_)))
        && matches!(decode_table(&bytes[..bytes.len() - 9]), Err(PersistError::CorruptFile(_)));
    outcome(
        grid.len() == 1_000_000 && lossless && deterministic && corrupt_rejected,
        format!(
            "{} grid points, {} tuples, {} bytes; lossless {lossless}, deterministic {deterministic}, corruption rejected {corrupt_rejected}",
            grid.len(),
            table.len(),
            bytes.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "oracle equivalence", criterion_1());
    report(2, "partition and conservation", criterion_2());
    let sweeps = Sweeps {
        baseline: sweep(SweepParameter::Baseline),
        focal: sweep(SweepParameter::FocalLength),
        pixel: sweep(SweepParameter::PixelSize),
        distance: sweep(SweepParameter::Distance),
    };
    report(3, "baseline power law", criterion_3(&sweeps));
    report(4, "focal, pixel and distance power laws", criterion_4(&sweeps));
    report(5, "voxel examples at 1 pt/cm", criterion_5());

    let mut plane_scenario = Scenario::default();
    plane_scenario.local.spacing = 0.01;
    let spec = PlaneSpec { plane: Plane::XY, center: Point3::new(0.0, 0.0, 100.0), half_extent: 100.0, step: 10.0 };
    let cells: Vec<(Point3<f64>, RowVolumes)> = run_plane_map(&plane_scenario, &spec)
        .unwrap()
        .into_iter()
        .filter_map(|c| c.volumes.map(|v| (c.position, v)))
        .collect();
    let plane_volumes: Vec<RowVolumes> = cells.iter().map(|(_, v)| *v).collect();
    report(6, "cuboid dominance", criterion_6(&sweeps, &plane_volumes));
    report(7, "polyhedron flatness over the XY plane", criterion_7(&cells));
    report(8, "grid convergence and phase jitter", criterion_8());
    report(9, "metrics", criterion_9());
    report(10, "persistence", criterion_10());

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    println!(
        "acceptance: {}/{} passed in {:.0} s{}",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
