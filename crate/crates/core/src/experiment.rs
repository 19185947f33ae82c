//! Experiment drivers: parameter sweeps, plane maps, grid-density convergence and
//! series comparison, each producing CSV-ready rows.

use std::collections::BTreeSet;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{CameraError, CameraIntrinsics, CameraRig, PixelId};
use crate::fit::{fit_power_law, FitError, PowerLawFit};
use crate::grid::{lattice_grid, pixel_footprint, GridError, SceneGrid};
use crate::metrics::{median_symmetric_accuracy, rms_error, MetricsError, SeriesPair};
use crate::tables::{build_correspondence_for, PixelTuple};
use crate::volume::{format_sig9, UncertaintyRegion, VolumeError};

/// Growth factor applied to a local region that clips the uncertainty region.
const GROWTH: f64 = 1.6;
const MAX_GROWTH_STEPS: usize = 8;
pub const DEFAULT_MAX_POINTS: u64 = 200_000_000;
const COARSE_FACTOR: f64 = 4.0;
const MIN_COARSE_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("target {0:?} is not visible to camera {1}")]
    TargetNotVisible([f64; 3], usize),
    #[error("no grid point falls inside the uncertainty region of {0}; refine the spacing")]
    EmptyRegion(PixelTuple),
    #[error("uncertainty region still touches the local grid boundary after {0} enlargements")]
    NotContained(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Physical parameters of the symmetric two-camera rig used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigParams {
    pub baseline: f64,
    pub focal_length: f64,
    pub pixel_size: f64,
    pub pixel_count: u32,
}

impl Default for RigParams {
    fn default() -> Self {
        Self { baseline: 100.0, focal_length: 15e-3, pixel_size: 20e-6, pixel_count: 2048 }
    }
}

impl RigParams {
    pub fn build(&self) -> Result<CameraRig, CameraError> {
        let intr = CameraIntrinsics::new(self.focal_length, self.pixel_size, self.pixel_count)?;
        CameraRig::coplanar(self.baseline, intr)
    }
}

/// How the local grid around a target is laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGrid {
    /// Lattice spacing in meters.
    pub spacing: f64,
    /// Initial half-extent in units of the analytic pixel footprint.
    pub margin: f64,
    /// Offset of the target from the nearest lattice point below it, per axis, as a
    /// fraction of the spacing. Zero puts a lattice point on the target; one half
    /// puts the target at the center of a lattice cell.
    pub phase: Vector3<f64>,
    pub max_points: u64,
}

impl LocalGrid {
    pub const CELL_CENTERED: Vector3<f64> = Vector3::new(0.5, 0.5, 0.5);

    pub fn new(spacing: f64) -> Self {
        Self { spacing, margin: 1.25, phase: Self::CELL_CENTERED, max_points: DEFAULT_MAX_POINTS }
    }

    pub fn with_phase(mut self, phase: Vector3<f64>) -> Self {
        self.phase = phase;
        self
    }

    /// Phase drawn uniformly from the unit cell.
    pub fn random_phase(seed: u64) -> Vector3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vector3::new(rng.gen(), rng.gen(), rng.gen())
    }
}

/// Uncertainty region of the pixel tuple that sees a target point.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMeasurement {
    pub target: Point3<f64>,
    pub tuple: PixelTuple,
    pub region: UncertaintyRegion,
    /// Local grid that contained the region.
    pub grid: SceneGrid,
}

/// Pixel tuple seeing `target` in every camera of `rig`.
pub fn target_tuple(rig: &CameraRig, target: &Point3<f64>) -> Result<PixelTuple, ExperimentError> {
    let mut pixels = Vec::with_capacity(rig.len());
    for (i, cam) in rig.cameras().iter().enumerate() {
        let px = cam
            .locate_pixel(target)
            .map_err(|_| ExperimentError::TargetNotVisible([target.x, target.y, target.z], i))?;
        pixels.push(px);
    }
    Ok(PixelTuple::new(pixels))
}

/// Lattice over the auto-sized region around `target`, with the requested phase
/// relative to the target.
pub fn local_grid(rig: &CameraRig, target: &Point3<f64>, local: &LocalGrid) -> Result<SceneGrid, ExperimentError> {
    if !(local.margin.is_finite() && local.margin > 0.0) {
        return Err(GridError::InvalidMargin(local.margin).into());
    }
    let half = pixel_footprint(rig, target)? * local.margin;
    Ok(bounds_grid(target, &bounds_for_box(target, target - half, target + half, local), local)?)
}

/// Lattice index bounds relative to the anchor `target − phase · spacing`.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    lo: [i64; 3],
    hi: [i64; 3],
}

fn anchor(target: &Point3<f64>, local: &LocalGrid) -> Point3<f64> {
    target - local.phase * local.spacing
}

fn bounds_for_box(target: &Point3<f64>, lo: Point3<f64>, hi: Point3<f64>, local: &LocalGrid) -> Bounds {
    let a = anchor(target, local);
    let g = local.spacing;
    Bounds {
        lo: [0, 1, 2].map(|i| ((lo[i] - a[i]) / g).floor() as i64),
        hi: [0, 1, 2].map(|i| ((hi[i] - a[i]) / g).ceil() as i64),
    }
}

fn bounds_grid(target: &Point3<f64>, b: &Bounds, local: &LocalGrid) -> Result<SceneGrid, GridError> {
    lattice_grid(anchor(target, local), local.spacing, b.lo, b.hi, local.max_points)
}

/// Grows `bounds` until no point of `tuple` lies on the lattice boundary.
fn contain(
    rig: &CameraRig,
    target: &Point3<f64>,
    tuple: &PixelTuple,
    local: &LocalGrid,
    mut bounds: Bounds,
) -> Result<(UncertaintyRegion, SceneGrid), ExperimentError> {
    let wanted: BTreeSet<PixelTuple> = [tuple.clone()].into();
    for _ in 0..=MAX_GROWTH_STEPS {
        let grid = bounds_grid(target, &bounds, local)?;
        let (table, _) = build_correspondence_for(rig, &grid, &wanted);
        let points = table
            .get(tuple)
            .ok_or_else(|| ExperimentError::EmptyRegion(tuple.clone()))?
            .to_vec();

        let counts = grid.counts();
        let (mut low, mut high) = ([false; 3], [false; 3]);
        for &p in &points {
            let l = grid.lattice_index(p);
            for a in 0..3 {
                low[a] |= l[a] == 0;
                high[a] |= l[a] + 1 == counts[a];
            }
        }
        if !low.iter().chain(&high).any(|&c| c) {
            return Ok((UncertaintyRegion::from_indices(&grid, points)?, grid));
        }
        for a in 0..3 {
            let step = (((bounds.hi[a] - bounds.lo[a]) as f64 * (GROWTH - 1.0) / 2.0).ceil() as i64).max(2);
            if low[a] {
                bounds.lo[a] -= step;
            }
            if high[a] {
                bounds.hi[a] += step;
            }
        }
    }
    Err(ExperimentError::NotContained(MAX_GROWTH_STEPS))
}

/// Measures the uncertainty region of the pixel tuple seeing `target`.
///
/// A pass at `COARSE_FACTOR` times the spacing over the auto-sized region locates
/// the region; the fine lattice then covers its bounding box plus a pad, and is
/// enlarged until none of the region's points lies on its boundary.
pub fn measure_target(
    rig: &CameraRig,
    target: &Point3<f64>,
    local: &LocalGrid,
) -> Result<TargetMeasurement, ExperimentError> {
    if !(local.margin.is_finite() && local.margin > 0.0) {
        return Err(GridError::InvalidMargin(local.margin).into());
    }
    if !(local.spacing.is_finite() && local.spacing > 0.0) {
        return Err(GridError::InvalidSpacing(local.spacing).into());
    }
    if local.phase.iter().any(|f| !f.is_finite()) {
        return Err(ExperimentError::Invalid(format!("grid phase {:?} is not finite", local.phase)));
    }
    let tuple = target_tuple(rig, target)?;
    let half = pixel_footprint(rig, target)? * local.margin;
    let (lo, hi) = (target - half, target + half);

    let coarse = LocalGrid { spacing: local.spacing * COARSE_FACTOR, phase: LocalGrid::CELL_CENTERED, ..*local };
    let bounds = match contain(rig, target, &tuple, &coarse, bounds_for_box(target, lo, hi, &coarse)) {
        Ok((region, _)) if region.point_count() >= MIN_COARSE_POINTS => {
            let c = region.cuboid();
            let pad = Vector3::repeat(2.0 * coarse.spacing);
            bounds_for_box(target, c.min - pad, c.max + pad, local)
        }
        _ => bounds_for_box(target, lo, hi, local),
    };
    let (region, grid) = contain(rig, target, &tuple, local, bounds)?;
    Ok(TargetMeasurement { target: *target, tuple, region, grid })
}

/// Swept rig or scene parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    Baseline,
    FocalLength,
    PixelSize,
    Distance,
    Spacing,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Baseline => "baseline",
            SweepParameter::FocalLength => "focal",
            SweepParameter::PixelSize => "pixel",
            SweepParameter::Distance => "distance",
            SweepParameter::Spacing => "spacing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "b" => Some(Self::Baseline),
            "focal" | "focal_length" | "f" => Some(Self::FocalLength),
            "pixel" | "pixel_size" | "k" => Some(Self::PixelSize),
            "distance" | "depth" | "z" => Some(Self::Distance),
            "spacing" | "g" => Some(Self::Spacing),
            _ => None,
        }
    }
}

/// Inputs shared by every experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub rig: RigParams,
    pub target: Point3<f64>,
    pub local: LocalGrid,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            rig: RigParams::default(),
            target: Point3::new(0.0, 0.0, 100.0),
            local: LocalGrid::new(0.01 / 3.0),
        }
    }
}

impl Scenario {
    /// Copy with one parameter replaced by `value` (SI units).
    pub fn with(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut s = self.clone();
        match parameter {
            SweepParameter::Baseline => s.rig.baseline = value,
            SweepParameter::FocalLength => s.rig.focal_length = value,
            SweepParameter::PixelSize => s.rig.pixel_size = value,
            SweepParameter::Distance => s.target.z = value,
            SweepParameter::Spacing => s.local.spacing = value,
        }
        s
    }

    pub fn measure(&self) -> Result<TargetMeasurement, ExperimentError> {
        measure_target(&self.rig.build()?, &self.target, &self.local)
    }
}

/// One measured sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub outcome: Result<RowVolumes, ExperimentError>,
}

/// Volumes and shape of one measured region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowVolumes {
    pub polyhedron: f64,
    pub cuboid: f64,
    pub dims: Vector3<f64>,
    pub points: usize,
    pub pixel_a: PixelId,
    pub pixel_b: PixelId,
}

impl RowVolumes {
    pub fn from_measurement(m: &TargetMeasurement) -> Self {
        let px = m.tuple.pixels();
        Self {
            polyhedron: m.region.polyhedron_volume(),
            cuboid: m.region.cuboid_volume(),
            dims: m.region.cuboid_dims(),
            points: m.region.point_count(),
            pixel_a: px[0],
            pixel_b: *px.get(1).unwrap_or(&px[0]),
        }
    }

    /// Cuboid over polyhedron volume.
    pub fn overestimate(&self) -> f64 {
        self.cuboid / self.polyhedron
    }
}

fn measure_row(base: &Scenario, parameter: SweepParameter, value: f64) -> SweepRow {
    let outcome = base.with(parameter, value).measure().map(|m| RowVolumes::from_measurement(&m));
    SweepRow { parameter, value, outcome }
}

/// Measures the target region at each value; failures are kept per row.
pub fn run_sweep(base: &Scenario, parameter: SweepParameter, values: &[f64]) -> Vec<SweepRow> {
    values.par_iter().map(|&v| measure_row(base, parameter, v)).collect()
}

/// Power laws fitted to the successful rows: (polyhedron, cuboid).
pub fn fit_sweep(rows: &[SweepRow]) -> Result<(PowerLawFit, PowerLawFit), FitError> {
    let ok: Vec<(f64, &RowVolumes)> = rows.iter().filter_map(|r| r.outcome.as_ref().ok().map(|v| (r.value, v))).collect();
    let xs: Vec<f64> = ok.iter().map(|(x, _)| *x).collect();
    let poly: Vec<f64> = ok.iter().map(|(_, v)| v.polyhedron).collect();
    let cuboid: Vec<f64> = ok.iter().map(|(_, v)| v.cuboid).collect();
    Ok((fit_power_law(&xs, &poly)?, fit_power_law(&xs, &cuboid)?))
}

/// Coordinate plane of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    XY,
    XZ,
    YZ,
}

impl Plane {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "XY" => Some(Plane::XY),
            "XZ" => Some(Plane::XZ),
            "YZ" => Some(Plane::YZ),
            _ => None,
        }
    }

    fn axes(&self) -> (usize, usize) {
        match self {
            Plane::XY => (0, 1),
            Plane::XZ => (0, 2),
            Plane::YZ => (1, 2),
        }
    }
}

/// Sampling of a plane through `center`: samples at `center ± i·step` on both
/// in-plane axes up to `half_extent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSpec {
    pub plane: Plane,
    pub center: Point3<f64>,
    pub half_extent: f64,
    pub step: f64,
}

impl PlaneSpec {
    pub fn samples(&self) -> Vec<Point3<f64>> {
        let n = (self.half_extent / self.step + 1e-9).floor() as i64;
        let (a, b) = self.plane.axes();
        let mut out = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                let mut p = self.center;
                p[a] += i as f64 * self.step;
                p[b] += j as f64 * self.step;
                out.push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneCell {
    pub position: Point3<f64>,
    /// `None` when the sample is outside a camera's view or cannot be measured.
    pub volumes: Option<RowVolumes>,
}

/// Polyhedron and cuboid volume at every plane sample, in sample order.
pub fn run_plane_map(base: &Scenario, spec: &PlaneSpec) -> Result<Vec<PlaneCell>, ExperimentError> {
    if !(spec.step > 0.0 && spec.half_extent >= 0.0) {
        return Err(ExperimentError::Invalid("plane step must be positive".into()));
    }
    let rig = base.rig.build()?;
    Ok(spec
        .samples()
        .into_par_iter()
        .map(|p| {
            let volumes = measure_target(&rig, &p, &base.local).ok().map(|m| RowVolumes::from_measurement(&m));
            PlaneCell { position: p, volumes }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub baseline: f64,
    /// Grid points per meter.
    pub density: f64,
    pub outcome: Result<RowVolumes, ExperimentError>,
}

/// Target region volumes for every (baseline, density) pair, densities in points
/// per meter.
pub fn run_spacing_convergence(base: &Scenario, baselines: &[f64], densities: &[f64]) -> Vec<ConvergenceRow> {
    let jobs: Vec<(f64, f64)> = baselines.iter().flat_map(|&b| densities.iter().map(move |&d| (b, d))).collect();
    jobs.into_par_iter()
        .map(|(baseline, density)| {
            let outcome = base
                .with(SweepParameter::Baseline, baseline)
                .with(SweepParameter::Spacing, 1.0 / density)
                .measure()
                .map(|m| RowVolumes::from_measurement(&m));
            ConvergenceRow { baseline, density, outcome }
        })
        .collect()
}

/// RMSE and MSA of our series against a reference series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub rmse: f64,
    pub msa_percent: f64,
    pub count: usize,
}

/// Compares our observed values against reference (predicted) values.
pub fn compare_series(ours: &[f64], reference: &[f64]) -> Result<ComparisonReport, ExperimentError> {
    let pair = SeriesPair::new(reference, ours)?;
    Ok(ComparisonReport {
        rmse: rms_error(&pair),
        msa_percent: median_symmetric_accuracy(&pair)?,
        count: ours.len(),
    })
}

pub const SWEEP_HEADER: &str = "param,value,poly_vol_m3,cuboid_vol_m3,dx_m,dy_m,dz_m,points,uA,vA,uB,vB";
pub const PLANE_HEADER: &str = "x_m,y_m,z_m,poly_vol_m3,cuboid_vol_m3";
pub const CONVERGE_HEADER: &str = "baseline_m,density_per_m,poly_vol_m3,cuboid_vol_m3,points";
pub const FIT_HEADER: &str = "param,volume,coefficient,exponent,r_squared";

fn volume_fields(v: &RowVolumes) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        format_sig9(v.polyhedron),
        format_sig9(v.cuboid),
        format_sig9(v.dims.x),
        format_sig9(v.dims.y),
        format_sig9(v.dims.z),
        v.points,
        v.pixel_a.u,
        v.pixel_a.v,
        v.pixel_b.u,
        v.pixel_b.v
    )
}

/// Sweep rows as CSV; failed rows keep their value with empty measurement fields.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("# quantvol sweep v1\n{SWEEP_HEADER}\n");
    for row in rows {
        let fields = match &row.outcome {
            Ok(v) => volume_fields(v),
            Err(_) => ",".repeat(9),
        };
        out.push_str(&format!("{},{},{}\n", row.parameter.name(), format_sig9(row.value), fields));
    }
    out
}

pub fn fit_csv(parameter: SweepParameter, poly: &PowerLawFit, cuboid: &PowerLawFit) -> String {
    let mut out = format!("{FIT_HEADER}\n");
    for (name, fit) in [("polyhedron", poly), ("cuboid", cuboid)] {
        out.push_str(&format!(
            "{},{name},{},{},{}\n",
            parameter.name(),
            format_sig9(fit.coefficient),
            format_sig9(fit.exponent),
            format_sig9(fit.r_squared)
        ));
    }
    out
}

pub fn plane_csv(cells: &[PlaneCell]) -> String {
    let mut out = format!("# quantvol plane v1\n{PLANE_HEADER}\n");
    for c in cells {
        let p = c.position;
        let (poly, cuboid) = match &c.volumes {
            Some(v) => (format_sig9(v.polyhedron), format_sig9(v.cuboid)),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!("{},{},{},{poly},{cuboid}\n", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z)));
    }
    out
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = format!("# quantvol converge v1\n{CONVERGE_HEADER}\n");
    for r in rows {
        let fields = match &r.outcome {
            Ok(v) => format!("{},{},{}", format_sig9(v.polyhedron), format_sig9(v.cuboid), v.points),
            Err(_) => ",,".into(),
        };
        out.push_str(&format!("{},{},{fields}\n", format_sig9(r.baseline), format_sig9(r.density)));
    }
    out
}

/// Reads one numeric column from CSV text with a header row; `#` lines are skipped.
pub fn read_csv_column(text: &str, column: &str) -> Result<Vec<f64>, ExperimentError> {
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| ExperimentError::Invalid("empty CSV".into()))?;
    let idx = header
        .split(',')
        .position(|h| h.trim() == column)
        .ok_or_else(|| ExperimentError::Invalid(format!("CSV has no column {column:?}")))?;
    lines
        .enumerate()
        .map(|(i, line)| {
            let cell = line.split(',').nth(idx).unwrap_or("").trim();
            cell.parse::<f64>()
                .map_err(|_| ExperimentError::Invalid(format!("row {}: column {column:?} holds {cell:?}", i + 1)))
        })
        .collect()
}
