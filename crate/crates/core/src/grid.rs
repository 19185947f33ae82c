//! Regular lattice of scene points over an axis-aligned region of interest.

use nalgebra::{Point3, Vector3};

use crate::camera::CameraRig;

/// Default ceiling on the number of lattice points in one grid.
pub const DEFAULT_MAX_POINTS: u64 = 200_000_000;

/// Relative slack used when counting how many spacings fit into an extent, so that
/// extents which are integer multiples of the spacing keep their far endpoint.
const COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("region is degenerate: max corner must exceed min corner on every axis")]
    DegenerateRegion,
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("grid would hold {required} points (~{bytes} bytes of indices), above the cap of {cap}")]
    TooManyPoints { required: u64, cap: u64, bytes: u64 },
    #[error("margin factor must be positive, got {0}")]
    InvalidMargin(f64),
    #[error("target is not visible to camera {0}")]
    TargetNotVisible(usize),
    #[error("sizing a region needs at least two cameras with distinct centers")]
    NoBaseline,
}

/// Axis-aligned box in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Region {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Result<Self, GridError> {
        let ok = (0..3).all(|a| min[a].is_finite() && max[a].is_finite() && max[a] > min[a]);
        if !ok {
            return Err(GridError::DegenerateRegion);
        }
        Ok(Self { min, max })
    }

    /// Box centered on `center` with the given half-extents.
    pub fn around(center: Point3<f64>, half_extents: Vector3<f64>) -> Result<Self, GridError> {
        Self::new(center - half_extents, center + half_extents)
    }

    /// Box centered on `center` whose half-extents are rounded up to whole multiples
    /// of `spacing`, so a grid anchored at its min corner passes through `center`.
    pub fn around_on_lattice(
        center: Point3<f64>,
        half_extents: Vector3<f64>,
        spacing: f64,
    ) -> Result<Self, GridError> {
        check_spacing(spacing)?;
        let steps = half_extents.map(|h| (h / spacing - COUNT_SLACK).ceil().max(1.0));
        Self::around(center, steps * spacing)
    }

    pub fn min(&self) -> Point3<f64> {
        self.min
    }

    pub fn max(&self) -> Point3<f64> {
        self.max
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self { min: self.min + offset, max: self.max + offset }
    }

    /// Box grown by `factor` about its center.
    pub fn scaled(&self, factor: Vector3<f64>) -> Result<Self, GridError> {
        let half = self.extent().component_mul(&factor) / 2.0;
        Self::around(self.center(), half)
    }
}

/// Regular lattice `min + spacing · (i, j, k)` covering a region, addressed by lattice
/// index or by flat index `i + nx·(j + ny·k)`. Coordinates are computed on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneGrid {
    region: Region,
    spacing: f64,
    counts: [u32; 3],
    /// Lattice point `(i, j, k)` sits at `anchor + spacing · (first + (i, j, k))`, so
    /// grids sharing an anchor produce bit-identical coordinates for shared points.
    anchor: Point3<f64>,
    first: [i64; 3],
}

fn check_spacing(spacing: f64) -> Result<(), GridError> {
    if spacing.is_finite() && spacing > 0.0 {
        Ok(())
    } else {
        Err(GridError::InvalidSpacing(spacing))
    }
}

/// Lattice covering `region` with the given spacing, anchored at its min corner,
/// refusing grids above [`DEFAULT_MAX_POINTS`].
pub fn generate_grid(region: Region, spacing: f64) -> Result<SceneGrid, GridError> {
    generate_grid_capped(region, spacing, DEFAULT_MAX_POINTS)
}

pub fn generate_grid_capped(region: Region, spacing: f64, max_points: u64) -> Result<SceneGrid, GridError> {
    check_spacing(spacing)?;
    let extent = region.extent();
    let mut counts = [0u64; 3];
    for a in 0..3 {
        let steps = (extent[a] / spacing + COUNT_SLACK).floor();
        counts[a] = if steps >= 4.0e9 { u64::MAX / 4 } else { steps as u64 + 1 };
    }
    check_cap(counts, max_points)?;
    Ok(SceneGrid { region, spacing, counts: counts.map(|c| c as u32), anchor: region.min, first: [0; 3] })
}

fn check_cap(counts: [u64; 3], max_points: u64) -> Result<(), GridError> {
    let required = counts.iter().fold(1u64, |acc, &c| acc.saturating_mul(c));
    // Flat indices are stored as u32.
    let cap = max_points.min(u64::from(u32::MAX));
    if required > cap {
        return Err(GridError::TooManyPoints { required, cap, bytes: required.saturating_mul(4) });
    }
    Ok(())
}

fn lattice_coordinate(anchor: &Point3<f64>, spacing: f64, index: [i64; 3]) -> Point3<f64> {
    Point3::from([0, 1, 2].map(|a| anchor[a] + index[a] as f64 * spacing))
}

/// The part of the infinite lattice `anchor + spacing · ℤ³` with indices in
/// `first..=last` on every axis; at least two points per axis.
pub fn lattice_grid(
    anchor: Point3<f64>,
    spacing: f64,
    first: [i64; 3],
    last: [i64; 3],
    max_points: u64,
) -> Result<SceneGrid, GridError> {
    check_spacing(spacing)?;
    let mut counts = [0u64; 3];
    for a in 0..3 {
        if last[a] <= first[a] || last[a] - first[a] >= i64::from(u32::MAX) {
            return Err(GridError::DegenerateRegion);
        }
        counts[a] = (last[a] - first[a]) as u64 + 1;
    }
    check_cap(counts, max_points)?;
    let min = lattice_coordinate(&anchor, spacing, first);
    let max = lattice_coordinate(&anchor, spacing, last);
    let region = Region::new(min, max)?;
    Ok(SceneGrid { region, spacing, counts: counts.map(|c| c as u32), anchor, first })
}

impl SceneGrid {
    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn counts(&self) -> [u32; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn origin(&self) -> Point3<f64> {
        self.region.min
    }

    /// Lattice anchor; see [`lattice_grid`].
    pub fn anchor(&self) -> Point3<f64> {
        self.anchor
    }

    /// Anchor-relative index of lattice point `(0, 0, 0)`.
    pub fn first_index(&self) -> [i64; 3] {
        self.first
    }

    pub fn flat_index(&self, lattice: [u32; 3]) -> u32 {
        let [nx, ny, _] = self.counts;
        lattice[0] + nx * (lattice[1] + ny * lattice[2])
    }

    pub fn lattice_index(&self, flat: u32) -> [u32; 3] {
        let [nx, ny, _] = self.counts;
        let i = flat % nx;
        let rest = flat / nx;
        [i, rest % ny, rest / ny]
    }

    /// World coordinates of lattice point `(i, j, k)`.
    pub fn lattice_point(&self, lattice: [u32; 3]) -> Point3<f64> {
        let index = [0, 1, 2].map(|a| self.first[a] + i64::from(lattice[a]));
        lattice_coordinate(&self.anchor, self.spacing, index)
    }

    pub fn point(&self, flat: u32) -> Point3<f64> {
        self.lattice_point(self.lattice_index(flat))
    }

    /// Flat index of the lattice point nearest to `p`, or `None` outside the region.
    /// A coordinate exactly halfway between two lattice planes rounds to the lower
    /// index, so ties go to the lowest flat index.
    pub fn nearest(&self, p: &Point3<f64>) -> Option<u32> {
        if !self.region.contains(p) {
            return None;
        }
        let mut lattice = [0u32; 3];
        for a in 0..3 {
            let t = (p[a] - self.region.min[a]) / self.spacing;
            let rounded = (t - 0.5).ceil().max(0.0);
            lattice[a] = (rounded as u32).min(self.counts[a] - 1);
        }
        Some(self.flat_index(lattice))
    }

    /// True when the lattice point lies on one of the six faces of the grid.
    pub fn on_boundary(&self, flat: u32) -> bool {
        let l = self.lattice_index(flat);
        (0..3).any(|a| l[a] == 0 || l[a] + 1 == self.counts[a])
    }

    /// Same lattice shifted rigidly by `offset`.
    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self { region: self.region.translated(offset), anchor: self.anchor + offset, ..*self }
    }
}

/// Analytic single-pixel footprint of a rig at `target`: lateral width `z·k/f` and
/// depth resolution `z²·k/(f·b)`, taking the coarsest camera.
pub fn pixel_footprint(rig: &CameraRig, target: &Point3<f64>) -> Result<Vector3<f64>, GridError> {
    let baseline = rig.baseline();
    if rig.len() < 2 || baseline <= 0.0 {
        return Err(GridError::NoBaseline);
    }
    let mut lateral = 0.0_f64;
    let mut depth = 0.0_f64;
    for (i, cam) in rig.cameras().iter().enumerate() {
        if cam.locate_pixel(target).is_err() {
            return Err(GridError::TargetNotVisible(i));
        }
        let z = cam.pose().to_camera_frame(target).z;
        let angular = cam.intrinsics().pixel_size() / cam.intrinsics().focal_length();
        lateral = lateral.max(z * angular);
        depth = depth.max(z * z * angular / baseline);
    }
    Ok(Vector3::new(lateral, lateral, depth))
}

/// Region centered on `target` whose half-extent per axis is `margin_factor` times
/// the analytic pixel footprint at that depth.
pub fn auto_region(rig: &CameraRig, target: &Point3<f64>, margin_factor: f64) -> Result<Region, GridError> {
    if !(margin_factor.is_finite() && margin_factor > 0.0) {
        return Err(GridError::InvalidMargin(margin_factor));
    }
    let footprint = pixel_footprint(rig, target)?;
    Region::around(*target, footprint * margin_factor)
}
