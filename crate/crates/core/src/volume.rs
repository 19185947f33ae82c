//! Volumes of uncertainty regions: exact polyhedron volume from the voxel count and
//! the axis-aligned cuboid approximation, plus voxel export for plotting.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::grid::SceneGrid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VolumeError {
    #[error("uncertainty region has no points")]
    EmptyRegion,
    #[error("spacing must be positive, got {0}")]
    InvalidSpacing(f64),
}

/// How cuboid extents are measured from the region's points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CuboidConvention {
    /// Between the extreme point coordinates.
    #[default]
    Extrema,
    /// Extrema widened by half a spacing on each side (each point as a full voxel).
    Padded,
}

/// Axis-aligned bounding box of a region's points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Cuboid {
    /// Side lengths `(Δx, Δy, Δz)`.
    pub fn dims(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let d = self.dims();
        d.x * d.y * d.z
    }

    pub fn padded(&self, spacing: f64) -> Self {
        let half = Vector3::repeat(spacing / 2.0);
        Self { min: self.min - half, max: self.max + half }
    }
}

/// Polyhedron volume `g³ · p` of `point_count` grid points at spacing `g`.
pub fn polyhedron_volume(point_count: usize, spacing: f64) -> Result<f64, VolumeError> {
    if point_count == 0 {
        return Err(VolumeError::EmptyRegion);
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(VolumeError::InvalidSpacing(spacing));
    }
    Ok(spacing.powi(3) * point_count as f64)
}

/// Bounding box of a point set. A single point yields a zero-volume box.
pub fn cuboid_volume<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Result<Cuboid, VolumeError> {
    let mut it = points.into_iter();
    let first = *it.next().ok_or(VolumeError::EmptyRegion)?;
    let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    Ok(Cuboid { min, max })
}

/// Grid points sharing one pixel tuple, with their derived volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyRegion {
    grid: SceneGrid,
    points: Vec<u32>,
    polyhedron_volume: f64,
    cuboid: Cuboid,
}

impl UncertaintyRegion {
    /// Region made of the given flat grid indices.
    pub fn from_indices(grid: &SceneGrid, mut points: Vec<u32>) -> Result<Self, VolumeError> {
        points.sort_unstable();
        points.dedup();
        let polyhedron_volume = polyhedron_volume(points.len(), grid.spacing())?;
        // Extremes over lattice indices first, then one coordinate conversion.
        let mut lo = [u32::MAX; 3];
        let mut hi = [0u32; 3];
        for &p in &points {
            let l = grid.lattice_index(p);
            for a in 0..3 {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(l[a]);
            }
        }
        let cuboid = Cuboid { min: grid.lattice_point(lo), max: grid.lattice_point(hi) };
        Ok(Self { grid: *grid, points, polyhedron_volume, cuboid })
    }

    pub fn grid(&self) -> &SceneGrid {
        &self.grid
    }

    /// Sorted flat indices of the region's grid points.
    pub fn point_indices(&self) -> &[u32] {
        &self.points
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn coordinates(&self) -> impl Iterator<Item = Point3<f64>> + '_ {
        self.points.iter().map(|&p| self.grid.point(p))
    }

    pub fn polyhedron_volume(&self) -> f64 {
        self.polyhedron_volume
    }

    pub fn cuboid(&self) -> Cuboid {
        self.cuboid
    }

    pub fn cuboid_with(&self, convention: CuboidConvention) -> Cuboid {
        match convention {
            CuboidConvention::Extrema => self.cuboid,
            CuboidConvention::Padded => self.cuboid.padded(self.spacing()),
        }
    }

    pub fn cuboid_dims(&self) -> Vector3<f64> {
        self.cuboid.dims()
    }

    pub fn cuboid_volume(&self) -> f64 {
        self.cuboid.volume()
    }

    /// A single point has no extent, so its cuboid volume is zero.
    pub fn is_degenerate(&self) -> bool {
        self.points.len() == 1
    }

    /// Centroid of the region's points.
    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.coordinates().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }
}

/// Voxel export formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelFormat {
    /// `x_m,y_m,z_m` centroids, one per row.
    Csv,
    /// ASCII PLY with one axis-aligned cube of side `g` per point.
    Ply,
}

impl VoxelFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => VoxelFormat::Ply,
            _ => VoxelFormat::Csv,
        }
    }
}

/// Formats a number with nine significant digits, without exponent for the
/// magnitudes that occur in scene coordinates.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&magnitude) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn export_voxels(region: &UncertaintyRegion, path: &Path, format: VoxelFormat) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        VoxelFormat::Csv => write_csv(region, &mut out)?,
        VoxelFormat::Ply => write_ply(region, &mut out)?,
    }
    out.flush()
}

fn write_csv(region: &UncertaintyRegion, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "x_m,y_m,z_m")?;
    for p in region.coordinates() {
        writeln!(out, "{},{},{}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z))?;
    }
    Ok(())
}

const CUBE_CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

// Outward-facing quads.
const CUBE_FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [2, 3, 7, 6],
    [1, 2, 6, 5],
    [0, 4, 7, 3],
];

fn write_ply(region: &UncertaintyRegion, out: &mut impl Write) -> io::Result<()> {
    let n = region.point_count();
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "comment voxel spacing {} m", format_sig9(region.spacing()))?;
    writeln!(out, "element vertex {}", 8 * n)?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    writeln!(out, "element face {}", 6 * n)?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    let half = region.spacing() / 2.0;
    for p in region.coordinates() {
        for c in CUBE_CORNERS {
            writeln!(
                out,
                "{} {} {}",
                format_sig9(p.x + c[0] * half),
                format_sig9(p.y + c[1] * half),
                format_sig9(p.z + c[2] * half)
            )?;
        }
    }
    for i in 0..n {
        let base = 8 * i;
        for f in CUBE_FACES {
            writeln!(out, "4 {} {} {} {}", base + f[0], base + f[1], base + f[2], base + f[3])?;
        }
    }
    Ok(())
}

/// Reads back a voxel CSV written by [`export_voxels`].
pub fn read_voxel_csv(path: &Path) -> io::Result<Vec<Point3<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let coords: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        if coords.len() != 3 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("line {}: expected 3 columns", i + 1)));
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    Ok(points)
}
