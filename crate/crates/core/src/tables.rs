//! Pixel → grid-point lookup tables, per camera and jointly across a rig.
//!
//! A [`PixelViewTable`] partitions the grid points a camera can see by the pixel
//! that sees them. A [`CorrespondenceTable`] refines that partition across every
//! camera of a rig: each key is a pixel tuple (one pixel per camera) and its value
//! is the set of grid points inside the intersection of those pixels' view frusta.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use nalgebra::Point3;
use rayon::prelude::*;
use smallvec::SmallVec;

use crate::camera::{Camera, CameraRig, PixelId, ProjectionError};
use crate::grid::SceneGrid;
use crate::volume::{UncertaintyRegion, VolumeError};

/// Points classified per parallel work unit.
const CHUNK_POINTS: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("tables reference different scene grids")]
    GridMismatch,
    #[error("intersection needs at least two tables, got {0}")]
    FewerThanTwoTables(usize),
    #[error("no grid point is seen by pixel tuple {0}")]
    NotFound(PixelTuple),
    #[error("pixel tuple has {got} pixels but the table has {expected} cameras")]
    TupleLength { expected: usize, got: usize },
    #[error("point lies outside the gridded region")]
    OutsideRegion,
    #[error("nearest grid point is not seen by every camera")]
    NotCovered,
    #[error("invalid pixel tuple '{0}': expected comma-separated u,v pairs")]
    ParsePixelTuple(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// One pixel per camera, in rig order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelTuple(SmallVec<[PixelId; 4]>);

impl PixelTuple {
    pub fn new(pixels: impl IntoIterator<Item = PixelId>) -> Self {
        Self(pixels.into_iter().collect())
    }

    pub fn pixels(&self) -> &[PixelId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn extended(&self, pixel: PixelId) -> Self {
        let mut next = self.0.clone();
        next.push(pixel);
        Self(next)
    }
}

impl fmt::Display for PixelTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("]")
    }
}

/// Parses `uA,vA,uB,vB,...`.
impl FromStr for PixelTuple {
    type Err = TableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TableError::ParsePixelTuple(s.to_string());
        let values = s
            .split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(bad());
        }
        Ok(Self::new(values.chunks(2).map(|c| PixelId::new(c[0], c[1]))))
    }
}

/// Points dropped while building a table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Discards {
    pub behind_camera: u64,
    pub out_of_view: u64,
}

impl Discards {
    pub fn total(&self) -> u64 {
        self.behind_camera + self.out_of_view
    }

    fn record(&mut self, err: ProjectionError) {
        match err {
            ProjectionError::BehindCamera => self.behind_camera += 1,
            ProjectionError::OutOfView => self.out_of_view += 1,
        }
    }

    fn merge(&mut self, other: Discards) {
        self.behind_camera += other.behind_camera;
        self.out_of_view += other.out_of_view;
    }
}

/// Groups flat indices by key in arrival order, with a one-entry cache since
/// neighbouring grid points usually share a key.
struct Accumulator<K> {
    groups: Vec<(K, Vec<u32>)>,
    slot: HashMap<K, usize>,
    last: Option<usize>,
    discards: Discards,
}

impl<K: Eq + Hash + Clone> Accumulator<K> {
    fn new() -> Self {
        Self { groups: Vec::new(), slot: HashMap::new(), last: None, discards: Discards::default() }
    }

    fn push(&mut self, key: &K, flat: u32) {
        if let Some(i) = self.last {
            if self.groups[i].0 == *key {
                self.groups[i].1.push(flat);
                return;
            }
        }
        let next = self.groups.len();
        let i = *self.slot.entry(key.clone()).or_insert(next);
        if i == next {
            self.groups.push((key.clone(), Vec::new()));
        }
        self.groups[i].1.push(flat);
        self.last = Some(i);
    }
}

/// Classifies every grid point in contiguous chunks and merges the chunk results in
/// index order, so the output is sorted and independent of scheduling.
fn classify_grid<K, F>(grid: &SceneGrid, classify: F) -> (BTreeMap<K, Vec<u32>>, Discards)
where
    K: Ord + Eq + Hash + Clone + Send,
    F: Fn(&Point3<f64>) -> Result<Option<K>, ProjectionError> + Sync,
{
    let total = grid.len();
    let starts: Vec<usize> = (0..total).step_by(CHUNK_POINTS).collect();
    let chunks: Vec<Accumulator<K>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK_POINTS).min(total);
            let mut acc = Accumulator::new();
            for flat in start as u32..end as u32 {
                match classify(&grid.point(flat)) {
                    Ok(Some(key)) => acc.push(&key, flat),
                    Ok(None) => {}
                    Err(e) => acc.discards.record(e),
                }
            }
            acc
        })
        .collect();

    let mut merged: BTreeMap<K, Vec<u32>> = BTreeMap::new();
    let mut discards = Discards::default();
    for chunk in chunks {
        discards.merge(chunk.discards);
        for (key, points) in chunk.groups {
            merged.entry(key).or_default().extend(points);
        }
    }
    (merged, discards)
}

/// Grid points seen by each pixel of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelViewTable {
    camera_id: usize,
    camera: Camera,
    grid: SceneGrid,
    entries: BTreeMap<PixelId, Vec<u32>>,
    discards: Discards,
}

impl PixelViewTable {
    pub fn camera_id(&self) -> usize {
        self.camera_id
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn grid(&self) -> &SceneGrid {
        &self.grid
    }

    pub fn entries(&self) -> &BTreeMap<PixelId, Vec<u32>> {
        &self.entries
    }

    pub fn get(&self, pixel: &PixelId) -> Option<&[u32]> {
        self.entries.get(pixel).map(Vec::as_slice)
    }

    /// Grid points that were behind the camera or outside its field of view.
    pub fn discards(&self) -> Discards {
        self.discards
    }

    /// Number of grid points in view.
    pub fn visible_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }
}

/// Assigns every grid point in view of `camera` to the pixel that sees it.
pub fn build_pixel_view_table(camera: &Camera, camera_id: usize, grid: &SceneGrid) -> PixelViewTable {
    let (entries, discards) = classify_grid(grid, |p| camera.locate_pixel(p).map(Some));
    PixelViewTable { camera_id, camera: camera.clone(), grid: *grid, entries, discards }
}

/// Grid points grouped by the pixel tuple that sees them in every camera of a rig.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceTable {
    rig: CameraRig,
    grid: SceneGrid,
    entries: BTreeMap<PixelTuple, Vec<u32>>,
}

impl CorrespondenceTable {
    pub(crate) fn from_parts(rig: CameraRig, grid: SceneGrid, entries: BTreeMap<PixelTuple, Vec<u32>>) -> Self {
        Self { rig, grid, entries }
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn grid(&self) -> &SceneGrid {
        &self.grid
    }

    pub fn camera_count(&self) -> usize {
        self.rig.len()
    }

    pub fn entries(&self) -> &BTreeMap<PixelTuple, Vec<u32>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &PixelTuple) -> Option<&[u32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Number of grid points seen by every camera.
    pub fn covered_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// Pixel tuple whose point set contains the grid point `flat`.
    pub fn owner_of(&self, flat: u32) -> Option<&PixelTuple> {
        self.entries
            .iter()
            .find(|(_, points)| points.binary_search(&flat).is_ok())
            .map(|(key, _)| key)
    }

    fn check_tuple(&self, key: &PixelTuple) -> Result<(), TableError> {
        if key.len() != self.camera_count() {
            return Err(TableError::TupleLength { expected: self.camera_count(), got: key.len() });
        }
        Ok(())
    }
}

/// Counts gathered during a joint build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub grid_points: u64,
    /// Points in view of every camera.
    pub jointly_visible: u64,
    /// Points missed by at least one camera, keyed by the first camera's failure.
    pub discards: Discards,
}

fn joint_key(rig: &CameraRig, p: &Point3<f64>) -> Result<PixelTuple, ProjectionError> {
    let mut pixels = SmallVec::new();
    for cam in rig.cameras() {
        pixels.push(cam.locate_pixel(p)?);
    }
    Ok(PixelTuple(pixels))
}

/// Builds the joint table in one pass over the grid: each point is located in every
/// camera and filed under the resulting tuple. Equivalent to building one
/// [`PixelViewTable`] per camera and folding them with [`intersect_tables`].
pub fn build_correspondence(rig: &CameraRig, grid: &SceneGrid) -> (CorrespondenceTable, BuildReport) {
    build_filtered(rig, grid, None)
}

/// Like [`build_correspondence`], but keeps only the listed tuples. Every grid point
/// is still classified; only storage is restricted.
pub fn build_correspondence_for(
    rig: &CameraRig,
    grid: &SceneGrid,
    keys: &BTreeSet<PixelTuple>,
) -> (CorrespondenceTable, BuildReport) {
    build_filtered(rig, grid, Some(keys))
}

fn build_filtered(
    rig: &CameraRig,
    grid: &SceneGrid,
    keep: Option<&BTreeSet<PixelTuple>>,
) -> (CorrespondenceTable, BuildReport) {
    let counted = std::sync::atomic::AtomicU64::new(0);
    let (entries, discards) = classify_grid(grid, |p| {
        let key = joint_key(rig, p)?;
        counted.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        Ok(match keep {
            Some(set) if !set.contains(&key) => None,
            _ => Some(key),
        })
    });
    let report = BuildReport {
        grid_points: grid.len() as u64,
        jointly_visible: counted.into_inner(),
        discards,
    };
    (CorrespondenceTable::from_parts(rig.clone(), *grid, entries), report)
}

/// Set intersection of per-camera tables, folded left to right: the running joint
/// table is intersected with each further camera in turn. Empty intersections are
/// never stored.
pub fn intersect_tables(tables: &[PixelViewTable]) -> Result<CorrespondenceTable, TableError> {
    if tables.len() < 2 {
        return Err(TableError::FewerThanTwoTables(tables.len()));
    }
    let grid = tables[0].grid;
    if tables.iter().any(|t| t.grid != grid) {
        return Err(TableError::GridMismatch);
    }

    let mut joint: BTreeMap<PixelTuple, Vec<u32>> = tables[0]
        .entries
        .iter()
        .map(|(pixel, points)| (PixelTuple::new([*pixel]), points.clone()))
        .collect();

    const UNSEEN: u32 = u32::MAX;
    let mut owner = vec![UNSEEN; grid.len()];
    for table in &tables[1..] {
        owner.fill(UNSEEN);
        let pixels: Vec<PixelId> = table.entries.keys().copied().collect();
        for (slot, points) in table.entries.values().enumerate() {
            for &p in points {
                owner[p as usize] = slot as u32;
            }
        }
        let mut next = BTreeMap::new();
        for (key, points) in joint {
            let mut split: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
            for p in points {
                let slot = owner[p as usize];
                if slot != UNSEEN {
                    split.entry(slot).or_default().push(p);
                }
            }
            for (slot, shared) in split {
                next.insert(key.extended(pixels[slot as usize]), shared);
            }
        }
        joint = next;
    }

    let rig = CameraRig::new(tables.iter().map(|t| t.camera.clone()).collect())
        .expect("at least two tables");
    Ok(CorrespondenceTable::from_parts(rig, grid, joint))
}

/// Uncertainty region seen by a pixel tuple. `NotFound` means the pixels' views do
/// not intersect inside the grid, so the correspondence is geometrically impossible.
pub fn query_by_pixels(table: &CorrespondenceTable, key: &PixelTuple) -> Result<UncertaintyRegion, TableError> {
    table.check_tuple(key)?;
    let points = table.get(key).ok_or_else(|| TableError::NotFound(key.clone()))?;
    Ok(UncertaintyRegion::from_indices(table.grid(), points.to_vec())?)
}

/// Pixel tuple owning the grid point nearest to `point`.
pub fn query_by_point<'t>(table: &'t CorrespondenceTable, point: &Point3<f64>) -> Result<&'t PixelTuple, TableError> {
    let flat = table.grid().nearest(point).ok_or(TableError::OutsideRegion)?;
    table.owner_of(flat).ok_or(TableError::NotCovered)
}
