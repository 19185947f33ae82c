//! Binary persistence of correspondence tables.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "QVLT" | version u16 | camera count u16
//! per camera:  focal f64 | pixel size f64 | pixel count u32 | u0 f64 | v0 f64
//!              center 3×f64 | rotation 9×f64 (row-major)
//! region min 3×f64 | region max 3×f64 | spacing f64 | counts 3×u32
//! lattice anchor 3×f64 | first index 3×i64 | key count u64
//! per key:     (u u32, v u32) per camera | point count u32 | point indices as
//!              LEB128 varints, first absolute then successive differences
//! CRC-32 of everything above, u32
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3};

use crate::camera::{Camera, CameraIntrinsics, CameraPose, CameraRig, PixelId};
use crate::grid::lattice_grid;
use crate::tables::{CorrespondenceTable, PixelTuple};

pub const MAGIC: [u8; 4] = *b"QVLT";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported table format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("corrupt table file: {0}")]
    CorruptFile(String),
}

fn corrupt(msg: impl Into<String>) -> PersistError {
    PersistError::CorruptFile(msg.into())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn varint(&mut self, mut v: u32) {
        while v >= 0x80 {
            self.0.push((v as u8 & 0x7f) | 0x80);
            v >>= 7;
        }
        self.0.push(v as u8);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], PersistError> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| corrupt("unexpected end of data"))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice of length N"))
    }
    fn u16(&mut self) -> Result<u16, PersistError> {
        self.take().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32, PersistError> {
        self.take().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, PersistError> {
        self.take().map(u64::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64, PersistError> {
        self.take().map(f64::from_le_bytes)
    }
    fn varint(&mut self) -> Result<u32, PersistError> {
        let mut value = 0u64;
        for shift in (0..35).step_by(7) {
            let [b] = self.take::<1>()?;
            value |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(value).map_err(|_| corrupt("varint overflow"));
            }
        }
        Err(corrupt("varint too long"))
    }
}

/// Serializes a table into the versioned binary layout. Output depends only on the
/// table contents.
pub fn encode_table(table: &CorrespondenceTable) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u16(FORMAT_VERSION);
    w.u16(table.camera_count() as u16);
    for cam in table.rig().cameras() {
        let intr = cam.intrinsics();
        w.f64(intr.focal_length());
        w.f64(intr.pixel_size());
        w.u32(intr.pixel_count());
        let (u0, v0) = intr.principal_point();
        w.f64(u0);
        w.f64(v0);
        let c = cam.pose().center();
        for a in 0..3 {
            w.f64(c[a]);
        }
        let r = cam.pose().rotation();
        for i in 0..3 {
            for j in 0..3 {
                w.f64(r[(i, j)]);
            }
        }
    }
    let grid = table.grid();
    for p in [grid.region().min(), grid.region().max()] {
        for a in 0..3 {
            w.f64(p[a]);
        }
    }
    w.f64(grid.spacing());
    for c in grid.counts() {
        w.u32(c);
    }
    let anchor = grid.anchor();
    for a in 0..3 {
        w.f64(anchor[a]);
    }
    for i in grid.first_index() {
        w.u64(i as u64);
    }
    w.u64(table.len() as u64);
    for (key, points) in table.entries() {
        for px in key.pixels() {
            w.u32(px.u);
            w.u32(px.v);
        }
        w.u32(points.len() as u32);
        let mut previous = 0u32;
        for (i, &p) in points.iter().enumerate() {
            w.varint(if i == 0 { p } else { p - previous });
            previous = p;
        }
    }
    let checksum = crc32fast::hash(&w.0);
    w.u32(checksum);
    w.0
}

pub fn decode_table(bytes: &[u8]) -> Result<CorrespondenceTable, PersistError> {
    if bytes.len() < 8 || bytes[..4] != MAGIC {
        return Err(corrupt("missing magic header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(PersistError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < 12 {
        return Err(corrupt("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader { bytes: body, pos: 6 };
    let camera_count = usize::from(r.u16()?);
    if camera_count == 0 {
        return Err(corrupt("no cameras"));
    }
    let mut cameras = Vec::with_capacity(camera_count);
    for _ in 0..camera_count {
        let focal = r.f64()?;
        let pixel = r.f64()?;
        let count = r.u32()?;
        let principal = (r.f64()?, r.f64()?);
        let center = Point3::new(r.f64()?, r.f64()?, r.f64()?);
        let mut rot = [0.0; 9];
        for v in &mut rot {
            *v = r.f64()?;
        }
        let intr = CameraIntrinsics::with_principal_point(focal, pixel, count, principal)
            .map_err(|e| corrupt(format!("camera intrinsics: {e}")))?;
        let pose = CameraPose::new(center, Matrix3::from_row_slice(&rot))
            .map_err(|e| corrupt(format!("camera pose: {e}")))?;
        cameras.push(Camera::new(intr, pose));
    }
    let rig = CameraRig::new(cameras).map_err(|e| corrupt(e.to_string()))?;

    let min = Point3::new(r.f64()?, r.f64()?, r.f64()?);
    let max = Point3::new(r.f64()?, r.f64()?, r.f64()?);
    let spacing = r.f64()?;
    let counts = [r.u32()?, r.u32()?, r.u32()?];
    let anchor = Point3::new(r.f64()?, r.f64()?, r.f64()?);
    let first = [r.u64()? as i64, r.u64()? as i64, r.u64()? as i64];
    let last = [0, 1, 2].map(|a| first[a].saturating_add(i64::from(counts[a])) - 1);
    let grid = lattice_grid(anchor, spacing, first, last, u64::MAX).map_err(|e| corrupt(e.to_string()))?;
    if grid.counts() != counts || grid.region().min() != min || grid.region().max() != max {
        return Err(corrupt("grid region disagrees with lattice anchor and counts"));
    }
    let grid_len = grid.len() as u64;

    let key_count = r.u64()?;
    let mut entries = std::collections::BTreeMap::new();
    let mut previous_key: Option<PixelTuple> = None;
    for _ in 0..key_count {
        let mut pixels = Vec::with_capacity(camera_count);
        for _ in 0..camera_count {
            pixels.push(PixelId::new(r.u32()?, r.u32()?));
        }
        let key = PixelTuple::new(pixels);
        if previous_key.as_ref().is_some_and(|prev| *prev >= key) {
            return Err(corrupt("keys out of order"));
        }
        let n = r.u32()? as usize;
        if n == 0 {
            return Err(corrupt("empty point set"));
        }
        let mut points = Vec::with_capacity(n.min(body.len()));
        let mut current = 0u64;
        for i in 0..n {
            let delta = u64::from(r.varint()?);
            if i > 0 && delta == 0 {
                return Err(corrupt("point indices not strictly increasing"));
            }
            current += delta;
            if current >= grid_len {
                return Err(corrupt("point index outside grid"));
            }
            points.push(current as u32);
        }
        entries.insert(key.clone(), points);
        previous_key = Some(key);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after last key"));
    }
    Ok(CorrespondenceTable::from_parts(rig, grid, entries))
}

pub fn save_table(table: &CorrespondenceTable, path: &Path) -> Result<(), PersistError> {
    fs::write(path, encode_table(table))?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<CorrespondenceTable, PersistError> {
    decode_table(&fs::read(path)?)
}
