//! Quantization uncertainty regions of multi-camera rigs.
//!
//! Scene space is sampled on a regular lattice, every lattice point is assigned to
//! the pixel that sees it in each camera, and the per-camera assignments are
//! intersected. Each pixel tuple then owns the lattice points inside the
//! intersection of its pixels' view frusta, whose count gives the exact polyhedron
//! volume of that correspondence's uncertainty region.

pub mod camera;
pub mod config;
pub mod experiment;
pub mod fit;
pub mod grid;
pub mod metrics;
pub mod persist;
pub mod tables;
pub mod volume;

pub use camera::{Camera, CameraIntrinsics, CameraPose, CameraRig, PixelId};
pub use grid::{auto_region, generate_grid, Region, SceneGrid};
pub use tables::{build_correspondence, intersect_tables, CorrespondenceTable, PixelTuple, PixelViewTable};
pub use volume::UncertaintyRegion;
