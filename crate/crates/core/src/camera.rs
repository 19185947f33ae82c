//! Pinhole cameras, pixel-edge angle tables and the two independent routes from a
//! world point to a pixel: angle lookup (azimuth/elevation against the edge tables)
//! and the homogeneous projection matrix.

use nalgebra::{Matrix3, Matrix3x4, Point3, Vector3, Vector4};

/// Errors raised when constructing cameras from invalid parameters.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CameraError {
    #[error("focal length must be positive and finite, got {0} m")]
    FocalLength(f64),
    #[error("pixel size must be positive and finite, got {0} m")]
    PixelSize(f64),
    #[error("pixel count must be even and at least 2, got {0}")]
    PixelCount(u32),
    #[error("half field of view must be below 90 degrees")]
    FieldOfView,
    #[error("principal point ({0}, {1}) lies outside the sensor")]
    PrincipalPoint(f64, f64),
    #[error("rotation matrix is not a proper orthonormal rotation")]
    Rotation,
    #[error("camera center must be finite")]
    Center,
    #[error("a rig needs at least one camera")]
    EmptyRig,
}

/// Per-point failures when mapping a scene point to a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProjectionError {
    #[error("point is behind the camera")]
    BehindCamera,
    #[error("point is outside the sensor field of view")]
    OutOfView,
}

/// Intrinsic parameters of a square-pixel, square-sensor pinhole camera.
/// Lengths are in meters, the principal point in (continuous) pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    focal_length: f64,
    pixel_size: f64,
    pixel_count: u32,
    principal_point: (f64, f64),
}

impl CameraIntrinsics {
    /// Intrinsics with the principal point at the sensor center.
    pub fn new(focal_length: f64, pixel_size: f64, pixel_count: u32) -> Result<Self, CameraError> {
        let half = f64::from(pixel_count) / 2.0;
        Self::with_principal_point(focal_length, pixel_size, pixel_count, (half, half))
    }

    pub fn with_principal_point(
        focal_length: f64,
        pixel_size: f64,
        pixel_count: u32,
        principal_point: (f64, f64),
    ) -> Result<Self, CameraError> {
        if !(focal_length.is_finite() && focal_length > 0.0) {
            return Err(CameraError::FocalLength(focal_length));
        }
        if !(pixel_size.is_finite() && pixel_size > 0.0) {
            return Err(CameraError::PixelSize(pixel_size));
        }
        if pixel_count < 2 || !pixel_count.is_multiple_of(2) {
            return Err(CameraError::PixelCount(pixel_count));
        }
        let n = f64::from(pixel_count);
        let (u0, v0) = principal_point;
        if !(u0.is_finite() && v0.is_finite() && (0.0..=n).contains(&u0) && (0.0..=n).contains(&v0)) {
            return Err(CameraError::PrincipalPoint(u0, v0));
        }
        let half_fov = (n * pixel_size / (2.0 * focal_length)).atan();
        if half_fov.is_nan() || half_fov >= std::f64::consts::FRAC_PI_2 {
            return Err(CameraError::FieldOfView);
        }
        Ok(Self { focal_length, pixel_size, pixel_count, principal_point })
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn pixel_count(&self) -> u32 {
        self.pixel_count
    }

    pub fn principal_point(&self) -> (f64, f64) {
        self.principal_point
    }

    /// Half of the horizontal (= vertical) field of view for a centered sensor, in radians.
    pub fn half_fov(&self) -> f64 {
        (f64::from(self.pixel_count) * self.pixel_size / (2.0 * self.focal_length)).atan()
    }

    /// Image scaling factor in pixels per unit of normalized image coordinate (f / k).
    pub fn scale(&self) -> f64 {
        self.focal_length / self.pixel_size
    }
}

/// Position and orientation of a camera in world coordinates.
///
/// `rotation` maps camera-frame directions into the world frame, so a world point `p`
/// has camera-frame coordinates `rotationᵀ · (p − center)`. The optic axis is the
/// camera-frame `+z`, `+x` runs along increasing `u` and `+y` along increasing `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    center: Point3<f64>,
    rotation: Matrix3<f64>,
}

impl CameraPose {
    pub fn new(center: Point3<f64>, rotation: Matrix3<f64>) -> Result<Self, CameraError> {
        if !center.coords.iter().all(|c| c.is_finite()) {
            return Err(CameraError::Center);
        }
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).abs().max() > 1e-9 || rotation.determinant() <= 0.0 {
            return Err(CameraError::Rotation);
        }
        Ok(Self { center, rotation })
    }

    /// Camera looking down world `+z` with no rotation.
    pub fn at(center: Point3<f64>) -> Result<Self, CameraError> {
        Self::new(center, Matrix3::identity())
    }

    pub fn center(&self) -> Point3<f64> {
        self.center
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// World point expressed in the camera frame.
    pub fn to_camera_frame(&self, point: &Point3<f64>) -> Vector3<f64> {
        self.rotation.tr_mul(&(point - self.center))
    }
}

/// A pixel address on the sensor: column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelId {
    pub u: u32,
    pub v: u32,
}

impl PixelId {
    pub const fn new(u: u32, v: u32) -> Self {
        Self { u, v }
    }
}

impl std::fmt::Display for PixelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// Angles (radians) of the planes through the perspective center and each pixel
/// border along one sensor axis. Pixel `i` covers `[edges[i], edges[i + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleTable {
    edges: Vec<f64>,
}

impl AngleTable {
    /// Edge angles along one axis whose principal coordinate is `principal` pixels.
    fn along_axis(intrinsics: &CameraIntrinsics, principal: f64) -> Self {
        let CameraIntrinsics { focal_length, pixel_size, pixel_count, .. } = *intrinsics;
        let edges = (0..=pixel_count)
            .map(|i| (pixel_size * (f64::from(i) - principal) / focal_length).atan())
            .collect();
        Self { edges }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn pixel_count(&self) -> u32 {
        (self.edges.len() - 1) as u32
    }

    /// Pixel interval containing `angle`, by binary search over the ordered edges.
    /// Left-closed, right-open: an angle equal to `edges[i]` lands in pixel `i`.
    pub fn locate(&self, angle: f64) -> Option<u32> {
        let below_or_equal = self.edges.partition_point(|&edge| edge <= angle);
        if below_or_equal == 0 || below_or_equal == self.edges.len() {
            // Also catches NaN, for which partition_point returns 0.
            return None;
        }
        Some((below_or_equal - 1) as u32)
    }
}

/// Pixel-border azimuth angles `α_i = arctan(k·i / f)` for `i = −n/2 … n/2`
/// (shifted by the principal point when it is not centered).
pub fn pixel_edge_angles(intrinsics: &CameraIntrinsics) -> AngleTable {
    AngleTable::along_axis(intrinsics, intrinsics.principal_point.0)
}

/// Pixel-border elevation angles `γ`; identical to the azimuth table for a centered
/// principal point because pixels are square.
pub fn pixel_edge_elevations(intrinsics: &CameraIntrinsics) -> AngleTable {
    AngleTable::along_axis(intrinsics, intrinsics.principal_point.1)
}

/// Range and projective angles of a point relative to a camera's optic center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    /// Distance from the optic center.
    pub rho: f64,
    /// Azimuth `arctan(x / z)`.
    pub theta: f64,
    /// Elevation `arctan(y / z)`.
    pub phi: f64,
}

/// Converts a world point to `(ρ, θ, φ)` about the camera center. The angles are the
/// projective azimuth `arctan(x/z)` and elevation `arctan(y/z)` of the camera-frame
/// coordinates, not textbook spherical coordinates.
pub fn to_spherical(point: &Point3<f64>, pose: &CameraPose) -> Result<Spherical, ProjectionError> {
    let c = pose.to_camera_frame(point);
    if c.z.is_nan() || c.z <= 0.0 {
        return Err(ProjectionError::BehindCamera);
    }
    Ok(Spherical {
        rho: c.norm(),
        theta: (c.x / c.z).atan(),
        phi: (c.y / c.z).atan(),
    })
}

/// A fully specified camera: intrinsics, pose and precomputed edge tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    azimuth_edges: AngleTable,
    elevation_edges: AngleTable,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Self {
            azimuth_edges: pixel_edge_angles(&intrinsics),
            elevation_edges: pixel_edge_elevations(&intrinsics),
            intrinsics,
            pose,
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn pose(&self) -> &CameraPose {
        &self.pose
    }

    pub fn azimuth_edges(&self) -> &AngleTable {
        &self.azimuth_edges
    }

    pub fn elevation_edges(&self) -> &AngleTable {
        &self.elevation_edges
    }

    /// Pixel viewing `point`, found by binary search of its azimuth and elevation in
    /// the edge tables.
    pub fn locate_pixel(&self, point: &Point3<f64>) -> Result<PixelId, ProjectionError> {
        let s = to_spherical(point, &self.pose)?;
        let u = self.azimuth_edges.locate(s.theta).ok_or(ProjectionError::OutOfView)?;
        let v = self.elevation_edges.locate(s.phi).ok_or(ProjectionError::OutOfView)?;
        Ok(PixelId { u, v })
    }

    /// 3×4 matrix `C · P · [R | T]` mapping homogeneous world points to homogeneous
    /// pixel coordinates.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let (u0, v0) = self.intrinsics.principal_point;
        let f = self.intrinsics.focal_length;
        let k = self.intrinsics.pixel_size;
        // Image plane (meters) to pixel coordinates.
        let pixel_from_image = Matrix3::new(1.0 / k, 0.0, u0, 0.0, 1.0 / k, v0, 0.0, 0.0, 1.0);
        #[rustfmt::skip]
        let perspective = Matrix3x4::new(
            f, 0.0, 0.0, 0.0,
            0.0, f, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        let world_to_camera = self.pose.rotation.transpose();
        let translation = -(world_to_camera * self.pose.center.coords);
        let mut rigid = nalgebra::Matrix4::identity();
        rigid.fixed_view_mut::<3, 3>(0, 0).copy_from(&world_to_camera);
        rigid.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        pixel_from_image * perspective * rigid
    }

    /// Continuous (un-quantized) pixel coordinates of `point`.
    pub fn project_perspective(&self, point: &Point3<f64>) -> Result<(f64, f64), ProjectionError> {
        let w = self.projection_matrix() * Vector4::new(point.x, point.y, point.z, 1.0);
        if w.z.is_nan() || w.z <= 0.0 {
            return Err(ProjectionError::BehindCamera);
        }
        Ok((w.x / w.z, w.y / w.z))
    }
}

/// A set of cameras observing a common scene.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>) -> Result<Self, CameraError> {
        if cameras.is_empty() {
            return Err(CameraError::EmptyRig);
        }
        Ok(Self { cameras })
    }

    /// Two identical cameras with parallel optic axes along `+z`, centered at
    /// `(−b/2, 0, 0)` (camera A) and `(+b/2, 0, 0)` (camera B).
    pub fn coplanar(baseline: f64, intrinsics: CameraIntrinsics) -> Result<Self, CameraError> {
        let half = baseline / 2.0;
        let a = CameraPose::at(Point3::new(-half, 0.0, 0.0))?;
        let b = CameraPose::at(Point3::new(half, 0.0, 0.0))?;
        Self::new(vec![Camera::new(intrinsics, a), Camera::new(intrinsics, b)])
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Largest distance between any two perspective centers.
    pub fn baseline(&self) -> f64 {
        let mut widest = 0.0_f64;
        for (i, a) in self.cameras.iter().enumerate() {
            for b in &self.cameras[i + 1..] {
                widest = widest.max((a.pose.center - b.pose.center).norm());
            }
        }
        widest
    }
}
