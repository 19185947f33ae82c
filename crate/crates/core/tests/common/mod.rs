#![allow(dead_code)]

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use quantvol::camera::{Camera, CameraIntrinsics, CameraPose, CameraRig, PixelId};

/// Independent pinhole projection with floor quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OraclePixel {
    Seen(PixelId),
    Hidden,
    /// Within `TIE` of a pixel edge; assignment depends on the tie rule.
    Tie,
}

pub const TIE: f64 = 1e-9;

fn quantize(coord: f64, n: u32) -> Option<Result<u32, ()>> {
    let nearest = coord.round();
    if (coord - nearest).abs() <= TIE * coord.abs().max(1.0) {
        return Some(Err(()));
    }
    let cell = coord.floor();
    if cell < 0.0 || cell >= f64::from(n) {
        None
    } else {
        Some(Ok(cell as u32))
    }
}

pub fn oracle_pixel(cam: &Camera, p: &Point3<f64>) -> OraclePixel {
    let intr = cam.intrinsics();
    let r: Matrix3<f64> = *cam.pose().rotation();
    let local = r.transpose() * (p - cam.pose().center());
    if local.z <= 0.0 {
        return OraclePixel::Hidden;
    }
    let (u0, v0) = intr.principal_point();
    let s = intr.focal_length() / intr.pixel_size();
    let u = u0 + s * local.x / local.z;
    let v = v0 + s * local.y / local.z;
    let n = intr.pixel_count();
    match (quantize(u, n), quantize(v, n)) {
        (Some(Err(())), _) | (_, Some(Err(()))) => OraclePixel::Tie,
        (Some(Ok(u)), Some(Ok(v))) => OraclePixel::Seen(PixelId::new(u, v)),
        _ => OraclePixel::Hidden,
    }
}

/// Joint oracle: `Ok(Some(pixels))` when every camera sees the point, `Ok(None)`
/// when some camera misses it, `Err(())` on a tie.
pub fn oracle_tuple(rig: &CameraRig, p: &Point3<f64>) -> Result<Option<Vec<PixelId>>, ()> {
    let mut pixels = Vec::new();
    let mut hidden = false;
    for cam in rig.cameras() {
        match oracle_pixel(cam, p) {
            OraclePixel::Tie => return Err(()),
            OraclePixel::Hidden => hidden = true,
            OraclePixel::Seen(px) => pixels.push(px),
        }
    }
    Ok(if hidden { None } else { Some(pixels) })
}

pub fn toy_intrinsics(n: u32) -> CameraIntrinsics {
    CameraIntrinsics::new(1.0, 0.1, n).unwrap()
}

/// Two parallel cameras one meter apart.
pub fn toy_pair(n: u32) -> CameraRig {
    CameraRig::coplanar(1.0, toy_intrinsics(n)).unwrap()
}

/// Three cameras verged toward a point 3 m in front of the origin, one rolled.
pub fn toy_verged(n: u32) -> CameraRig {
    let look = Point3::new(0.0, 0.0, 3.0);
    let centers = [Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.2, 0.0), Point3::new(0.1, 1.0, -0.5)];
    let cams = centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let forward = (look - c).normalize();
            let up = if i == 2 { Vector3::new(1.0, 0.3, 0.0) } else { Vector3::y() };
            let x = up.cross(&forward).normalize();
            let y = forward.cross(&x);
            let rot = Matrix3::from_columns(&[x, y, forward]);
            let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.1 * i as f64);
            Camera::new(toy_intrinsics(n), CameraPose::new(*c, rot * roll.matrix()).unwrap())
        })
        .collect();
    CameraRig::new(cams).unwrap()
}

pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}
