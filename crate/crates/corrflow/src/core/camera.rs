//! Pinhole back-projection and projection.

use crate::core::types::{CameraIntrinsics, Point2D, Point3D};
use crate::error::{Error, Result};

/// Back-projects a pixel with a metric depth through inverse pinhole
/// intrinsics: `((u - cx) * d / fx, (v - cy) * d / fy, d)`.
pub fn backproject(pixel: Point2D, depth: f64, k: &CameraIntrinsics) -> Result<Point3D> {
    k.validate()?;
    if !(depth > 0.0) {
        return Err(Error::Data(format!("depth must be positive, got {depth}")));
    }
    Ok(Point3D::new(
        (pixel.x - k.cx) * depth / k.fx,
        (pixel.y - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Intrinsics for the same camera after resizing the raster by `(sx, sy)`,
/// consistent with the center-aligned resize mapping
/// `u' = (u + 0.5) * s - 0.5`.
pub fn scale_intrinsics(k: &CameraIntrinsics, sx: f64, sy: f64) -> Result<CameraIntrinsics> {
    if !(sx > 0.0 && sy > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale factors must be positive, got ({sx}, {sy})"
        )));
    }
    let out = CameraIntrinsics {
        fx: k.fx * sx,
        fy: k.fy * sy,
        cx: (k.cx + 0.5) * sx - 0.5,
        cy: (k.cy + 0.5) * sy - 0.5,
    };
    out.validate()?;
    Ok(out)
}

/// Projects a 3D point in front of the camera onto the image plane.
pub fn project(point: Point3D, k: &CameraIntrinsics) -> Result<Point2D> {
    k.validate()?;
    if !(point.z > 0.0) {
        return Err(Error::Data(format!(
            "point must be in front of the camera, z={}",
            point.z
        )));
    }
    Ok(Point2D::new(
        point.x * k.fx / point.z + k.cx,
        point.y * k.fy / point.z + k.cy,
    ))
}
