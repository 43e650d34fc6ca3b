//! Domain types shared across the pipeline.
//!
//! Coordinate convention: `(x, y)` with `x` rightward and `y` downward,
//! cell centers at integer coordinates. Flow values are stored in the
//! pixels of their own raster; upsampling to full resolution multiplies
//! displacements by the feature stride.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Full-resolution pixels per feature cell for every encoder in the crate.
pub const FEATURE_STRIDE: usize = 8;

/// An RGB image with values in `[0, 1]`, laid out `H x W x 3`.
#[derive(Debug, Clone)]
pub struct ImageTensor {
    data: Array3<f64>,
}

impl ImageTensor {
    /// Wraps a raster after validating shape and finiteness.
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {h}x{w}"
            )));
        }
        if c != 3 {
            return Err(Error::InvalidArgument(format!(
                "image must have 3 channels, got {c}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Computation("image contains non-finite values".into()));
        }
        Ok(Self { data })
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// True when both dimensions are divisible by the feature stride.
    pub fn stride_aligned(&self) -> bool {
        self.height() % FEATURE_STRIDE == 0 && self.width() % FEATURE_STRIDE == 0
    }
}

/// A dense feature raster `h x w x c` at a fixed stride below full resolution.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    data: Array3<f64>,
    stride: usize,
}

impl FeatureMap {
    pub fn new(data: Array3<f64>, stride: usize) -> Result<Self> {
        let (h, w, _) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument("empty feature map".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Computation(
                "feature map contains non-finite values".into(),
            ));
        }
        Ok(Self { data, stride })
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Features flattened row-major to `(h*w) x c`.
    pub fn as_rows(&self) -> Array2<f64> {
        let (h, w, c) = self.data.dim();
        self.data
            .to_shape((h * w, c))
            .expect("contiguous row-major feature map")
            .to_owned()
    }
}

/// Which raster a flow field's displacements live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowResolution {
    /// Displacements in feature-grid cells.
    Feature,
    /// Displacements in full-image pixels.
    Full,
}

/// Per-pixel 2D displacement raster `h x w x 2`, `(dx, dy)` per cell.
#[derive(Debug, Clone)]
pub struct FlowField {
    data: Array3<f64>,
    resolution: FlowResolution,
}

impl FlowField {
    pub fn new(data: Array3<f64>, resolution: FlowResolution) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 || c != 2 {
            return Err(Error::InvalidArgument(format!(
                "flow field must be h x w x 2 with positive dims, got {h}x{w}x{c}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Computation("flow contains non-finite values".into()));
        }
        Ok(Self { data, resolution })
    }

    pub fn zeros(h: usize, w: usize, resolution: FlowResolution) -> Self {
        Self {
            data: Array3::zeros((h, w, 2)),
            resolution,
        }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn resolution(&self) -> FlowResolution {
        self.resolution
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Displacement at a cell as `(dx, dy)`.
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        (self.data[[y, x, 0]], self.data[[y, x, 1]])
    }

    /// Row-major `(h*w) x 2` view of the displacements.
    pub fn as_rows(&self) -> Array2<f64> {
        let (h, w, _) = self.data.dim();
        self.data
            .to_shape((h * w, 2))
            .expect("contiguous flow")
            .to_owned()
    }

    /// Mean Euclidean displacement magnitude over all cells.
    pub fn mean_magnitude(&self) -> f64 {
        let (h, w, _) = self.data.dim();
        let mut acc = 0.0;
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = self.at(y, x);
                acc += (dx * dx + dy * dy).sqrt();
            }
        }
        acc / (h * w) as f64
    }
}

/// Raster of integer cell coordinates, `coords[y][x] = (x, y)`.
#[derive(Debug, Clone)]
pub struct PixelGrid {
    coords: Array3<f64>,
}

impl PixelGrid {
    pub fn height(&self) -> usize {
        self.coords.dim().0
    }

    pub fn width(&self) -> usize {
        self.coords.dim().1
    }

    pub fn coords(&self) -> &Array3<f64> {
        &self.coords
    }

    /// Coordinates flattened row-major to `(h*w) x 2`.
    pub fn as_rows(&self) -> Array2<f64> {
        let (h, w, _) = self.coords.dim();
        self.coords
            .to_shape((h * w, 2))
            .expect("contiguous grid")
            .to_owned()
    }
}

/// Builds the coordinate grid for an `h x w` raster.
pub fn make_pixel_grid(h: usize, w: usize) -> Result<PixelGrid> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {h}x{w}"
        )));
    }
    let mut coords = Array3::zeros((h, w, 2));
    for y in 0..h {
        for x in 0..w {
            coords[[y, x, 0]] = x as f64;
            coords[[y, x, 1]] = y as f64;
        }
    }
    Ok(PixelGrid { coords })
}

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Data(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if ![self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Data("non-finite camera intrinsics".into()));
        }
        Ok(())
    }
}

/// A 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A 3D point in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3D) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_grid_single_cell() {
        let g = make_pixel_grid(1, 1).unwrap();
        assert_eq!(g.coords()[[0, 0, 0]], 0.0);
        assert_eq!(g.coords()[[0, 0, 1]], 0.0);
    }

    #[test]
    fn pixel_grid_two_by_two() {
        let g = make_pixel_grid(2, 2).unwrap();
        // coords[y][x] = (x, y)
        assert_eq!((g.coords()[[0, 1, 0]], g.coords()[[0, 1, 1]]), (1.0, 0.0));
        assert_eq!((g.coords()[[1, 0, 0]], g.coords()[[1, 0, 1]]), (0.0, 1.0));
        assert_eq!((g.coords()[[1, 1, 0]], g.coords()[[1, 1, 1]]), (1.0, 1.0));
    }

    #[test]
    fn pixel_grid_rectangular() {
        let g = make_pixel_grid(3, 5).unwrap();
        assert_eq!((g.coords()[[2, 4, 0]], g.coords()[[2, 4, 1]]), (4.0, 2.0));
    }

    #[test]
    fn pixel_grid_rejects_zero_dims() {
        assert!(matches!(
            make_pixel_grid(0, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            make_pixel_grid(4, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn image_tensor_validates_channels() {
        let bad = Array3::<f64>::zeros((4, 4, 1));
        assert!(ImageTensor::new(bad).is_err());
        let nan = {
            let mut a = Array3::<f64>::zeros((4, 4, 3));
            a[[0, 0, 0]] = f64::NAN;
            a
        };
        assert!(matches!(ImageTensor::new(nan), Err(Error::Computation(_))));
    }

    #[test]
    fn intrinsics_validation() {
        let bad = CameraIntrinsics {
            fx: -1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
        };
        assert!(matches!(bad.validate(), Err(Error::Data(_))));
    }
}
