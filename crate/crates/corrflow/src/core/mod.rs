//! Geometric primitives and domain types used by every other module:
//! pixel grids, bilinear sampling, flow warping and upsampling, pinhole
//! back-projection, and flow file I/O.
//!
//! All operations here are pure functions of their inputs and safe to call
//! from concurrent contexts.

mod camera;
mod flow_io;
mod sample;
mod types;

pub use camera::{backproject, project, scale_intrinsics};
pub use flow_io::{read_flow, storage_roundtrip, write_flow};
pub use sample::{bilinear_sample, bilinear_sample_point, upsample_flow, warp_by_flow, warp_image};
pub use types::{
    make_pixel_grid, CameraIntrinsics, FeatureMap, FlowField, FlowResolution, ImageTensor,
    PixelGrid, Point2D, Point3D, FEATURE_STRIDE,
};

pub(crate) use sample::{resolve_sample_point, sample_channels, upsample_source_coord};
