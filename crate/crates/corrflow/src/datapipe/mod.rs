//! Dataset plumbing: video frame indexing, temporal pair sampling, crop
//! augmentation, raster I/O, and annotation loading for the evaluators.

mod annotations;
mod index;
mod io;
pub mod synthetic;

pub use annotations::{
    load_articulated_pair, load_track_annotations, save_articulated_pair,
    ArticulatedPairAnnotation, TrackAnnotation, TrackPoint,
};
pub use index::{
    crop_image, index_videos, list_frames, random_crop_pair, sample_frame_gap, sample_pair,
    sample_pair_indices, sample_training_pair, VideoEntry, VideoIndex,
};
pub use io::{
    load_depth_meters, load_image, resize_image, resize_nearest, resize_shorter_side,
    save_depth_meters, save_image,
};
