//! Evaluation annotation loading: point tracks and articulated pairs.

use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::core::{CameraIntrinsics, ImageTensor};
use crate::error::{Error, Result};

use super::io::{load_depth_meters, load_image, save_depth_meters, save_image};

/// One tracked query point: ground-truth coordinates and a visibility flag
/// per frame, plus the frame where it first becomes visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub first_frame: usize,
    pub coords: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

/// Point-track ground truth for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackAnnotation {
    pub width: usize,
    pub height: usize,
    pub points: Vec<TrackPoint>,
}

impl TrackAnnotation {
    pub fn num_frames(&self) -> Option<usize> {
        self.points.first().map(|p| p.coords.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Data("frame size must be positive".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.coords.len() != p.visible.len() {
                return Err(Error::Data(format!(
                    "points[{i}]: coords length {} != visible length {}",
                    p.coords.len(),
                    p.visible.len()
                )));
            }
            if p.coords.is_empty() {
                return Err(Error::Data(format!("points[{i}]: no frames")));
            }
            if p.coords.len() != self.points[0].coords.len() {
                return Err(Error::Data(format!(
                    "points[{i}] covers {} frames, points[0] covers {}",
                    p.coords.len(),
                    self.points[0].coords.len()
                )));
            }
            let any_visible = p.visible.iter().any(|&v| v);
            if any_visible {
                if p.first_frame >= p.visible.len() {
                    return Err(Error::Data(format!(
                        "points[{i}].first_frame {} out of range {}",
                        p.first_frame,
                        p.visible.len()
                    )));
                }
                if !p.visible[p.first_frame] {
                    return Err(Error::Data(format!(
                        "points[{i}].first_frame {} is not visible",
                        p.first_frame
                    )));
                }
                if p.visible[..p.first_frame].iter().any(|&v| v) {
                    return Err(Error::Data(format!(
                        "points[{i}]: visible before first_frame {}",
                        p.first_frame
                    )));
                }
            }
            for (t, (&[x, y], &vis)) in p.coords.iter().zip(&p.visible).enumerate() {
                if vis
                    && !(x >= 0.0
                        && x < self.width as f64
                        && y >= 0.0
                        && y < self.height as f64)
                {
                    return Err(Error::Data(format!(
                        "points[{i}].coords[{t}]: ({x}, {y}) outside {}x{}",
                        self.width, self.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates one video's point tracks.
pub fn load_track_annotations(path: &Path) -> Result<TrackAnnotation> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let ann: TrackAnnotation = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    ann.validate()?;
    Ok(ann)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MotionFile {
    axis: [f64; 3],
    pivot: [f64; 3],
    angle_deg: f64,
}

/// One articulated-object evaluation instance: an RGB-D frame pair with the
/// moving-part mask and the ground-truth revolute motion between the frames.
#[derive(Debug, Clone)]
pub struct ArticulatedPairAnnotation {
    pub rgb: [ImageTensor; 2],
    /// Meters; 0 marks invalid pixels.
    pub depth: [Array2<f64>; 2],
    pub intrinsics: CameraIntrinsics,
    pub part_mask: Array2<bool>,
    /// Unit direction of the rotation axis.
    pub gt_axis: [f64; 3],
    /// A point on the rotation axis, meters.
    pub gt_pivot: [f64; 3],
    /// Signed rotation angle from frame 0 to frame 1, degrees.
    pub gt_angle_deg: f64,
}

/// Writes an instance directory in the layout `load_articulated_pair`
/// reads. Depth quantizes to millimeters and images to 8-bit, so a round
/// trip is exact only for values on those grids.
pub fn save_articulated_pair(inst: &ArticulatedPairAnnotation, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))?;
    save_image(&dir.join("rgb_0.png"), &inst.rgb[0])?;
    save_image(&dir.join("rgb_1.png"), &inst.rgb[1])?;
    save_depth_meters(&dir.join("depth_0.png"), &inst.depth[0])?;
    save_depth_meters(&dir.join("depth_1.png"), &inst.depth[1])?;
    let mask = ImageTensor::new(Array3::from_shape_fn(
        (inst.part_mask.dim().0, inst.part_mask.dim().1, 3),
        |(y, x, _)| if inst.part_mask[[y, x]] { 1.0 } else { 0.0 },
    ))?;
    save_image(&dir.join("mask.png"), &mask)?;
    let write_json = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
    };
    let intrinsics = serde_json::to_string(&inst.intrinsics)
        .map_err(|e| Error::Data(format!("intrinsics: {e}")))?;
    write_json("intrinsics.json", intrinsics)?;
    let motion = serde_json::to_string(&MotionFile {
        axis: inst.gt_axis,
        pivot: inst.gt_pivot,
        angle_deg: inst.gt_angle_deg,
    })
    .map_err(|e| Error::Data(format!("motion: {e}")))?;
    write_json("motion.json", motion)
}

/// Loads one instance directory: `rgb_0/1.png`, `depth_0/1.png` (16-bit
/// millimeters), `mask.png` (nonzero marks the moving part),
/// `intrinsics.json`, and `motion.json`.
pub fn load_articulated_pair(dir: &Path) -> Result<ArticulatedPairAnnotation> {
    let rgb = [
        load_image(&dir.join("rgb_0.png"))?,
        load_image(&dir.join("rgb_1.png"))?,
    ];
    let depth = [
        load_depth_meters(&dir.join("depth_0.png"))?,
        load_depth_meters(&dir.join("depth_1.png"))?,
    ];
    let mask_img = load_image(&dir.join("mask.png"))?;
    let part_mask = Array2::from_shape_fn(
        (mask_img.height(), mask_img.width()),
        |(y, x)| mask_img.data()[[y, x, 0]] > 0.0,
    );

    let intr_path = dir.join("intrinsics.json");
    let text = std::fs::read_to_string(&intr_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", intr_path.display())))?;
    let intrinsics: CameraIntrinsics = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", intr_path.display())))?;
    intrinsics.validate()?;

    let motion_path = dir.join("motion.json");
    let text = std::fs::read_to_string(&motion_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", motion_path.display())))?;
    let motion: MotionFile = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", motion_path.display())))?;
    let norm = motion.axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-3 {
        return Err(Error::Data(format!(
            "{}: axis norm {norm} is not 1",
            motion_path.display()
        )));
    }

    let shape = (rgb[0].height(), rgb[0].width());
    for (name, dim) in [
        ("rgb_1", (rgb[1].height(), rgb[1].width())),
        ("depth_0", depth[0].dim()),
        ("depth_1", depth[1].dim()),
        ("mask", part_mask.dim()),
    ] {
        if dim != shape {
            return Err(Error::Data(format!(
                "{name} raster {}x{} does not match rgb_0 {}x{}",
                dim.0, dim.1, shape.0, shape.1
            )));
        }
    }

    Ok(ArticulatedPairAnnotation {
        rgb,
        depth,
        intrinsics,
        part_mask,
        gt_axis: motion.axis,
        gt_pivot: motion.pivot,
        gt_angle_deg: motion.angle_deg,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::Array3;

    use super::super::io::save_image;
    use super::*;

    fn sample_annotation() -> TrackAnnotation {
        TrackAnnotation {
            width: 64,
            height: 48,
            points: vec![
                TrackPoint {
                    first_frame: 1,
                    coords: vec![[0.0, 0.0], [10.0, 20.0], [11.0, 21.0]],
                    visible: vec![false, true, true],
                },
                TrackPoint {
                    first_frame: 0,
                    coords: vec![[5.0, 5.0], [6.0, 6.0], [7.0, 7.0]],
                    visible: vec![true, true, false],
                },
            ],
        }
    }

    #[test]
    fn track_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tracks.json");
        let ann = sample_annotation();
        std::fs::write(&path, serde_json::to_string_pretty(&ann).unwrap()).unwrap();
        let back = load_track_annotations(&path).unwrap();
        assert_eq!(ann, back);
    }

    #[test]
    fn schema_violations_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tracks.json");
        let mut ann = sample_annotation();
        ann.points[1].visible.pop();
        std::fs::write(&path, serde_json::to_string(&ann).unwrap()).unwrap();
        let msg = load_track_annotations(&path).unwrap_err().to_string();
        assert!(msg.contains("points[1]"), "{msg}");

        let mut ann = sample_annotation();
        ann.points[0].coords[1] = [100.0, 20.0];
        std::fs::write(&path, serde_json::to_string(&ann).unwrap()).unwrap();
        let msg = load_track_annotations(&path).unwrap_err().to_string();
        assert!(msg.contains("points[0].coords[1]"), "{msg}");

        let mut ann = sample_annotation();
        ann.points[0].first_frame = 2;
        std::fs::write(&path, serde_json::to_string(&ann).unwrap()).unwrap();
        let msg = load_track_annotations(&path).unwrap_err().to_string();
        assert!(msg.contains("visible before first_frame"), "{msg}");
    }

    #[test]
    fn fully_occluded_point_passes_validation() {
        // The evaluator excludes such points; loading keeps them.
        let ann = TrackAnnotation {
            width: 8,
            height: 8,
            points: vec![TrackPoint {
                first_frame: 0,
                coords: vec![[1.0, 1.0], [2.0, 2.0]],
                visible: vec![false, false],
            }],
        };
        ann.validate().unwrap();
    }

    fn write_instance(dir: &Path, intrinsics: &str, motion: &str) {
        let img = ImageTensor::new(Array3::from_elem((8, 8, 3), 0.5)).unwrap();
        save_image(&dir.join("rgb_0.png"), &img).unwrap();
        save_image(&dir.join("rgb_1.png"), &img).unwrap();
        let mut depth = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(8, 8);
        depth.pixels_mut().for_each(|p| p.0[0] = 2000);
        depth.save(dir.join("depth_0.png")).unwrap();
        depth.save(dir.join("depth_1.png")).unwrap();
        let mut mask = image::GrayImage::new(8, 8);
        mask.pixels_mut().for_each(|p| p.0[0] = 255);
        mask.save(dir.join("mask.png")).unwrap();
        std::fs::write(dir.join("intrinsics.json"), intrinsics).unwrap();
        std::fs::write(dir.join("motion.json"), motion).unwrap();
    }

    #[test]
    fn articulated_instance_loads_and_converts_depth() {
        let tmp = tempfile::tempdir().unwrap();
        write_instance(
            tmp.path(),
            r#"{"fx": 100.0, "fy": 100.0, "cx": 4.0, "cy": 4.0}"#,
            r#"{"axis": [0.0, 0.0, 1.0], "pivot": [0.1, 0.2, 0.3], "angle_deg": 30.0}"#,
        );
        let ann = load_articulated_pair(tmp.path()).unwrap();
        assert_eq!(ann.depth[0][[3, 3]], 2.0);
        assert!(ann.part_mask[[0, 0]]);
        assert_eq!(ann.gt_angle_deg, 30.0);
        assert_eq!(ann.gt_axis, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn bad_intrinsics_and_bad_axis_are_data_errors() {
        let tmp = tempfile::tempdir().unwrap();
        write_instance(
            tmp.path(),
            r#"{"fx": -1.0, "fy": 100.0, "cx": 4.0, "cy": 4.0}"#,
            r#"{"axis": [0.0, 0.0, 1.0], "pivot": [0.0, 0.0, 0.0], "angle_deg": 10.0}"#,
        );
        let err = load_articulated_pair(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("focal"), "{err}");

        let tmp = tempfile::tempdir().unwrap();
        write_instance(
            tmp.path(),
            r#"{"fx": 100.0, "fy": 100.0, "cx": 4.0, "cy": 4.0}"#,
            r#"{"axis": [0.0, 0.0, 2.0], "pivot": [0.0, 0.0, 0.0], "angle_deg": 10.0}"#,
        );
        let err = load_articulated_pair(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("axis norm"), "{err}");
    }
}
