//! Video frame indexing and deterministic pair sampling.
//!
//! Layout: `<root>/<video_id>/<frame_number>.<ext>` plus a `meta` file per
//! video holding the frames-per-second as plain text.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core::ImageTensor;
use crate::error::{Error, Result};

use super::io::load_image;

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone)]
pub struct VideoEntry {
    pub id: String,
    pub fps: f64,
    /// Frame paths in strictly increasing frame-number order.
    pub frames: Vec<PathBuf>,
    pub frame_numbers: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct VideoIndex {
    pub videos: Vec<VideoEntry>,
}

impl VideoIndex {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

fn read_fps(dir: &Path) -> Result<f64> {
    let meta = dir.join("meta");
    let text = std::fs::read_to_string(&meta)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", meta.display())))?;
    let fps: f64 = text
        .trim()
        .parse()
        .map_err(|e| Error::Data(format!("bad fps in {}: {e}", meta.display())))?;
    if !(fps > 0.0) {
        return Err(Error::Data(format!(
            "fps must be positive in {}, got {fps}",
            meta.display()
        )));
    }
    Ok(fps)
}

/// Lists a directory's numbered image frames sorted by frame number.
/// `meta` and `.json` companions pass silently; other non-frame files are
/// skipped with a warning. Duplicate numbers and empty directories error.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.display())))?
    {
        let path = entry
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.display())))?
            .path();
        if !path.is_file()
            || path.file_name().is_some_and(|n| n == "meta")
            || path.extension().is_some_and(|e| e == "json")
        {
            continue;
        }
        let ext_ok = path
            .extension()
            .map(|e| IMAGE_EXTS.contains(&e.to_string_lossy().to_lowercase().as_str()))
            .unwrap_or(false);
        let number = path
            .file_stem()
            .and_then(|s| s.to_string_lossy().parse::<u64>().ok());
        match (ext_ok, number) {
            (true, Some(n)) => numbered.push((n, path)),
            _ => log::warn!("skipping non-frame file {}", path.display()),
        }
    }
    numbered.sort();
    if numbered.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!(
            "duplicate frame numbers in {}",
            dir.display()
        )));
    }
    if numbered.is_empty() {
        return Err(Error::Data(format!("no frames in {}", dir.display())));
    }
    Ok(numbered)
}

/// Scans the dataset root into a deterministic index: videos sorted by id,
/// frames by number. Non-image files are skipped with a warning; videos
/// without frames or without a readable `meta` are collected into one error.
pub fn index_videos(root: &Path) -> Result<VideoIndex> {
    let entries = std::fs::read_dir(root)
        .map_err(|e| Error::Data(format!("cannot read dataset root {}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!(
            "no video directories under {}",
            root.display()
        )));
    }

    let mut videos = Vec::new();
    let mut offenders = Vec::new();
    for dir in dirs {
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let fps = match read_fps(&dir) {
            Ok(f) => f,
            Err(e) => {
                offenders.push(format!("{id}: {e}"));
                continue;
            }
        };
        let numbered = match list_frames(&dir) {
            Ok(n) => n,
            Err(e) => {
                offenders.push(format!("{id}: {e}"));
                continue;
            }
        };
        let (frame_numbers, frames) = numbered.into_iter().unzip();
        videos.push(VideoEntry {
            id,
            fps,
            frames,
            frame_numbers,
        });
    }
    if !offenders.is_empty() {
        return Err(Error::Data(format!(
            "unusable videos: {}",
            offenders.join("; ")
        )));
    }
    Ok(VideoIndex { videos })
}

/// Uniform integer frame gap covering the converted interval inclusively,
/// so both endpoint gaps are achievable.
pub fn sample_frame_gap(
    fps: f64,
    interval_s: (f64, f64),
    rng: &mut impl Rng,
) -> Result<usize> {
    let (lo_s, hi_s) = interval_s;
    if !(lo_s > 0.0 && hi_s >= lo_s) {
        return Err(Error::InvalidArgument(format!(
            "bad interval [{lo_s}, {hi_s}]"
        )));
    }
    let lo = (lo_s * fps).floor().max(1.0) as usize;
    let hi = ((hi_s * fps).floor() as usize).max(lo);
    Ok(rng.random_range(lo..=hi))
}

/// Start and end frame positions for one sampled pair.
pub fn sample_pair_indices(
    video: &VideoEntry,
    interval_s: (f64, f64),
    rng: &mut impl Rng,
) -> Result<(usize, usize)> {
    let gap = sample_frame_gap(video.fps, interval_s, rng)?;
    if video.frames.len() <= gap {
        return Err(Error::Data(format!(
            "video {} has {} frames, too short for a {gap}-frame gap",
            video.id,
            video.frames.len()
        )));
    }
    let start = rng.random_range(0..video.frames.len() - gap);
    Ok((start, start + gap))
}

/// Loads one temporally separated frame pair from a video.
pub fn sample_pair(
    video: &VideoEntry,
    interval_s: (f64, f64),
    rng: &mut impl Rng,
) -> Result<(ImageTensor, ImageTensor)> {
    let (a, b) = sample_pair_indices(video, interval_s, rng)?;
    Ok((load_image(&video.frames[a])?, load_image(&video.frames[b])?))
}

/// Axis-aligned crop with bounds checking.
pub fn crop_image(img: &ImageTensor, y0: usize, x0: usize, size: usize) -> Result<ImageTensor> {
    if y0 + size > img.height() || x0 + size > img.width() {
        return Err(Error::InvalidArgument(format!(
            "crop {size} at ({x0}, {y0}) leaves a {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let mut out = Array3::zeros((size, size, 3));
    out.assign(&img.data().slice(ndarray::s![y0..y0 + size, x0..x0 + size, ..]));
    ImageTensor::new(out)
}

/// Square crops of both frames. Offsets are drawn independently per frame
/// unless `shared` is set; the crop size must be stride-aligned.
pub fn random_crop_pair(
    i1: &ImageTensor,
    i2: &ImageTensor,
    size: usize,
    shared: bool,
    rng: &mut impl Rng,
) -> Result<(ImageTensor, ImageTensor)> {
    if size == 0 || size % crate::core::FEATURE_STRIDE != 0 {
        return Err(Error::InvalidArgument(format!(
            "crop size {size} is not a positive multiple of {}",
            crate::core::FEATURE_STRIDE
        )));
    }
    if size > i1.height().min(i1.width()) || size > i2.height().min(i2.width()) {
        return Err(Error::InvalidArgument(format!(
            "crop size {size} exceeds frame sizes {}x{} / {}x{}",
            i1.height(),
            i1.width(),
            i2.height(),
            i2.width()
        )));
    }
    let draw = |img: &ImageTensor, rng: &mut dyn rand::RngCore| {
        let y = rng.random_range(0..=img.height() - size);
        let x = rng.random_range(0..=img.width() - size);
        (y, x)
    };
    let (y1, x1) = draw(i1, rng);
    let (y2, x2) = if shared { (y1, x1) } else { draw(i2, rng) };
    Ok((crop_image(i1, y1, x1, size)?, crop_image(i2, y2, x2, size)?))
}

/// One deterministic training pair for (seed, step): pick a video, sample a
/// temporal pair, resize the shorter side, and crop. Videos too short for
/// the interval are skipped; an error is returned only if every video is.
pub fn sample_training_pair(
    index: &VideoIndex,
    interval_s: (f64, f64),
    resize_short: usize,
    crop: usize,
    shared_offsets: bool,
    seed: u64,
    step: u64,
) -> Result<(ImageTensor, ImageTensor)> {
    if index.is_empty() {
        return Err(Error::Data("empty video index".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step),
    );
    for _ in 0..index.len().max(8) {
        let video = &index.videos[rng.random_range(0..index.len())];
        let pair = match sample_pair(video, interval_s, &mut rng) {
            Ok(p) => p,
            Err(Error::Data(_)) => continue,
            Err(e) => return Err(e),
        };
        let i1 = super::io::resize_shorter_side(&pair.0, resize_short)?;
        let i2 = super::io::resize_shorter_side(&pair.1, resize_short)?;
        return random_crop_pair(&i1, &i2, crop, shared_offsets, &mut rng);
    }
    Err(Error::Data(
        "no video long enough for the configured interval".into(),
    ))
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::super::io::save_image;
    use super::*;

    fn flat_image(h: usize, w: usize, v: f64) -> ImageTensor {
        ImageTensor::new(Array3::from_elem((h, w, 3), v)).unwrap()
    }

    fn write_video(root: &Path, id: &str, frames: usize, fps: f64) {
        let dir = root.join(id);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("meta"), format!("{fps}\n")).unwrap();
        for i in 0..frames {
            let img = flat_image(16, 16, i as f64 / frames as f64);
            save_image(&dir.join(format!("{i}.png")), &img).unwrap();
        }
    }

    #[test]
    fn indexing_is_sorted_and_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        write_video(tmp.path(), "vid_b", 4, 30.0);
        write_video(tmp.path(), "vid_a", 3, 24.0);
        fs::write(tmp.path().join("vid_a/notes.txt"), "stray").unwrap();
        let idx1 = index_videos(tmp.path()).unwrap();
        let idx2 = index_videos(tmp.path()).unwrap();
        assert_eq!(idx1.len(), 2);
        assert_eq!(idx1.videos[0].id, "vid_a");
        assert_eq!(idx1.videos[0].frames.len(), 3);
        assert_eq!(idx1.videos[0].fps, 24.0);
        assert_eq!(idx1.videos[1].id, "vid_b");
        assert_eq!(
            idx1.videos[1].frame_numbers,
            vec![0, 1, 2, 3],
            "frames sorted by number"
        );
        assert_eq!(format!("{idx1:?}"), format!("{idx2:?}"));
    }

    #[test]
    fn missing_meta_and_empty_videos_are_reported_together() {
        let tmp = tempfile::tempdir().unwrap();
        write_video(tmp.path(), "good", 3, 30.0);
        fs::create_dir_all(tmp.path().join("no_meta")).unwrap();
        save_image(
            &tmp.path().join("no_meta/0.png"),
            &flat_image(8, 8, 0.5),
        )
        .unwrap();
        let dir = tmp.path().join("no_frames");
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("meta"), "30\n").unwrap();
        let err = index_videos(tmp.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no_meta"), "{msg}");
        assert!(msg.contains("no_frames"), "{msg}");
    }

    #[test]
    fn frame_gaps_cover_the_converted_interval_inclusively() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..10_000 {
            let g = sample_frame_gap(30.0, (1.0, 3.0), &mut rng).unwrap();
            assert!((30..=90).contains(&g), "gap {g} out of [30, 90]");
            seen.insert(g);
        }
        assert!(seen.contains(&30), "minimum gap never sampled");
        assert!(seen.contains(&90), "maximum gap never sampled");
        assert_eq!(seen.len(), 61, "all gaps reachable");
    }

    #[test]
    fn too_short_video_is_a_data_error() {
        let video = VideoEntry {
            id: "short".into(),
            fps: 30.0,
            frames: vec![PathBuf::new(); 10],
            frame_numbers: (0..10).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_pair_indices(&video, (1.0, 3.0), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn pair_sampling_is_seed_reproducible() {
        let video = VideoEntry {
            id: "v".into(),
            fps: 10.0,
            frames: vec![PathBuf::new(); 200],
            frame_numbers: (0..200).collect(),
        };
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_pair_indices(&video, (1.0, 3.0), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8), "different seeds change the sequence");
        for (a, b) in draw(7) {
            assert!((10..=30).contains(&(b - a)));
        }
    }

    #[test]
    fn crop_pair_shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Array3::zeros((40, 48, 3));
        d.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let img = ImageTensor::new(d).unwrap();

        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = random_crop_pair(&img, &img, 16, false, &mut r1).unwrap();
        assert_eq!((a.height(), a.width()), (16, 16));
        assert_eq!((b.height(), b.width()), (16, 16));
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let (a2, b2) = random_crop_pair(&img, &img, 16, false, &mut r2).unwrap();
        assert_eq!(a.data(), a2.data());
        assert_eq!(b.data(), b2.data());
        assert_ne!(a.data(), b.data(), "independent offsets differ");

        let mut r3 = ChaCha8Rng::seed_from_u64(5);
        let (s1, s2) = random_crop_pair(&img, &img, 16, true, &mut r3).unwrap();
        assert_eq!(s1.data(), s2.data(), "shared offsets crop the same region");
    }

    #[test]
    fn identity_crop_and_size_validation() {
        let img = flat_image(16, 16, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, _) = random_crop_pair(&img, &img, 16, false, &mut rng).unwrap();
        assert_eq!(a.data(), img.data());
        assert!(random_crop_pair(&img, &img, 24, false, &mut rng).is_err());
        assert!(random_crop_pair(&img, &img, 12, false, &mut rng).is_err());
    }

    #[test]
    fn training_pair_sampler_is_deterministic_and_skips_short_videos() {
        let tmp = tempfile::tempdir().unwrap();
        write_video(tmp.path(), "long", 30, 5.0);
        write_video(tmp.path(), "short", 3, 30.0);
        let idx = index_videos(tmp.path()).unwrap();
        let (a1, b1) =
            sample_training_pair(&idx, (1.0, 3.0), 24, 16, false, 9, 0).unwrap();
        let (a2, b2) =
            sample_training_pair(&idx, (1.0, 3.0), 24, 16, false, 9, 0).unwrap();
        assert_eq!(a1.data(), a2.data());
        assert_eq!(b1.data(), b2.data());
        assert_eq!((a1.height(), a1.width()), (16, 16));
    }
}
