//! Shows the visibility bootstrap on a pair where half the segments were
//! replaced with unrelated noise in the target. Segments are scored by the
//! best match their pixels find anywhere in the target; segments whose
//! content vanished score low and fall out of the visible set, so the
//! warping losses never chase them.
//!
//! The similarity volume here comes from the frozen semantic features
//! under cosine similarity, standing in for a converged encoder; during
//! training the same machinery runs on the live encoder's cost volume.

use ndarray::s;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use corrflow::config::Config;
use corrflow::core::ImageTensor;
use corrflow::datapipe::synthetic::value_noise_texture;
use corrflow::error::Result;
use corrflow::matching::{normalize_rows, CostVolume};
use corrflow::model::Pipeline;
use corrflow::visibility::{max_similarity_map, segment_scores, select_visible_regions};

fn main() -> Result<()> {
    let mut cfg = Config::default();
    cfg.semantic.channels = 32;
    cfg.segmenter.backend = "grid".into();
    cfg.segmenter.grid_tile = 8;
    let pipe = Pipeline::from_config(&cfg)?;

    let i1 = value_noise_texture(48, 48, 4, 7);
    let segments = pipe.segmenter().segment(&i1)?;

    // destroy a random half of the segments in the target image
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut ids: Vec<usize> = (0..segments.len()).collect();
    ids.shuffle(&mut rng);
    let (replaced, kept) = ids.split_at(segments.len() / 2);
    let mut data = i1.data().clone();
    for &id in replaced {
        let noise = value_noise_texture(48, 48, 1, 5000 + id as u64);
        let mask = segments.mask(id);
        for y in 0..48 {
            for x in 0..48 {
                if mask[[y, x]] {
                    data.slice_mut(s![y, x, ..]).assign(&noise.data().slice(s![y, x, ..]));
                }
            }
        }
    }
    let i2 = ImageTensor::new(data)?;

    let f1 = pipe.semantic().features(&i1)?;
    let f2 = pipe.semantic().features(&i2)?;
    let a = normalize_rows(&f1.as_rows());
    let b = normalize_rows(&f2.as_rows());
    let cost = CostVolume::from_matrix(a.dot(&b.t()), f1.height(), f1.width())?;

    let scores = segment_scores(&max_similarity_map(&cost), &segments)?;
    let vis = select_visible_regions(&segments, &scores, kept.len())?;

    let hits = kept.iter().filter(|id| vis.selected().contains(id)).count();
    println!(
        "{} segments, {} destroyed in the target, top-{} selected as visible",
        segments.len(),
        replaced.len(),
        kept.len()
    );
    println!(
        "recall of truly visible segments: {hits}/{} = {:.2}",
        kept.len(),
        hits as f64 / kept.len() as f64
    );
    let missed: Vec<&usize> = replaced.iter().filter(|id| vis.selected().contains(id)).collect();
    println!("destroyed segments that slipped through: {missed:?}");
    Ok(())
}
