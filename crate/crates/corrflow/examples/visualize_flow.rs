//! Renders the three visual diagnostics: a side-by-side correspondence
//! overlay, a flow color wheel, and a PCA projection of the encoder's
//! feature grids. Writes PNGs into the output directory, default
//! `target/example-out/visualize_flow`.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use corrflow::config::Config;
use corrflow::core::{FlowField, FlowResolution, FEATURE_STRIDE};
use corrflow::datapipe::save_image;
use corrflow::datapipe::synthetic::{random_translated_pair, value_noise_texture};
use corrflow::error::Result;
use corrflow::model::Pipeline;
use corrflow::viz::{correspondence_overlay, flow_color_wheel, pca_feature_panel};

fn main() -> Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-out/visualize_flow".into())
        .into();
    std::fs::create_dir_all(&out)?;

    let tex = value_noise_texture(96, 96, 5, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pair = random_translated_pair(&tex, 64, 6, &mut rng)?;
    let (h, w) = (pair.i1.height(), pair.i1.width());

    let mut data = ndarray::Array3::zeros((h, w, 2));
    data.slice_mut(ndarray::s![.., .., 0]).fill(pair.flow.0);
    data.slice_mut(ndarray::s![.., .., 1]).fill(pair.flow.1);
    let truth = FlowField::new(data, FlowResolution::Full)?;

    save_image(&out.join("overlay.png"), &correspondence_overlay(&pair.i1, &pair.i2, &truth, 8)?)?;
    save_image(&out.join("wheel_truth.png"), &flow_color_wheel(&truth)?)?;

    let mut cfg = Config::default();
    cfg.encoder.channels = 8;
    cfg.encoder.blocks = 1;
    cfg.semantic.channels = 16;
    cfg.segmenter.backend = "grid".into();
    cfg.matching.candidate_fraction = 1.0;
    let pipe = Pipeline::from_config(&cfg)?;
    let pred = pipe.predict_flow(&pair.i1, &pair.i2)?;
    save_image(&out.join("wheel_untrained.png"), &flow_color_wheel(&pred.full)?)?;

    let (f1, f2) = pipe.encoder().encode_pair(&pair.i1, &pair.i2)?;
    let panel = pca_feature_panel(
        &f1.as_rows(),
        &f2.as_rows(),
        (f1.height(), f1.width()),
        FEATURE_STRIDE,
    )?;
    save_image(&out.join("features_pca.png"), &panel)?;

    println!(
        "ground-truth shift ({:.0}, {:.0}) px; wrote 4 panels under {}",
        pair.flow.0,
        pair.flow.1,
        out.display()
    );
    Ok(())
}
