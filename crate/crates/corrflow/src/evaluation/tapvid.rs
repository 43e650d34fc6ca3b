//! Point-tracking metrics: average distance, threshold accuracy, jaccard.

use crate::core::{bilinear_sample_point, FlowField, FlowResolution, Point2D};
use crate::datapipe::TrackAnnotation;
use crate::error::{Error, Result};

/// Pixel-error thresholds shared by the threshold-accuracy and jaccard scores.
pub const THRESHOLDS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Query points in a source frame with their predicted target positions,
/// optionally paired with ground-truth targets and visibility flags.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    pub queries: Vec<Point2D>,
    pub predictions: Vec<Point2D>,
    pub gt_targets: Option<Vec<Point2D>>,
    pub gt_visible: Option<Vec<bool>>,
}

impl CorrespondenceSet {
    /// A set without ground truth, as produced by inference alone.
    pub fn predicted(queries: Vec<Point2D>, predictions: Vec<Point2D>) -> Result<Self> {
        let set = Self { queries, predictions, gt_targets: None, gt_visible: None };
        set.validate()?;
        Ok(set)
    }

    /// A set carrying ground-truth targets and per-point visibility.
    pub fn with_ground_truth(
        queries: Vec<Point2D>,
        predictions: Vec<Point2D>,
        gt_targets: Vec<Point2D>,
        gt_visible: Vec<bool>,
    ) -> Result<Self> {
        let set = Self {
            queries,
            predictions,
            gt_targets: Some(gt_targets),
            gt_visible: Some(gt_visible),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.queries.len();
        if n == 0 {
            return Err(Error::Data("correspondence set has no points".into()));
        }
        if self.predictions.len() != n {
            return Err(Error::Data(format!(
                "{} predictions for {n} queries",
                self.predictions.len()
            )));
        }
        if let Some(p) = self
            .predictions
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(Error::Data(format!("prediction {p} is not finite")));
        }
        match (&self.gt_targets, &self.gt_visible) {
            (None, None) => {}
            (Some(t), Some(v)) => {
                if t.len() != n || v.len() != n {
                    return Err(Error::Data(format!(
                        "{} ground-truth targets and {} visibility flags for {n} queries",
                        t.len(),
                        v.len()
                    )));
                }
            }
            _ => {
                return Err(Error::Data(
                    "ground-truth targets and visibility must be given together".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Warps query points by the predicted flow: `prediction = query +
/// bilinear_sample(flow, query)`.
pub fn query_correspondence(flow: &FlowField, queries: &[Point2D]) -> Result<Vec<Point2D>> {
    if flow.resolution() != FlowResolution::Full {
        return Err(Error::InvalidArgument(
            "point queries need a full-resolution flow field".into(),
        ));
    }
    let (h, w) = (flow.height(), flow.width());
    let mut out = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let inside =
            q.x >= 0.0 && q.x <= (w - 1) as f64 && q.y >= 0.0 && q.y <= (h - 1) as f64;
        if !inside {
            return Err(Error::InvalidArgument(format!(
                "query {i} at ({}, {}) lies outside the {w}x{h} source raster",
                q.x, q.y
            )));
        }
        let v = bilinear_sample_point(flow.data(), q.x, q.y)?;
        out.push(Point2D::new(q.x + v[0], q.y + v[1]));
    }
    Ok(out)
}

/// How occluded ground-truth points enter the jaccard denominator. The
/// estimator predicts a target for every query, so with the default policy
/// each occluded point is a false positive at every threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OcclusionPolicy {
    #[default]
    CountAsFalsePositive,
    Exclude,
}

/// Raw pooled counts behind a [`MetricReport`]. Per-video counts merge by
/// exact summation, so evaluation order and sharding cannot change a report.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricCounts {
    pub visible: usize,
    pub occluded: usize,
    pub error_sum: f64,
    pub within: [usize; THRESHOLDS.len()],
}

impl MetricCounts {
    pub fn add_set(&mut self, set: &CorrespondenceSet) -> Result<()> {
        set.validate()?;
        let (targets, flags) = match (&set.gt_targets, &set.gt_visible) {
            (Some(t), Some(v)) => (t, v),
            _ => return Err(Error::Data("correspondence set has no ground truth".into())),
        };
        for i in 0..set.len() {
            if !flags[i] {
                self.occluded += 1;
                continue;
            }
            self.visible += 1;
            let err = set.predictions[i].distance(&targets[i]);
            self.error_sum += err;
            for (k, t) in THRESHOLDS.iter().enumerate() {
                if err < *t {
                    self.within[k] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricCounts) {
        self.visible += other.visible;
        self.occluded += other.occluded;
        self.error_sum += other.error_sum;
        for k in 0..THRESHOLDS.len() {
            self.within[k] += other.within[k];
        }
    }

    pub fn report(&self, occlusion: OcclusionPolicy) -> Result<MetricReport> {
        if self.visible == 0 {
            return Err(Error::Data(
                "no visible ground-truth points to evaluate".into(),
            ));
        }
        let fp = match occlusion {
            OcclusionPolicy::CountAsFalsePositive => self.occluded,
            OcclusionPolicy::Exclude => 0,
        };
        let mut delta = [0.0; THRESHOLDS.len()];
        let mut jaccard = [0.0; THRESHOLDS.len()];
        for k in 0..THRESHOLDS.len() {
            delta[k] = 100.0 * self.within[k] as f64 / self.visible as f64;
            jaccard[k] = 100.0 * self.within[k] as f64 / (self.visible + fp) as f64;
        }
        let mean = |xs: &[f64; THRESHOLDS.len()]| xs.iter().sum::<f64>() / THRESHOLDS.len() as f64;
        Ok(MetricReport {
            ad: self.error_sum / self.visible as f64,
            delta_avg: mean(&delta),
            aj: mean(&jaccard),
            thresholds: THRESHOLDS,
            delta_per_threshold: delta,
            aj_per_threshold: jaccard,
            visible_points: self.visible,
            occluded_points: self.occluded,
        })
    }
}

/// Aggregate point-tracking metrics pooled over every set by raw counts.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricReport {
    /// Mean pixel error over visible ground-truth points.
    #[serde(rename = "AD")]
    pub ad: f64,
    /// Mean over thresholds of the percentage of visible points with error
    /// strictly under the threshold.
    pub delta_avg: f64,
    /// Mean over thresholds of `TP / (TP + FN + FP)` in percent.
    #[serde(rename = "AJ")]
    pub aj: f64,
    pub thresholds: [f64; 5],
    pub delta_per_threshold: [f64; 5],
    pub aj_per_threshold: [f64; 5],
    pub visible_points: usize,
    pub occluded_points: usize,
}

/// Pools all sets into one report. Needs ground truth in every set and at
/// least one visible point overall.
pub fn tapvid_metrics(
    sets: &[CorrespondenceSet],
    occlusion: OcclusionPolicy,
) -> Result<MetricReport> {
    let mut counts = MetricCounts::default();
    for (i, set) in sets.iter().enumerate() {
        counts
            .add_set(set)
            .map_err(|e| Error::Data(format!("set {i}: {e}")))?;
    }
    counts.report(occlusion)
}

/// Rescales track coordinates onto a `new_h x new_w` raster with the same
/// center-aligned mapping the image resizer uses; results are clamped to the
/// raster so border points stay sampleable.
pub fn scale_tracks(ann: &TrackAnnotation, new_h: usize, new_w: usize) -> Result<TrackAnnotation> {
    ann.validate()?;
    if new_h == 0 || new_w == 0 {
        return Err(Error::InvalidArgument("target raster must be positive".into()));
    }
    let sx = new_w as f64 / ann.width as f64;
    let sy = new_h as f64 / ann.height as f64;
    let mut points = ann.points.clone();
    for p in &mut points {
        for c in &mut p.coords {
            c[0] = ((c[0] + 0.5) * sx - 0.5).clamp(0.0, (new_w - 1) as f64);
            c[1] = ((c[1] + 0.5) * sy - 0.5).clamp(0.0, (new_h - 1) as f64);
        }
    }
    Ok(TrackAnnotation { width: new_w, height: new_h, points })
}

/// Builds one correspondence set per needed (source, target) frame pair.
/// Each point is queried from the frame where it first becomes visible and
/// evaluated at every later frame; `flow_for(src, tgt)` must return
/// full-resolution flow on the annotation raster. Points that are never
/// visible are skipped.
pub fn video_correspondence_sets<F>(
    ann: &TrackAnnotation,
    mut flow_for: F,
) -> Result<Vec<CorrespondenceSet>>
where
    F: FnMut(usize, usize) -> Result<FlowField>,
{
    ann.validate()?;
    let frames = match ann.num_frames() {
        Some(n) => n,
        None => return Err(Error::Data("annotation has no points".into())),
    };
    let mut sources: Vec<usize> = ann
        .points
        .iter()
        .filter(|p| p.visible.iter().any(|&v| v))
        .map(|p| p.first_frame)
        .collect();
    sources.sort_unstable();
    sources.dedup();

    let mut sets = Vec::new();
    for src in sources {
        let ids: Vec<usize> = (0..ann.points.len())
            .filter(|&i| ann.points[i].first_frame == src && ann.points[i].visible[src])
            .collect();
        for tgt in src + 1..frames {
            let flow = flow_for(src, tgt)?;
            if flow.height() != ann.height || flow.width() != ann.width {
                return Err(Error::InvalidArgument(format!(
                    "flow for frames {src}->{tgt} is {}x{}, annotation raster is {}x{}",
                    flow.width(),
                    flow.height(),
                    ann.width,
                    ann.height
                )));
            }
            let queries: Vec<Point2D> = ids
                .iter()
                .map(|&i| {
                    let [x, y] = ann.points[i].coords[src];
                    Point2D::new(x, y)
                })
                .collect();
            let predictions = query_correspondence(&flow, &queries)?;
            let gt_targets = ids
                .iter()
                .map(|&i| {
                    let [x, y] = ann.points[i].coords[tgt];
                    Point2D::new(x, y)
                })
                .collect();
            let gt_visible = ids.iter().map(|&i| ann.points[i].visible[tgt]).collect();
            sets.push(CorrespondenceSet::with_ground_truth(
                queries,
                predictions,
                gt_targets,
                gt_visible,
            )?);
        }
    }
    if sets.is_empty() {
        return Err(Error::Data(
            "annotation yields no (source, target) evaluation pairs".into(),
        ));
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::TrackPoint;
    use ndarray::Array3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_flow(h: usize, w: usize, dx: f64, dy: f64) -> FlowField {
        let mut data = Array3::zeros((h, w, 2));
        data.slice_mut(ndarray::s![.., .., 0]).fill(dx);
        data.slice_mut(ndarray::s![.., .., 1]).fill(dy);
        FlowField::new(data, FlowResolution::Full).unwrap()
    }

    #[test]
    fn zero_flow_returns_queries() {
        let flow = constant_flow(8, 10, 0.0, 0.0);
        let queries = vec![Point2D::new(1.5, 2.5), Point2D::new(0.0, 7.0)];
        let preds = query_correspondence(&flow, &queries).unwrap();
        assert_eq!(preds, queries);
    }

    #[test]
    fn constant_flow_offsets_every_query() {
        let flow = constant_flow(8, 10, 5.0, -2.0);
        let queries = vec![Point2D::new(1.0, 2.0), Point2D::new(3.25, 6.5)];
        let preds = query_correspondence(&flow, &queries).unwrap();
        for (q, p) in queries.iter().zip(&preds) {
            assert_eq!(p.x, q.x + 5.0);
            assert_eq!(p.y, q.y - 2.0);
        }
    }

    #[test]
    fn subpixel_query_interpolates_linear_flow_exactly() {
        // dx = 0.5x + 0.25y + 1, dy = -0.3x + 0.1y - 2: bilinear sampling
        // reproduces any per-cell bilinear function, so a globally linear
        // flow is recovered exactly at fractional coordinates.
        let (h, w) = (6, 7);
        let mut data = Array3::zeros((h, w, 2));
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                data[[y, x, 0]] = 0.5 * xf + 0.25 * yf + 1.0;
                data[[y, x, 1]] = -0.3 * xf + 0.1 * yf - 2.0;
            }
        }
        let flow = FlowField::new(data, FlowResolution::Full).unwrap();
        let q = Point2D::new(2.3, 4.7);
        let p = &query_correspondence(&flow, &[q]).unwrap()[0];
        let dx = 0.5 * q.x + 0.25 * q.y + 1.0;
        let dy = -0.3 * q.x + 0.1 * q.y - 2.0;
        assert!((p.x - (q.x + dx)).abs() < 1e-12);
        assert!((p.y - (q.y + dy)).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_query_is_rejected() {
        let flow = constant_flow(8, 10, 0.0, 0.0);
        for bad in [
            Point2D::new(-0.1, 0.0),
            Point2D::new(9.1, 0.0),
            Point2D::new(0.0, 7.5),
        ] {
            let err = query_correspondence(&flow, &[bad]).unwrap_err();
            assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
        }
        // corners are inside
        assert!(query_correspondence(&flow, &[Point2D::new(9.0, 7.0)]).is_ok());
    }

    #[test]
    fn feature_resolution_flow_is_rejected() {
        let flow = FlowField::zeros(4, 5, FlowResolution::Feature);
        let err = query_correspondence(&flow, &[Point2D::new(1.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    fn offset_set(n: usize, dx: f64, dy: f64) -> CorrespondenceSet {
        let queries: Vec<Point2D> = (0..n)
            .map(|i| Point2D::new(i as f64, (2 * i) as f64))
            .collect();
        let gt: Vec<Point2D> = queries.iter().map(|q| Point2D::new(q.x + 3.0, q.y)).collect();
        let preds: Vec<Point2D> = gt.iter().map(|g| Point2D::new(g.x + dx, g.y + dy)).collect();
        CorrespondenceSet::with_ground_truth(queries, preds, gt, vec![true; n]).unwrap()
    }

    #[test]
    fn perfect_predictions_score_perfectly() {
        let report = tapvid_metrics(&[offset_set(7, 0.0, 0.0)], OcclusionPolicy::default()).unwrap();
        assert_eq!(report.ad, 0.0);
        assert_eq!(report.delta_avg, 100.0);
        assert_eq!(report.aj, 100.0);
    }

    #[test]
    fn three_pixel_error_hits_three_of_five_thresholds() {
        // 3 px misses the 1 and 2 px thresholds and clears 4, 8, 16.
        let report = tapvid_metrics(&[offset_set(9, 3.0, 0.0)], OcclusionPolicy::default()).unwrap();
        assert!((report.ad - 3.0).abs() < 1e-12);
        assert_eq!(report.delta_per_threshold, [0.0, 0.0, 100.0, 100.0, 100.0]);
        assert!((report.delta_avg - 60.0).abs() < 1e-12);
        assert!((report.aj - 60.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_comparison_is_strict() {
        // error exactly 4 px does not count as within 4
        let report = tapvid_metrics(&[offset_set(5, 4.0, 0.0)], OcclusionPolicy::default()).unwrap();
        assert!((report.ad - 4.0).abs() < 1e-12);
        assert_eq!(report.delta_per_threshold, [0.0, 0.0, 0.0, 100.0, 100.0]);
    }

    #[test]
    fn empty_evaluation_set_is_a_data_error() {
        let err = tapvid_metrics(&[], OcclusionPolicy::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));

        // all-occluded pools to zero visible points
        let set = CorrespondenceSet::with_ground_truth(
            vec![Point2D::new(1.0, 1.0)],
            vec![Point2D::new(1.0, 1.0)],
            vec![Point2D::new(1.0, 1.0)],
            vec![false],
        )
        .unwrap();
        let err = tapvid_metrics(&[set], OcclusionPolicy::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn missing_ground_truth_is_reported_with_set_index() {
        let ok = offset_set(3, 0.0, 0.0);
        let bare = CorrespondenceSet::predicted(
            vec![Point2D::new(1.0, 1.0)],
            vec![Point2D::new(2.0, 2.0)],
        )
        .unwrap();
        let err = tapvid_metrics(&[ok, bare], OcclusionPolicy::default()).unwrap_err();
        assert!(err.to_string().contains("set 1"), "{err}");
    }

    #[test]
    fn occluded_points_are_false_positives_by_default() {
        // 4 visible within every threshold + 1 occluded:
        // delta stays 100, jaccard drops to 4/5.
        let n = 5;
        let queries: Vec<Point2D> = (0..n).map(|i| Point2D::new(i as f64, 0.0)).collect();
        let gt = queries.clone();
        let mut visible = vec![true; n];
        visible[2] = false;
        let set =
            CorrespondenceSet::with_ground_truth(queries.clone(), queries, gt, visible).unwrap();

        let harsh = tapvid_metrics(std::slice::from_ref(&set), OcclusionPolicy::CountAsFalsePositive)
            .unwrap();
        assert_eq!(harsh.delta_avg, 100.0);
        assert!((harsh.aj - 80.0).abs() < 1e-12);

        let lenient = tapvid_metrics(&[set], OcclusionPolicy::Exclude).unwrap();
        assert_eq!(lenient.aj, 100.0);
    }

    fn random_sets(seed: u64) -> Vec<CorrespondenceSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let num_sets = rng.random_range(1..5);
        let mut sets = Vec::new();
        for s in 0..num_sets {
            let n = rng.random_range(1..40);
            let queries: Vec<Point2D> = (0..n)
                .map(|_| Point2D::new(rng.random_range(0.0..64.0), rng.random_range(0.0..48.0)))
                .collect();
            let gt: Vec<Point2D> = queries
                .iter()
                .map(|q| Point2D::new(q.x + rng.random_range(-8.0..8.0), q.y))
                .collect();
            let preds: Vec<Point2D> = gt
                .iter()
                .map(|g| {
                    Point2D::new(
                        g.x + rng.random_range(-20.0..20.0),
                        g.y + rng.random_range(-20.0..20.0),
                    )
                })
                .collect();
            let mut visible: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
            if s == 0 {
                visible[0] = true; // keep the pool non-empty
            }
            sets.push(CorrespondenceSet::with_ground_truth(queries, preds, gt, visible).unwrap());
        }
        sets
    }

    #[test]
    fn pooled_metrics_match_a_flat_per_point_oracle() {
        for seed in 0..20 {
            let sets = random_sets(seed);
            for policy in [OcclusionPolicy::CountAsFalsePositive, OcclusionPolicy::Exclude] {
                let report = tapvid_metrics(&sets, policy).unwrap();

                // oracle: flatten every point, then score scalar-by-scalar
                let mut errs = Vec::new();
                let mut occluded = 0usize;
                for set in &sets {
                    let gt = set.gt_targets.as_ref().unwrap();
                    let vis = set.gt_visible.as_ref().unwrap();
                    for i in 0..set.len() {
                        if vis[i] {
                            errs.push(set.predictions[i].distance(&gt[i]));
                        } else {
                            occluded += 1;
                        }
                    }
                }
                let ad: f64 = errs.iter().sum::<f64>() / errs.len() as f64;
                let fp = if policy == OcclusionPolicy::Exclude { 0 } else { occluded };
                let mut delta_avg = 0.0;
                let mut aj = 0.0;
                for t in THRESHOLDS {
                    let tp = errs.iter().filter(|&&e| e < t).count();
                    delta_avg += 100.0 * tp as f64 / errs.len() as f64;
                    aj += 100.0 * tp as f64 / (errs.len() + fp) as f64;
                }
                delta_avg /= THRESHOLDS.len() as f64;
                aj /= THRESHOLDS.len() as f64;

                assert!((report.ad - ad).abs() < 1e-9);
                assert!((report.delta_avg - delta_avg).abs() < 1e-9);
                assert!((report.aj - aj).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn merged_counts_equal_single_pass_counts() {
        let sets = random_sets(99);
        let mut single = MetricCounts::default();
        for s in &sets {
            single.add_set(s).unwrap();
        }
        let mut shards: Vec<MetricCounts> = Vec::new();
        for s in &sets {
            let mut c = MetricCounts::default();
            c.add_set(s).unwrap();
            shards.push(c);
        }
        let mut merged = MetricCounts::default();
        for c in &shards {
            merged.merge(c);
        }
        assert_eq!(single, merged);
    }

    proptest! {
        #[test]
        fn jaccard_never_exceeds_delta_avg(
            errors in proptest::collection::vec((0.0f64..24.0, any::<bool>()), 1..60)
        ) {
            let n = errors.len();
            let queries: Vec<Point2D> = (0..n).map(|i| Point2D::new(i as f64, 0.0)).collect();
            let gt = queries.clone();
            let preds: Vec<Point2D> =
                errors.iter().zip(&queries).map(|(&(e, _), q)| Point2D::new(q.x, q.y + e)).collect();
            let mut visible: Vec<bool> = errors.iter().map(|&(_, v)| v).collect();
            visible[0] = true;
            let set = CorrespondenceSet::with_ground_truth(queries, preds, gt, visible).unwrap();
            for policy in [OcclusionPolicy::CountAsFalsePositive, OcclusionPolicy::Exclude] {
                let r = tapvid_metrics(std::slice::from_ref(&set), policy).unwrap();
                prop_assert!(r.aj <= r.delta_avg + 1e-12);
                prop_assert!(r.ad >= 0.0);
                prop_assert!((0.0..=100.0).contains(&r.delta_avg));
                prop_assert!((0.0..=100.0).contains(&r.aj));
            }
        }
    }

    #[test]
    fn report_serializes_with_documented_field_names() {
        let report = tapvid_metrics(&[offset_set(4, 3.0, 0.0)], OcclusionPolicy::default()).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "AD",
            "delta_avg",
            "AJ",
            "thresholds",
            "delta_per_threshold",
            "aj_per_threshold",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["thresholds"], serde_json::json!([1.0, 2.0, 4.0, 8.0, 16.0]));
    }

    fn toy_annotation() -> TrackAnnotation {
        // point 0 appears at frame 0, point 1 at frame 0 (occluded later),
        // point 2 at frame 1
        TrackAnnotation {
            width: 16,
            height: 12,
            points: vec![
                TrackPoint {
                    first_frame: 0,
                    coords: vec![[2.0, 3.0], [4.0, 3.0], [6.0, 3.0]],
                    visible: vec![true, true, true],
                },
                TrackPoint {
                    first_frame: 0,
                    coords: vec![[8.0, 8.0], [9.0, 8.0], [10.0, 8.0]],
                    visible: vec![true, false, true],
                },
                TrackPoint {
                    first_frame: 1,
                    coords: vec![[0.0, 0.0], [5.0, 5.0], [5.0, 7.0]],
                    visible: vec![false, true, true],
                },
            ],
        }
    }

    #[test]
    fn protocol_queries_each_point_from_its_first_visible_frame() {
        let ann = toy_annotation();
        let mut asked = Vec::new();
        let sets = video_correspondence_sets(&ann, |s, t| {
            asked.push((s, t));
            Ok(constant_flow(12, 16, 2.0, 0.0))
        })
        .unwrap();

        assert_eq!(asked, vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(sets.len(), 3);

        // frame 0 -> 1: points 0 and 1 queried at their frame-0 coords
        assert_eq!(sets[0].queries, vec![Point2D::new(2.0, 3.0), Point2D::new(8.0, 8.0)]);
        assert_eq!(
            sets[0].predictions,
            vec![Point2D::new(4.0, 3.0), Point2D::new(10.0, 8.0)]
        );
        assert_eq!(
            sets[0].gt_targets.as_ref().unwrap(),
            &vec![Point2D::new(4.0, 3.0), Point2D::new(9.0, 8.0)]
        );
        assert_eq!(sets[0].gt_visible.as_ref().unwrap(), &vec![true, false]);

        // frame 1 -> 2: only point 2 starts at frame 1
        assert_eq!(sets[2].queries, vec![Point2D::new(5.0, 5.0)]);
        assert_eq!(sets[2].gt_targets.as_ref().unwrap(), &vec![Point2D::new(5.0, 7.0)]);

        // constant +2 px flow scores exactly on the points it happens to match
        let report = tapvid_metrics(&sets, OcclusionPolicy::default()).unwrap();
        assert!(report.ad > 0.0);
    }

    #[test]
    fn protocol_rejects_mismatched_flow_raster() {
        let ann = toy_annotation();
        let err =
            video_correspondence_sets(&ann, |_, _| Ok(constant_flow(6, 8, 0.0, 0.0))).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
    }

    #[test]
    fn track_scaling_follows_the_resize_mapping() {
        let ann = toy_annotation();
        let scaled = scale_tracks(&ann, 6, 8).unwrap();
        assert_eq!((scaled.width, scaled.height), (8, 6));
        // x: (2 + 0.5) * 0.5 - 0.5 = 0.75, y: (3 + 0.5) * 0.5 - 0.5 = 1.25
        assert_eq!(scaled.points[0].coords[0], [0.75, 1.25]);
        // border coordinate clamps instead of going negative
        assert_eq!(scaled.points[2].coords[0], [0.0, 0.0]);
        scaled.validate().unwrap();
    }
}
