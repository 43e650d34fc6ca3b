//! Revolute-joint recovery from 3D correspondences and its error measures.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use ndarray::Array2;

use crate::core::{backproject, CameraIntrinsics, FlowField, Point2D, Point3D};
use crate::datapipe::ArticulatedPairAnnotation;
use crate::error::{Error, Result};

use super::tapvid::{query_correspondence, CorrespondenceSet};

/// Rotations below this magnitude leave the axis unobservable.
pub const MIN_STATE_DEG: f64 = 0.5;

/// Singular values of the cross-covariance below this fraction of the
/// largest mean the points span less than a plane.
const RANK_EPS: f64 = 1e-9;

/// Cutoff separating the structural null direction of `I - R` (exactly the
/// rotation axis) from its two observable directions, whose singular values
/// are `2 sin(state/2)` >= 8.7e-3 at the smallest accepted state.
const PIVOT_NULL_EPS: f64 = 1e-6;

/// A revolute joint: unit axis direction, a point on the axis (meters), and
/// the signed rotation about it (degrees).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArticulationParams {
    pub axis: [f64; 3],
    pub pivot: [f64; 3],
    pub state_deg: f64,
}

impl ArticulationParams {
    pub fn validate(&self) -> Result<()> {
        let norm = Vector3::from(self.axis).norm();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidArgument(format!(
                "axis norm {norm} is not 1"
            )));
        }
        if !(self.state_deg > -180.0 && self.state_deg <= 180.0) {
            return Err(Error::InvalidArgument(format!(
                "state {} degrees outside (-180, 180]",
                self.state_deg
            )));
        }
        if self.pivot.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pivot is not finite".into()));
        }
        Ok(())
    }

    fn rotation(&self) -> Rotation3<f64> {
        let axis = Unit::new_normalize(Vector3::from(self.axis));
        Rotation3::from_axis_angle(&axis, self.state_deg.to_radians())
    }
}

/// Rotates points about the joint axis: `R (p - pivot) + pivot`.
pub fn apply_revolute(params: &ArticulationParams, points: &[Point3D]) -> Result<Vec<Point3D>> {
    params.validate()?;
    let r = params.rotation();
    let pivot = Vector3::from(params.pivot);
    Ok(points
        .iter()
        .map(|p| {
            let q = r * (Vector3::new(p.x, p.y, p.z) - pivot) + pivot;
            Point3D::new(q.x, q.y, q.z)
        })
        .collect())
}

/// 3D point pairs lifted through per-frame depth, with the number of
/// correspondences dropped for missing depth.
#[derive(Debug, Clone)]
pub struct LiftedCorrespondences {
    pub source: Vec<Point3D>,
    pub target: Vec<Point3D>,
    pub dropped: usize,
}

fn nearest_depth(depth: &Array2<f64>, p: Point2D) -> Option<f64> {
    let (h, w) = depth.dim();
    let x = p.x.round();
    let y = p.y.round();
    if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
        return None;
    }
    let d = depth[[y as usize, x as usize]];
    (d > 0.0).then_some(d)
}

/// Back-projects query/prediction pixel pairs through their frames' depth
/// maps with nearest-pixel lookup. Pairs whose depth is missing (zero) or
/// whose predicted pixel left the raster are dropped.
pub fn lift_correspondences(
    set: &CorrespondenceSet,
    depth1: &Array2<f64>,
    depth2: &Array2<f64>,
    k: &CameraIntrinsics,
) -> Result<LiftedCorrespondences> {
    set.validate()?;
    k.validate()?;
    let mut source = Vec::new();
    let mut target = Vec::new();
    let mut dropped = 0usize;
    for (q, p) in set.queries.iter().zip(&set.predictions) {
        match (nearest_depth(depth1, *q), nearest_depth(depth2, *p)) {
            (Some(d1), Some(d2)) => {
                source.push(backproject(*q, d1, k)?);
                target.push(backproject(*p, d2, k)?);
            }
            _ => dropped += 1,
        }
    }
    if source.is_empty() {
        return Err(Error::Data(format!(
            "all {} correspondences fell on invalid depth",
            set.len()
        )));
    }
    Ok(LiftedCorrespondences { source, target, dropped })
}

fn centroid(points: &[Point3D]) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for p in points {
        c += Vector3::new(p.x, p.y, p.z);
    }
    c / points.len() as f64
}

/// Least-squares rigid motion `target ~= R * source + t`: centroid alignment
/// plus orthogonal Procrustes on the cross-covariance, with the reflection
/// corrected to det +1.
pub fn fit_rigid_transform(
    source: &[Point3D],
    target: &[Point3D],
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if source.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "{} source points vs {} target points",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 correspondences, got {}",
            source.len()
        )));
    }
    let cs = centroid(source);
    let ct = centroid(target);
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let sv = Vector3::new(s.x, s.y, s.z) - cs;
        let tv = Vector3::new(t.x, t.y, t.z) - ct;
        h += sv * tv.transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if !(sv[1] > RANK_EPS * sv[0]) {
        return Err(Error::RankDeficient(format!(
            "correspondences span less than a plane (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let t = ct - r * cs;
    Ok((r, t))
}

/// Fits a revolute joint to 3D correspondences: rigid Procrustes fit, then a
/// screw decomposition. The pivot is the minimum-norm solution of
/// `(I - R) q = t`, which lies in the plane through the origin orthogonal to
/// the axis; any translation along the axis is unobservable and projected out.
pub fn fit_revolute_joint(source: &[Point3D], target: &[Point3D]) -> Result<ArticulationParams> {
    let (r, t) = fit_rigid_transform(source, target)?;
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let state_deg = rot.angle().to_degrees();
    if state_deg < MIN_STATE_DEG {
        return Err(Error::DegenerateMotion(format!(
            "recovered rotation is {state_deg:.4} degrees, below the {MIN_STATE_DEG} degree floor"
        )));
    }
    let axis = rot.axis().expect("angle above floor");
    let pivot = (Matrix3::identity() - r)
        .svd(true, true)
        .solve(&t, PIVOT_NULL_EPS)
        .map_err(|e| Error::Computation(format!("pivot solve failed: {e}")))?;
    Ok(ArticulationParams {
        axis: [axis.x, axis.y, axis.z],
        pivot: [pivot.x, pivot.y, pivot.z],
        state_deg,
    })
}

/// Distance from `point` to the infinite line through `origin` along `dir`.
pub fn point_to_line(point: &[f64; 3], origin: &[f64; 3], dir: &[f64; 3]) -> f64 {
    let d = Unit::new_normalize(Vector3::from(*dir));
    let v = Vector3::from(*point) - Vector3::from(*origin);
    (v - d.into_inner() * v.dot(&d)).norm()
}

fn line_to_line(p1: &[f64; 3], d1: &[f64; 3], p2: &[f64; 3], d2: &[f64; 3]) -> f64 {
    let a = Unit::new_normalize(Vector3::from(*d1)).into_inner();
    let b = Unit::new_normalize(Vector3::from(*d2)).into_inner();
    let dp = Vector3::from(*p2) - Vector3::from(*p1);
    let cross = a.cross(&b);
    let n = cross.norm();
    if n < 1e-9 {
        (dp - a * dp.dot(&a)).norm()
    } else {
        (dp.dot(&cross) / n).abs()
    }
}

fn wrap_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r <= -180.0 {
        r += 360.0;
    }
    if r > 180.0 {
        r -= 360.0;
    }
    r
}

/// The four joint-recovery error measures.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ArticulationErrors {
    /// Angle between axis directions in degrees, orientation-blind.
    pub angle_deg: f64,
    /// Minimum distance between the two infinite axis lines, meters.
    pub pos_m: f64,
    /// Distance from the reference pivot to the predicted axis line, meters.
    pub pivot_to_axis_m: f64,
    /// Rotation-magnitude difference in degrees after reconciling axis
    /// orientation, wrapped to (-180, 180].
    pub state_deg: f64,
    /// Mean distance between reference-moved source points and predicted
    /// target points, meters.
    pub dist_m: f64,
}

/// Compares a predicted joint against a reference joint. `gt_moved_source`
/// holds the source points transformed by the reference joint, and
/// `predicted_target` the corresponding predicted target points.
pub fn articulation_errors(
    pred: &ArticulationParams,
    gt: &ArticulationParams,
    gt_moved_source: &[Point3D],
    predicted_target: &[Point3D],
) -> Result<ArticulationErrors> {
    pred.validate()?;
    gt.validate()?;
    if gt_moved_source.len() != predicted_target.len() || gt_moved_source.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} moved source points vs {} predicted targets",
            gt_moved_source.len(),
            predicted_target.len()
        )));
    }
    let ap = Unit::new_normalize(Vector3::from(pred.axis));
    let ag = Unit::new_normalize(Vector3::from(gt.axis));
    let dot = ap.dot(&ag);
    let angle_deg = dot.abs().clamp(0.0, 1.0).acos().to_degrees();
    let pos_m = line_to_line(&pred.pivot, &pred.axis, &gt.pivot, &gt.axis);
    let pivot_to_axis_m = point_to_line(&gt.pivot, &pred.pivot, &pred.axis);
    // (axis, state) and (-axis, -state) are the same motion; express the
    // prediction in the reference orientation before differencing
    let aligned_state = if dot >= 0.0 { pred.state_deg } else { -pred.state_deg };
    let state_deg = wrap_deg(aligned_state - gt.state_deg).abs();
    let dist_m = gt_moved_source
        .iter()
        .zip(predicted_target)
        .map(|(a, b)| a.distance(b))
        .sum::<f64>()
        / gt_moved_source.len() as f64;
    Ok(ArticulationErrors { angle_deg, pos_m, pivot_to_axis_m, state_deg, dist_m })
}

/// Joint recovery outcome for one annotated articulated pair.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ArticulatedPairResult {
    pub params: ArticulationParams,
    pub errors: ArticulationErrors,
    /// Correspondences that survived depth lookup and entered the fit.
    pub used_points: usize,
    pub dropped_points: usize,
}

/// Evaluates a predicted current-to-target flow field against one annotated
/// revolute joint. Queries are the moving-part mask pixels, thinned in
/// row-major order to at most `max_queries`; their correspondences are
/// lifted through the two depth maps, a joint is fitted, and all error
/// measures are taken against the annotated motion.
pub fn evaluate_articulated_pair(
    inst: &ArticulatedPairAnnotation,
    flow: &FlowField,
    max_queries: usize,
) -> Result<ArticulatedPairResult> {
    let (h, w) = inst.part_mask.dim();
    if flow.height() != h || flow.width() != w {
        return Err(Error::InvalidArgument(format!(
            "flow raster {}x{} does not match instance raster {w}x{h}",
            flow.width(),
            flow.height()
        )));
    }
    if max_queries == 0 {
        return Err(Error::InvalidArgument("need at least one query".into()));
    }
    let on_mask: Vec<Point2D> = (0..h * w)
        .filter(|i| inst.part_mask[[i / w, i % w]])
        .map(|i| Point2D::new((i % w) as f64, (i / w) as f64))
        .collect();
    if on_mask.is_empty() {
        return Err(Error::Data("moving-part mask is empty".into()));
    }
    let stride = on_mask.len().div_ceil(max_queries);
    let queries: Vec<Point2D> = on_mask.into_iter().step_by(stride).collect();
    let predictions = query_correspondence(flow, &queries)?;
    let set = CorrespondenceSet::predicted(queries, predictions)?;
    let lifted = lift_correspondences(&set, &inst.depth[0], &inst.depth[1], &inst.intrinsics)?;
    let params = fit_revolute_joint(&lifted.source, &lifted.target)?;
    let gt = ArticulationParams {
        axis: inst.gt_axis,
        pivot: inst.gt_pivot,
        state_deg: inst.gt_angle_deg,
    };
    let moved = apply_revolute(&gt, &lifted.source)?;
    let errors = articulation_errors(&params, &gt, &moved, &lifted.target)?;
    Ok(ArticulatedPairResult {
        params,
        errors,
        used_points: lifted.source.len(),
        dropped_points: lifted.dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::FlowResolution;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cloud(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3D> {
        (0..n)
            .map(|_| {
                Point3D::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(0.5..1.5),
                )
            })
            .collect()
    }

    fn extent(points: &[Point3D]) -> f64 {
        let mut best = 0.0f64;
        for a in points {
            for b in points {
                best = best.max(a.distance(b));
            }
        }
        best
    }

    #[test]
    fn exact_rotation_about_known_axis_is_recovered() {
        let params = ArticulationParams {
            axis: [0.0, 0.0, 1.0],
            pivot: [1.0, 0.0, 0.0],
            state_deg: 30.0,
        };
        let source = vec![
            Point3D::new(0.0, 0.0, 0.0),
            Point3D::new(1.0, 0.0, 0.0),
            Point3D::new(0.0, 1.0, 0.0),
            Point3D::new(0.0, 0.0, 1.0),
            Point3D::new(1.0, 1.0, 0.5),
            Point3D::new(0.3, -0.2, 0.7),
        ];
        let target = apply_revolute(&params, &source).unwrap();
        let fit = fit_revolute_joint(&source, &target).unwrap();

        assert!((Vector3::from(fit.axis) - Vector3::z()).norm() < 1e-9);
        assert!((fit.state_deg - 30.0).abs() < 1e-9);
        // recovered pivot sits on the true axis line {(1,0,0) + s z}
        assert!(point_to_line(&fit.pivot, &params.pivot, &params.axis) < 1e-6);
        // minimum-norm pivot has no component along the axis
        assert!(fit.pivot[2].abs() < 1e-9);
    }

    #[test]
    fn noisy_recovery_stays_within_monte_carlo_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut axis_errs = Vec::new();
        let mut pivot_errs = Vec::new();
        let mut ext_sum = 0.0;
        for _ in 0..100 {
            let source = cloud(12, &mut rng);
            let ext = extent(&source);
            ext_sum += ext;
            let axis = {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                Unit::new_normalize(if v.norm() < 1e-6 { Vector3::x() } else { v })
            };
            let gt = ArticulationParams {
                axis: [axis.x, axis.y, axis.z],
                pivot: [
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(0.7..1.3),
                ],
                state_deg: 30.0,
            };
            let noise = Normal::new(0.0, 0.005 * ext).unwrap();
            let mut target = apply_revolute(&gt, &source).unwrap();
            for p in &mut target {
                p.x += noise.sample(&mut rng);
                p.y += noise.sample(&mut rng);
                p.z += noise.sample(&mut rng);
            }
            let fit = fit_revolute_joint(&source, &target).unwrap();
            let dot = Vector3::from(fit.axis).dot(&Vector3::from(gt.axis));
            axis_errs.push(dot.abs().clamp(0.0, 1.0).acos().to_degrees());
            pivot_errs.push(line_to_line(&fit.pivot, &fit.axis, &gt.pivot, &gt.axis) / ext);
        }
        axis_errs.sort_by(f64::total_cmp);
        pivot_errs.sort_by(f64::total_cmp);
        let ext_mean = ext_sum / 100.0;
        assert!(ext_mean > 0.5, "clouds should have nontrivial extent");
        assert!(axis_errs[50] < 2.0, "median axis error {} deg", axis_errs[50]);
        assert!(pivot_errs[50] < 0.02, "median pivot error {} extents", pivot_errs[50]);
    }

    #[test]
    fn identity_motion_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let source = cloud(8, &mut rng);
        let err = fit_revolute_joint(&source, &source).unwrap_err();
        assert!(matches!(err, Error::DegenerateMotion(_)), "{err}");
    }

    #[test]
    fn collinear_points_are_rank_deficient() {
        let source: Vec<Point3D> =
            (0..6).map(|i| Point3D::new(i as f64 * 0.1, 0.0, 1.0)).collect();
        let params = ArticulationParams {
            axis: [0.0, 1.0, 0.0],
            pivot: [0.0, 0.0, 0.0],
            state_deg: 20.0,
        };
        let target = apply_revolute(&params, &source).unwrap();
        let err = fit_revolute_joint(&source, &target).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
    }

    #[test]
    fn too_few_points_is_an_argument_error() {
        let p = vec![Point3D::new(0.0, 0.0, 1.0), Point3D::new(1.0, 0.0, 1.0)];
        let err = fit_revolute_joint(&p, &p).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn recovered_rotation_is_orthonormal_with_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let source = cloud(10, &mut rng);
            let gt = ArticulationParams {
                axis: [0.6, 0.0, 0.8],
                pivot: [0.2, -0.1, 1.0],
                state_deg: rng.random_range(5.0..170.0),
            };
            let mut target = apply_revolute(&gt, &source).unwrap();
            for p in &mut target {
                p.x += rng.random_range(-0.01..0.01);
                p.y += rng.random_range(-0.01..0.01);
                p.z += rng.random_range(-0.01..0.01);
            }
            let (r, _) = fit_rigid_transform(&source, &target).unwrap();
            let gram = r.transpose() * r - Matrix3::identity();
            assert!(gram.iter().all(|v| v.abs() < 1e-9));
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fitted_rotation_beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let source = cloud(10, &mut rng);
        let gt = ArticulationParams {
            axis: [0.0, 0.8, 0.6],
            pivot: [0.1, 0.0, 1.0],
            state_deg: 40.0,
        };
        let mut target = apply_revolute(&gt, &source).unwrap();
        for p in &mut target {
            p.x += rng.random_range(-0.02..0.02);
            p.y += rng.random_range(-0.02..0.02);
            p.z += rng.random_range(-0.02..0.02);
        }
        let residual = |r: &Matrix3<f64>| {
            // optimal translation for a fixed rotation aligns the centroids
            let t = centroid(&target) - r * centroid(&source);
            source
                .iter()
                .zip(&target)
                .map(|(s, g)| {
                    (r * Vector3::new(s.x, s.y, s.z) + t - Vector3::new(g.x, g.y, g.z))
                        .norm_squared()
                })
                .sum::<f64>()
        };
        let (r_fit, _) = fit_rigid_transform(&source, &target).unwrap();
        let best = residual(&r_fit);
        for _ in 0..1000 {
            let axis = Unit::new_normalize(Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ));
            let r = Rotation3::from_axis_angle(&axis, rng.random_range(-3.14..3.14));
            assert!(best <= residual(r.matrix()) + 1e-12);
        }
    }

    #[test]
    fn perfect_prediction_has_zero_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let source = cloud(9, &mut rng);
        let gt = ArticulationParams {
            axis: [0.0, 0.0, 1.0],
            pivot: [0.3, 0.2, 1.0],
            state_deg: 25.0,
        };
        let moved = apply_revolute(&gt, &source).unwrap();
        let fit = fit_revolute_joint(&source, &moved).unwrap();
        let errs = articulation_errors(&fit, &gt, &moved, &moved).unwrap();
        assert!(errs.angle_deg < 1e-6);
        assert!(errs.pos_m < 1e-6);
        assert!(errs.pivot_to_axis_m < 1e-6);
        assert!(errs.state_deg < 1e-6);
        assert_eq!(errs.dist_m, 0.0);
    }

    #[test]
    fn axis_angle_error_of_45_degrees() {
        let s = 0.5f64.sqrt();
        let pred = ArticulationParams { axis: [0.0, 0.0, 1.0], pivot: [0.0; 3], state_deg: 10.0 };
        let gt = ArticulationParams { axis: [0.0, s, s], pivot: [0.0; 3], state_deg: 10.0 };
        let pts = [Point3D::new(0.0, 0.0, 1.0); 3];
        let errs = articulation_errors(&pred, &gt, &pts, &pts).unwrap();
        assert!((errs.angle_deg - 45.0).abs() < 1e-9);
    }

    #[test]
    fn negating_the_reference_axis_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let source = cloud(7, &mut rng);
            let mk_axis = |rng: &mut ChaCha8Rng| {
                let v = Vector3::new(
                    rng.random_range(-1.0f64..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                Unit::new_normalize(if v.norm() < 1e-6 { Vector3::y() } else { v })
            };
            let ap = mk_axis(&mut rng);
            let ag = mk_axis(&mut rng);
            let pred = ArticulationParams {
                axis: [ap.x, ap.y, ap.z],
                pivot: [rng.random_range(-1.0..1.0), 0.0, 1.0],
                state_deg: rng.random_range(-170.0..170.0),
            };
            let gt = ArticulationParams {
                axis: [ag.x, ag.y, ag.z],
                pivot: [0.0, rng.random_range(-1.0..1.0), 1.0],
                state_deg: rng.random_range(-170.0..170.0),
            };
            let flipped = ArticulationParams {
                axis: [-gt.axis[0], -gt.axis[1], -gt.axis[2]],
                pivot: gt.pivot,
                state_deg: -gt.state_deg,
            };
            let moved = apply_revolute(&gt, &source).unwrap();
            let moved_flipped = apply_revolute(&flipped, &source).unwrap();
            let tgt = cloud(7, &mut rng);

            let a = articulation_errors(&pred, &gt, &moved, &tgt).unwrap();
            let b = articulation_errors(&pred, &flipped, &moved_flipped, &tgt).unwrap();
            assert_eq!(a.angle_deg, b.angle_deg);
            assert_eq!(a.pos_m, b.pos_m);
            assert_eq!(a.pivot_to_axis_m, b.pivot_to_axis_m);
            assert_eq!(a.state_deg, b.state_deg);
            assert!((a.dist_m - b.dist_m).abs() < 1e-12);
        }
    }

    #[test]
    fn state_difference_wraps_around_the_half_turn() {
        let pred =
            ArticulationParams { axis: [0.0, 0.0, 1.0], pivot: [0.0; 3], state_deg: 179.0 };
        let gt =
            ArticulationParams { axis: [0.0, 0.0, 1.0], pivot: [0.0; 3], state_deg: -179.0 };
        let pts = [Point3D::new(0.0, 0.0, 1.0); 3];
        let errs = articulation_errors(&pred, &gt, &pts, &pts).unwrap();
        assert!((errs.state_deg - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_axis_lines_measure_perpendicular_offset() {
        let pred = ArticulationParams {
            axis: [0.0, 0.0, 1.0],
            pivot: [1.0, 0.0, 5.0],
            state_deg: 10.0,
        };
        let gt = ArticulationParams {
            axis: [0.0, 0.0, -1.0],
            pivot: [1.0, 2.0, -3.0],
            state_deg: 10.0,
        };
        let pts = [Point3D::new(0.0, 0.0, 1.0); 2];
        let errs = articulation_errors(&pred, &gt, &pts, &pts).unwrap();
        assert!((errs.pos_m - 2.0).abs() < 1e-12);
        assert!((errs.pivot_to_axis_m - 2.0).abs() < 1e-12);
    }

    fn flat_depth(h: usize, w: usize, d: f64) -> Array2<f64> {
        Array2::from_elem((h, w), d)
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 8.0, cy: 6.0 }
    }

    #[test]
    fn zero_flow_on_flat_depth_lifts_identical_pairs() {
        let queries: Vec<Point2D> = vec![Point2D::new(2.0, 3.0), Point2D::new(10.0, 7.0)];
        let set = CorrespondenceSet::predicted(queries.clone(), queries).unwrap();
        let lifted =
            lift_correspondences(&set, &flat_depth(12, 16, 2.0), &flat_depth(12, 16, 2.0), &k())
                .unwrap();
        assert_eq!(lifted.dropped, 0);
        assert_eq!(lifted.source, lifted.target);
        assert_eq!(lifted.source[0], Point3D::new(-0.12, -0.06, 2.0));
    }

    #[test]
    fn lift_matches_hand_backprojection_with_nearest_pixel_depth() {
        let mut d1 = flat_depth(12, 16, 1.0);
        let mut d2 = flat_depth(12, 16, 1.0);
        d1[[3, 10]] = 2.5; // nearest pixel for query (10.4, 2.6)
        d2[[7, 5]] = 0.8; // nearest pixel for prediction (4.5, 7.49)
        let set = CorrespondenceSet::predicted(
            vec![Point2D::new(10.4, 2.6)],
            vec![Point2D::new(4.5, 7.49)],
        )
        .unwrap();
        let lifted = lift_correspondences(&set, &d1, &d2, &k()).unwrap();
        // source: ((10.4 - 8) * 2.5 / 100, (2.6 - 6) * 2.5 / 100, 2.5)
        let s = lifted.source[0];
        assert!((s.x - 0.06).abs() < 1e-12);
        assert!((s.y + 0.085).abs() < 1e-12);
        assert_eq!(s.z, 2.5);
        // prediction x = 4.5 rounds half away from zero to pixel 5
        let t = lifted.target[0];
        assert!((t.x - (4.5 - 8.0) * 0.8 / 100.0).abs() < 1e-12);
        assert_eq!(t.z, 0.8);
    }

    #[test]
    fn invalid_depth_and_off_raster_predictions_are_dropped() {
        let mut d1 = flat_depth(12, 16, 1.0);
        d1[[0, 0]] = 0.0;
        let d2 = flat_depth(12, 16, 1.0);
        let set = CorrespondenceSet::predicted(
            vec![Point2D::new(0.0, 0.0), Point2D::new(3.0, 3.0), Point2D::new(5.0, 5.0)],
            vec![Point2D::new(1.0, 1.0), Point2D::new(99.0, 3.0), Point2D::new(5.0, 5.0)],
        )
        .unwrap();
        let lifted = lift_correspondences(&set, &d1, &d2, &k()).unwrap();
        assert_eq!(lifted.dropped, 2);
        assert_eq!(lifted.source.len(), 1);
    }

    #[test]
    fn all_points_dropped_is_a_data_error() {
        let set = CorrespondenceSet::predicted(
            vec![Point2D::new(1.0, 1.0)],
            vec![Point2D::new(2.0, 2.0)],
        )
        .unwrap();
        let err =
            lift_correspondences(&set, &flat_depth(4, 4, 0.0), &flat_depth(4, 4, 1.0), &k())
                .unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    fn exact_instance() -> (crate::datapipe::ArticulatedPairAnnotation, crate::core::FlowField) {
        let k = CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 15.5,
            cy: 11.5,
        };
        crate::datapipe::synthetic::synthetic_revolute_instance(
            24,
            32,
            &k,
            1.0,
            (25.5, 6.5),
            10.0,
            (8, 10, 8, 12),
            3,
        )
        .unwrap()
    }

    #[test]
    fn pair_evaluation_recovers_the_motion_from_its_own_flow() {
        let (inst, gt_flow) = exact_instance();
        let res = evaluate_articulated_pair(&inst, &gt_flow, 64).unwrap();
        assert!(res.errors.angle_deg < 1e-6, "angle {}", res.errors.angle_deg);
        assert!(res.errors.pos_m < 1e-6, "pos {}", res.errors.pos_m);
        assert!(res.errors.pivot_to_axis_m < 1e-6);
        assert!(res.errors.state_deg.abs() < 1e-6, "state {}", res.errors.state_deg);
        assert!(res.errors.dist_m < 1e-9, "dist {}", res.errors.dist_m);
        // 96 mask pixels thinned by ceil(96/64) = 2
        assert_eq!(res.used_points, 48);
        assert_eq!(res.dropped_points, 0);
        assert!(res.params.axis[2].abs() > 1.0 - 1e-9);
    }

    #[test]
    fn pair_evaluation_rejects_mismatched_flow_and_zero_budget() {
        let (inst, gt_flow) = exact_instance();
        let small = FlowField::zeros(8, 8, FlowResolution::Full);
        assert!(matches!(
            evaluate_articulated_pair(&inst, &small, 64),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            evaluate_articulated_pair(&inst, &gt_flow, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_flow_on_a_pair_reports_degenerate_motion() {
        let (inst, _) = exact_instance();
        let still = FlowField::zeros(24, 32, FlowResolution::Full);
        let err = evaluate_articulated_pair(&inst, &still, 64).unwrap_err();
        assert!(matches!(err, Error::DegenerateMotion(_)), "{err}");
    }
}
