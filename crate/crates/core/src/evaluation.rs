//! Detection accuracy: correctness thresholds, TP/FP/FN matching, PR curves
//! and the occlusion / intersection-circumference strata.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::SymmetryDetection;
use crate::geometry::{angle_between_normals, Plane, PointCloud, SymmetryAxis, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no ground-truth planes in any scene")]
    NoGroundTruth,
    #[error("full cloud is empty")]
    EmptyFullCloud,
    #[error("observed cloud has {observed} points but the full cloud only {full}")]
    ObservedExceedsFull { observed: usize, full: usize },
    #[error("invalid correctness threshold: {0}")]
    InvalidThreshold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessThreshold {
    /// Meters.
    pub d_th: f64,
    /// Degrees.
    pub angle_th: f64,
}

impl Default for CorrectnessThreshold {
    fn default() -> Self {
        CorrectnessThreshold {
            d_th: 0.01,
            angle_th: 20.0,
        }
    }
}

impl CorrectnessThreshold {
    pub fn new(d_th: f64, angle_th: f64) -> Result<Self, EvalError> {
        let th = CorrectnessThreshold { d_th, angle_th };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.d_th > 0.0) || !(self.angle_th > 0.0 && self.angle_th <= 90.0) {
            return Err(EvalError::InvalidThreshold(format!(
                "need d_th > 0 and 0 < angle_th <= 90, got d_th={} angle_th={}",
                self.d_th, self.angle_th
            )));
        }
        Ok(())
    }
}

/// Distance along the ground-truth normal from the predicted plane's foot
/// point to the ground-truth plane. Works on raw `(normal, offset)` pairs.
pub fn plane_gap(pred_normal: &Vec3, pred_offset: f64, gt_normal: &Vec3, gt_offset: f64) -> f64 {
    let foot = pred_normal * pred_offset;
    (gt_offset - gt_normal.dot(&foot)).abs()
}

pub fn is_correct(pred: &Plane, gt: &Plane, th: &CorrectnessThreshold) -> bool {
    plane_gap(&pred.normal(), pred.offset(), &gt.normal(), gt.offset()) <= th.d_th
        && angle_between_normals(&pred.normal(), &gt.normal()) <= th.angle_th
}

/// Ground-truth planes within this tolerance of containing the axis stand
/// for the whole axial family.
const AXIS_TOL: f64 = 1e-9;

/// Like [`is_correct`], except that a ground-truth plane containing `axis`
/// accepts any prediction that is within `angle_th` of parallel to the axis
/// and passes within `d_th` of the axis point.
pub fn is_correct_with_axis(
    pred: &Plane,
    gt: &Plane,
    axis: Option<&SymmetryAxis>,
    th: &CorrectnessThreshold,
) -> bool {
    match axis {
        Some(axis) if axis.lies_in(gt, AXIS_TOL) => {
            axis.angle_to(pred) <= th.angle_th && pred.signed_distance(&axis.point).abs() <= th.d_th
        }
        _ => is_correct(pred, gt, th),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TruePositive,
    FalsePositive,
    /// Best within-threshold prediction for a ground-truth plane, but under the confidence threshold.
    FalseNegative,
    /// Within threshold of a ground-truth plane that already has a true positive.
    Ignored,
    /// Under the confidence threshold and not the best match of any plane.
    Suppressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// Per ground-truth plane: the prediction that became its true positive.
    pub gt_match: Vec<Option<usize>>,
    pub roles: Vec<Role>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Matches detections to ground-truth planes at one confidence threshold.
///
/// Ground-truth planes are visited in order. Each takes the most confident
/// unconsumed prediction within the correctness threshold (ties go to the
/// lower index). When that prediction clears `conf_th` it is a true
/// positive and every other within-threshold prediction of the plane is
/// ignored; otherwise the plane is a false negative and nothing is consumed.
/// Remaining confident predictions are false positives.
pub fn match_scene(
    detections: &[SymmetryDetection],
    gt: &[Plane],
    th: &CorrectnessThreshold,
    conf_th: f64,
) -> MatchOutcome {
    match_scene_with_axis(detections, gt, None, th, conf_th)
}

/// [`match_scene`] with axial ground-truth planes matched as a family; see
/// [`is_correct_with_axis`].
///
/// A prediction that fits an axial plane only through the family rule is not
/// consumed when another prediction takes that plane, so it can still claim
/// the other axial plane. Whatever is left over and fits a matched plane is
/// ignored rather than counted as a false positive.
pub fn match_scene_with_axis(
    detections: &[SymmetryDetection],
    gt: &[Plane],
    axis: Option<&SymmetryAxis>,
    th: &CorrectnessThreshold,
    conf_th: f64,
) -> MatchOutcome {
    let n = detections.len();
    let mut consumed = vec![false; n];
    let mut roles: Vec<Option<Role>> = vec![None; n];
    let mut gt_match = vec![None; gt.len()];
    let mut tp = 0;

    for (g, gt_plane) in gt.iter().enumerate() {
        let candidates: Vec<usize> = (0..n)
            .filter(|&i| {
                !consumed[i] && is_correct_with_axis(&detections[i].plane, gt_plane, axis, th)
            })
            .collect();
        let Some(&best) = candidates.iter().reduce(|a, b| {
            if detections[*b].confidence > detections[*a].confidence {
                b
            } else {
                a
            }
        }) else {
            continue;
        };
        if detections[best].confidence >= conf_th {
            tp += 1;
            gt_match[g] = Some(best);
            consumed[best] = true;
            roles[best] = Some(Role::TruePositive);
            // an axial-only match stays free for the other axial planes
            for &c in &candidates {
                if c != best && is_correct(&detections[c].plane, gt_plane, th) {
                    consumed[c] = true;
                    roles[c] = Some(Role::Ignored);
                }
            }
        } else if roles[best].is_none() {
            roles[best] = Some(Role::FalseNegative);
        }
    }
    if axis.is_some() {
        for i in (0..n).filter(|&i| !consumed[i]) {
            let duplicate = gt_match.iter().zip(gt).any(|(m, g)| {
                m.is_some() && is_correct_with_axis(&detections[i].plane, g, axis, th)
            });
            if duplicate {
                roles[i] = Some(Role::Ignored);
            }
        }
    }

    let mut fp = 0;
    let roles = roles
        .into_iter()
        .enumerate()
        .map(|(i, role)| match role {
            Some(r @ (Role::TruePositive | Role::Ignored)) => r,
            _ if detections[i].confidence >= conf_th => {
                fp += 1;
                Role::FalsePositive
            }
            Some(r) => r,
            None => Role::Suppressed,
        })
        .collect();

    MatchOutcome {
        gt_match,
        roles,
        tp,
        fp,
        fn_: gt.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrPoint {
    pub fn product(&self) -> f64 {
        self.precision * self.recall
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionBin {
    Under60,
    From60To80,
    Above80,
}

impl OcclusionBin {
    pub fn of(degree: f64) -> OcclusionBin {
        if degree < 0.6 {
            OcclusionBin::Under60
        } else if degree < 0.8 {
            OcclusionBin::From60To80
        } else {
            OcclusionBin::Above80
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OcclusionBin::Under60 => "Under 60%",
            OcclusionBin::From60To80 => "60% to 80%",
            OcclusionBin::Above80 => "Above 80%",
        }
    }

    pub const ALL: [OcclusionBin; 3] = [
        OcclusionBin::Under60,
        OcclusionBin::From60To80,
        OcclusionBin::Above80,
    ];
}

/// Intersection circumferences at or above this split (meters) count as long.
pub const CIRCUMFERENCE_SPLIT: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircumferenceBin {
    Short,
    Long,
}

impl CircumferenceBin {
    pub fn of(circumference: f64) -> CircumferenceBin {
        if circumference < CIRCUMFERENCE_SPLIT {
            CircumferenceBin::Short
        } else {
            CircumferenceBin::Long
        }
    }
}

/// One evaluated scene with its stratification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub name: String,
    pub gt: Vec<Plane>,
    pub detections: Vec<SymmetryDetection>,
    pub occlusion_degree: Option<f64>,
    pub occlusion_bin: Option<OcclusionBin>,
    /// Per ground-truth plane, meters.
    pub circumference: Vec<f64>,
    pub circumference_bins: Vec<CircumferenceBin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<SymmetryAxis>,
}

impl SceneRecord {
    pub fn new(
        name: impl Into<String>,
        gt: Vec<Plane>,
        detections: Vec<SymmetryDetection>,
    ) -> Self {
        SceneRecord {
            name: name.into(),
            gt,
            detections,
            occlusion_degree: None,
            occlusion_bin: None,
            circumference: Vec::new(),
            circumference_bins: Vec::new(),
            axis: None,
        }
    }

    pub fn with_occlusion(mut self, degree: f64) -> Self {
        self.occlusion_degree = Some(degree);
        self.occlusion_bin = Some(OcclusionBin::of(degree));
        self
    }

    pub fn with_axis(mut self, axis: Option<SymmetryAxis>) -> Self {
        self.axis = axis;
        self
    }

    pub fn with_circumference(mut self, circumference: Vec<f64>) -> Self {
        self.circumference_bins = circumference
            .iter()
            .map(|&c| CircumferenceBin::of(c))
            .collect();
        self.circumference = circumference;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: CorrectnessThreshold,
    /// Ordered by increasing confidence threshold.
    pub pr_points: Vec<PrPoint>,
    #[serde(default)]
    pub scenes: Vec<SceneRecord>,
}

impl EvalReport {
    /// The operating point maximizing precision x recall (ties: lowest threshold).
    pub fn best_operating_point(&self) -> Option<PrPoint> {
        self.pr_points.iter().copied().reduce(|best, p| {
            if p.product() > best.product() {
                p
            } else {
                best
            }
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for p in &self.pr_points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
        }
        out
    }
}

/// Upper sentinel of the confidence sweep; above every valid confidence.
pub const ABOVE_ALL_CONFIDENCES: f64 = 1.0 + 1e-9;

/// One scene as seen by the sweep.
type SceneView<'a> = (
    &'a [SymmetryDetection],
    &'a [Plane],
    Option<&'a SymmetryAxis>,
);

fn aggregate(scenes: &[SceneView<'_>], th: &CorrectnessThreshold, conf_th: f64) -> PrPoint {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (dets, gt, axis) in scenes {
        let m = match_scene_with_axis(dets, gt, *axis, th, conf_th);
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / (tp + fn_) as f64;
    PrPoint {
        threshold: conf_th,
        precision,
        recall,
        tp,
        fp,
        fn_,
    }
}

/// Sweeps the confidence threshold over every distinct detection confidence.
pub fn pr_curve(
    scenes: &[(&[SymmetryDetection], &[Plane])],
    th: &CorrectnessThreshold,
) -> Result<EvalReport, EvalError> {
    let views: Vec<SceneView<'_>> = scenes.iter().map(|&(d, g)| (d, g, None)).collect();
    sweep(&views, th)
}

fn sweep(scenes: &[SceneView<'_>], th: &CorrectnessThreshold) -> Result<EvalReport, EvalError> {
    th.validate()?;
    if scenes.iter().all(|(_, gt, _)| gt.is_empty()) {
        return Err(EvalError::NoGroundTruth);
    }
    let mut thresholds: Vec<f64> = scenes
        .iter()
        .flat_map(|(d, _, _)| d.iter().map(|x| x.confidence))
        .collect();
    thresholds.push(0.0);
    thresholds.push(ABOVE_ALL_CONFIDENCES);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let pr_points = thresholds
        .into_iter()
        .map(|t| aggregate(scenes, th, t))
        .collect();
    Ok(EvalReport {
        threshold: *th,
        pr_points,
        scenes: Vec::new(),
    })
}

/// PR curve over scene records, which are kept in the report.
pub fn pr_curve_records(
    records: Vec<SceneRecord>,
    th: &CorrectnessThreshold,
) -> Result<EvalReport, EvalError> {
    let views: Vec<SceneView<'_>> = records
        .iter()
        .map(|r| (r.detections.as_slice(), r.gt.as_slice(), r.axis.as_ref()))
        .collect();
    let mut report = sweep(&views, th)?;
    report.scenes = records;
    Ok(report)
}

/// Separate PR curves per occlusion bin. Bins without ground truth are omitted.
pub fn pr_curve_by_occlusion(
    records: &[SceneRecord],
    th: &CorrectnessThreshold,
) -> Result<Vec<(OcclusionBin, EvalReport)>, EvalError> {
    let mut out = Vec::new();
    for bin in OcclusionBin::ALL {
        let members: Vec<SceneRecord> = records
            .iter()
            .filter(|r| r.occlusion_bin == Some(bin))
            .cloned()
            .collect();
        match pr_curve_records(members, th) {
            Ok(report) => out.push((bin, report)),
            Err(EvalError::NoGroundTruth) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Fraction of the full cloud that is not observed.
pub fn occlusion_degree(full: &PointCloud, observed: &PointCloud) -> Result<f64, EvalError> {
    occlusion_degree_from_counts(full.len(), observed.len())
}

pub fn occlusion_degree_from_counts(full: usize, observed: usize) -> Result<f64, EvalError> {
    if full == 0 {
        return Err(EvalError::EmptyFullCloud);
    }
    if observed > full {
        return Err(EvalError::ObservedExceedsFull { observed, full });
    }
    Ok(1.0 - observed as f64 / full as f64)
}

/// Orthonormal in-plane basis for a unit normal.
pub(crate) fn plane_basis(normal: &Vec3) -> (Vec3, Vec3) {
    let helper = if normal.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = normal.cross(&helper).normalize();
    let v = normal.cross(&u);
    (u, v)
}

/// Perimeter of the convex hull of the band points projected into the plane.
pub fn intersection_circumference(full: &PointCloud, plane: &Plane, band: f64) -> f64 {
    let (u, v) = plane_basis(&plane.normal());
    let projected: Vec<[f64; 2]> = full
        .points
        .iter()
        .filter(|p| plane.signed_distance(p).abs() <= band)
        .map(|p| [p.dot(&u), p.dot(&v)])
        .collect();
    if projected.len() < 3 {
        return 0.0;
    }
    hull_perimeter(&convex_hull(projected))
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

pub fn hull_perimeter(hull: &[[f64; 2]]) -> f64 {
    if hull.len() < 2 {
        return 0.0;
    }
    hull.iter()
        .zip(hull.iter().cycle().skip(1))
        .map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        .sum()
}
