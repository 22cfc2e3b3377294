//! On-plane labels and the two training losses with analytic gradients.
//!
//! The on-plane loss is a per-point binary cross-entropy against the
//! `eps1` band of every ground-truth plane. The normal loss is an L1 penalty
//! between predicted normals and the plane normal over the wider `eps2` band,
//! restricted to points the model already considers on-plane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CompensatedSum, PointCloud, Vec3};

/// Confidences are clamped to `[CONFIDENCE_FLOOR, 1 - CONFIDENCE_FLOOR]` before any logarithm.
pub const CONFIDENCE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SupervisionError {
    #[error("cloud carries no ground-truth symmetry planes")]
    MissingGroundTruth,
    #[error("prediction has {predictions} entries but labels cover {points} points")]
    LengthMismatch { predictions: usize, points: usize },
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
}

/// Which points enter the on-plane cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnPlaneMask {
    /// Both sums only see points with `P(p) <= p_threshold`.
    ThresholdMasked,
    /// Plain cross-entropy over every point.
    #[default]
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub p_threshold: f64,
    pub lambda: f64,
    pub op_mask_mode: OnPlaneMask,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            eps1: 0.01,
            eps2: 0.02,
            p_threshold: 0.6,
            lambda: 10.0,
            op_mask_mode: OnPlaneMask::Standard,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), SupervisionError> {
        if !(self.eps1 > 0.0 && self.eps1 <= self.eps2) {
            return Err(SupervisionError::InvalidConfig(format!(
                "need 0 < eps1 <= eps2, got eps1={} eps2={}",
                self.eps1, self.eps2
            )));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(SupervisionError::InvalidConfig(format!(
                "p_threshold {} outside (0, 1)",
                self.p_threshold
            )));
        }
        // lambda = 0 is accepted so the on-plane term can be isolated
        if !(self.lambda >= 0.0) {
            return Err(SupervisionError::InvalidConfig(format!(
                "lambda {} is negative",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Per-point on-plane confidence and predicted plane normal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerPointPrediction {
    pub confidence: Vec<f64>,
    pub normal: Vec<Vec3>,
}

impl PerPointPrediction {
    pub fn new(confidence: Vec<f64>, normal: Vec<Vec3>) -> Self {
        assert_eq!(
            confidence.len(),
            normal.len(),
            "confidence and normal columns differ in length"
        );
        PerPointPrediction { confidence, normal }
    }

    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }
}

pub fn clamp_confidence(p: f64) -> f64 {
    p.clamp(CONFIDENCE_FLOOR, 1.0 - CONFIDENCE_FLOOR)
}

/// Band membership for one ground-truth plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneLabels {
    /// Within `eps1` of the plane.
    pub on_plane_eps1: Vec<bool>,
    /// Within `eps2` of the plane.
    pub on_plane_eps2: Vec<bool>,
    pub gt_normal: Vec3,
}

impl PlaneLabels {
    pub fn eps1_indices(&self) -> Vec<usize> {
        indices(&self.on_plane_eps1)
    }

    pub fn eps2_indices(&self) -> Vec<usize> {
        indices(&self.on_plane_eps2)
    }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionLabels {
    pub point_count: usize,
    pub planes: Vec<PlaneLabels>,
}

pub fn make_labels(
    cloud: &PointCloud,
    cfg: &LossConfig,
) -> Result<SupervisionLabels, SupervisionError> {
    if !cloud.has_ground_truth() {
        return Err(SupervisionError::MissingGroundTruth);
    }
    let planes = cloud
        .gt_planes
        .iter()
        .map(|plane| {
            let dist: Vec<f64> = cloud
                .points
                .iter()
                .map(|p| plane.signed_distance(p).abs())
                .collect();
            PlaneLabels {
                on_plane_eps1: dist.iter().map(|&d| d <= cfg.eps1).collect(),
                on_plane_eps2: dist.iter().map(|&d| d <= cfg.eps2).collect(),
                gt_normal: plane.normal(),
            }
        })
        .collect();
    Ok(SupervisionLabels {
        point_count: cloud.len(),
        planes,
    })
}

/// Loss value with gradients with respect to every prediction entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_confidence: Vec<f64>,
    pub grad_normal: Vec<Vec3>,
}

impl LossOutput {
    fn zeros(n: usize) -> Self {
        LossOutput {
            value: 0.0,
            grad_confidence: vec![0.0; n],
            grad_normal: vec![Vec3::zeros(); n],
        }
    }
}

fn check_lengths(
    pred: &PerPointPrediction,
    labels: &SupervisionLabels,
) -> Result<(), SupervisionError> {
    if pred.confidence.len() != labels.point_count || pred.normal.len() != labels.point_count {
        return Err(SupervisionError::LengthMismatch {
            predictions: pred.confidence.len().min(pred.normal.len()),
            points: labels.point_count,
        });
    }
    Ok(())
}

/// Cross-entropy over on-plane labels, summed over ground-truth planes.
///
/// Only `grad_confidence` is populated. Inputs outside the clamp range get a
/// zero gradient, matching the derivative of the clamp.
pub fn loss_on_plane(
    pred: &PerPointPrediction,
    labels: &SupervisionLabels,
    cfg: &LossConfig,
) -> Result<LossOutput, SupervisionError> {
    check_lengths(pred, labels)?;
    let mut out = LossOutput::zeros(labels.point_count);
    let mut total = CompensatedSum::default();
    for plane in &labels.planes {
        let mut term = CompensatedSum::default();
        for (i, &raw) in pred.confidence.iter().enumerate() {
            if cfg.op_mask_mode == OnPlaneMask::ThresholdMasked && raw > cfg.p_threshold {
                continue;
            }
            let p = clamp_confidence(raw);
            let inside_clamp = p == raw;
            if plane.on_plane_eps1[i] {
                term.add(-p.ln());
                if inside_clamp {
                    out.grad_confidence[i] -= 1.0 / p;
                }
            } else {
                term.add(-(1.0 - p).ln());
                if inside_clamp {
                    out.grad_confidence[i] += 1.0 / (1.0 - p);
                }
            }
        }
        total.add(term.value());
    }
    out.value = total.value();
    Ok(out)
}

fn l1(v: &Vec3) -> f64 {
    v.x.abs() + v.y.abs() + v.z.abs()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sign-folded L1 normal loss over the `eps2` band of each plane.
///
/// Each included point is compared against whichever of `+n_gt` and `-n_gt`
/// is closer in L1; ties go to `+n_gt`. Only `grad_normal` is populated.
pub fn loss_normal(
    pred: &PerPointPrediction,
    labels: &SupervisionLabels,
    cfg: &LossConfig,
) -> Result<LossOutput, SupervisionError> {
    check_lengths(pred, labels)?;
    let mut out = LossOutput::zeros(labels.point_count);
    let mut total = CompensatedSum::default();
    for plane in &labels.planes {
        let mut term = CompensatedSum::default();
        for i in 0..labels.point_count {
            if !plane.on_plane_eps2[i] || !(pred.confidence[i] > cfg.p_threshold) {
                continue;
            }
            let n = pred.normal[i];
            let plus = n - plane.gt_normal;
            let minus = n + plane.gt_normal;
            let diff = if l1(&minus) < l1(&plus) { minus } else { plus };
            term.add(l1(&diff));
            out.grad_normal[i] += diff.map(sign);
        }
        total.add(term.value());
    }
    out.value = total.value();
    Ok(out)
}

/// `loss_on_plane + lambda * loss_normal`, gradients combined the same way.
pub fn loss_total(
    pred: &PerPointPrediction,
    labels: &SupervisionLabels,
    cfg: &LossConfig,
) -> Result<LossOutput, SupervisionError> {
    let op = loss_on_plane(pred, labels, cfg)?;
    let nv = loss_normal(pred, labels, cfg)?;
    Ok(LossOutput {
        value: op.value + cfg.lambda * nv.value,
        grad_confidence: op.grad_confidence,
        grad_normal: nv.grad_normal.into_iter().map(|g| g * cfg.lambda).collect(),
    })
}
