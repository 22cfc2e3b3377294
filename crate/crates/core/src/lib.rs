//! Reflective symmetry plane detection for occluded point clouds.
//!
//! Each confident point, together with its predicted plane normal, proposes
//! one plane. Proposals are fused by a three-step RANSAC into symmetry
//! detections with confidence scores, and detections are scored against
//! ground truth with precision/recall curves stratified by occlusion.

// `!(x > 0.0)` style guards are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod supervision;
pub mod synth;

pub use baseline::{brute_detect, OracleConfig};
pub use evaluation::{
    match_scene, pr_curve, CorrectnessThreshold, EvalReport, MatchOutcome, PrPoint, Role,
};
pub use fusion::{
    coverage, detect, make_proposal, proposal_distance, refit, ConfidenceDenominator, Proposal,
    RansacConfig, SymmetryDetection,
};
pub use geometry::{angle_between_normals, reflect, signed_distance, Plane, PointCloud, Vec3};
pub use supervision::{
    loss_normal, loss_on_plane, loss_total, make_labels, LossConfig, PerPointPrediction,
    SupervisionLabels,
};
pub use synth::{
    generate, occlude, oracle_predict, OcclusionSpec, OracleNoise, ShapeKind, ShapeSpec,
};
