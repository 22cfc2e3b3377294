//! Fuses per-point plane proposals into symmetry detections.
//!
//! Every confident point proposes the plane through itself with its
//! predicted normal. Proposals live in a 4-d space `(n_x, n_y, n_z, d)` and
//! all closeness tests use the L1 metric there. Detection repeats three
//! steps until too few active points remain:
//!
//! 1. sample `sample_count` active points and keep the one whose proposal
//!    covers the most active proposals within `dist1`;
//! 2. collect its vote, the proposals within `dist1` of it;
//! 3. refit by iterated inlier means, score the result by how much of the
//!    vote it still covers, then scrub every active point within `dist2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CompensatedSum, GeometryError, Plane, PointCloud, Vec3};
use crate::supervision::PerPointPrediction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("prediction has {predictions} entries for {points} points")]
    LengthMismatch { predictions: usize, points: usize },
    #[error("initial proposal covers no proposals")]
    EmptyCoverage,
    #[error("invalid RANSAC configuration: {0}")]
    InvalidConfig(String),
}

/// A plane hypothesis in canonical Hesse form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub plane: Plane,
}

impl Proposal {
    pub fn params(&self) -> [f64; 4] {
        self.plane.to_array()
    }
}

impl From<Plane> for Proposal {
    fn from(plane: Plane) -> Self {
        Proposal { plane }
    }
}

pub fn make_proposal(point: &Vec3, predicted_normal: &Vec3) -> Result<Proposal, FusionError> {
    Ok(Proposal {
        plane: Plane::through_point(point, *predicted_normal)?,
    })
}

/// L1 distance between proposal 4-vectors; `offset_scale` weights the offset term.
pub fn proposal_distance_scaled(a: &Proposal, b: &Proposal, offset_scale: f64) -> f64 {
    let (a, b) = (a.params(), b.params());
    (a[0] - b[0]).abs()
        + (a[1] - b[1]).abs()
        + (a[2] - b[2]).abs()
        + offset_scale * (a[3] - b[3]).abs()
}

pub fn proposal_distance(a: &Proposal, b: &Proposal) -> f64 {
    proposal_distance_scaled(a, b, 1.0)
}

/// Indices of the proposals within `radius` of `candidate`.
pub fn coverage(candidate: &Proposal, proposals: &[Proposal], radius: f64) -> Vec<usize> {
    coverage_scaled(candidate, proposals, radius, 1.0)
}

fn coverage_scaled(
    candidate: &Proposal,
    proposals: &[Proposal],
    radius: f64,
    offset_scale: f64,
) -> Vec<usize> {
    proposals
        .iter()
        .enumerate()
        .filter(|(_, p)| proposal_distance_scaled(candidate, p, offset_scale) <= radius)
        .map(|(i, _)| i)
        .collect()
}

fn count_coverage(
    candidate: &Proposal,
    proposals: &[Proposal],
    radius: f64,
    offset_scale: f64,
) -> usize {
    proposals
        .iter()
        .filter(|p| proposal_distance_scaled(candidate, p, offset_scale) <= radius)
        .count()
}

/// What the covered-and-voted count is divided by to form a confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceDenominator {
    /// Size of the candidate's vote. Any coherent cluster scores near 1.
    Vote,
    /// Number of confident points before any scrubbing, so small clusters
    /// left over after the main planes score low.
    #[default]
    ActiveSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Vote and coverage radius.
    pub dist1: f64,
    /// Scrub radius.
    pub dist2: f64,
    /// Points need confidence strictly above this to propose.
    pub p_threshold: f64,
    /// Candidates drawn per round.
    pub sample_count: usize,
    /// Rounds stop once fewer active points remain; smaller supports are not emitted.
    pub min_points: usize,
    pub max_refit_iters: usize,
    pub rng_seed: u64,
    /// Multiplier on the offset term of the proposal metric.
    pub offset_scale: f64,
    pub confidence_denominator: ConfidenceDenominator,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            dist1: 0.6,
            dist2: 1.3,
            p_threshold: 0.6,
            sample_count: 10,
            min_points: 10,
            max_refit_iters: 20,
            rng_seed: 0,
            offset_scale: 1.0,
            confidence_denominator: ConfidenceDenominator::ActiveSet,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |msg: String| Err(FusionError::InvalidConfig(msg));
        if !(self.dist1 > 0.0 && self.dist2 > self.dist1) {
            return bad(format!(
                "need dist2 > dist1 > 0, got dist1={} dist2={}",
                self.dist1, self.dist2
            ));
        }
        if self.sample_count == 0 || self.min_points == 0 || self.max_refit_iters == 0 {
            return bad("sample_count, min_points and max_refit_iters must be at least 1".into());
        }
        if !(self.offset_scale > 0.0) {
            return bad(format!(
                "offset_scale {} must be positive",
                self.offset_scale
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryDetection {
    pub plane: Plane,
    pub confidence: f64,
    pub support: usize,
}

/// Canonical plane from the componentwise mean of the selected proposals.
fn mean_proposal(proposals: &[Proposal], selected: &[usize]) -> Result<Proposal, FusionError> {
    let mut sums = [CompensatedSum::default(); 4];
    for &i in selected {
        for (s, v) in sums.iter_mut().zip(proposals[i].params()) {
            s.add(v);
        }
    }
    let k = selected.len() as f64;
    let normal = Vec3::new(sums[0].value(), sums[1].value(), sums[2].value()) / k;
    let offset = sums[3].value() / k;
    let norm = normal.norm();
    if !(norm > crate::geometry::MIN_NORMAL_NORM) {
        return Err(GeometryError::DegenerateNormal(norm).into());
    }
    Ok(Proposal {
        plane: Plane::canonicalize(normal / norm, offset)?,
    })
}

/// Iterated inlier-mean refit.
///
/// The initial proposal seeds the first mean; among the mean iterates, the
/// one with the largest coverage wins (ties go to the later iterate). The
/// initial proposal is returned only when no mean iterate covers anything.
pub fn refit(
    initial: &Proposal,
    proposals: &[Proposal],
    cfg: &RansacConfig,
) -> Result<(Proposal, Vec<usize>), FusionError> {
    let seed_cover = coverage_scaled(initial, proposals, cfg.dist1, cfg.offset_scale);
    if seed_cover.is_empty() {
        return Err(FusionError::EmptyCoverage);
    }
    // the raw candidate only seeds the optimizer; it competes for the answer
    // only when no mean step is possible
    let mut best: Option<(Proposal, Vec<usize>)> = None;
    let mut previous = seed_cover.clone();
    let mut current = match mean_proposal(proposals, &seed_cover) {
        Ok(p) => p,
        Err(_) => return Ok((*initial, seed_cover)),
    };
    for _ in 0..cfg.max_refit_iters {
        let covered = coverage_scaled(&current, proposals, cfg.dist1, cfg.offset_scale);
        if covered.is_empty() {
            break;
        }
        if best.as_ref().is_none_or(|(_, b)| covered.len() >= b.len()) {
            best = Some((current, covered.clone()));
        }
        if covered == previous {
            break;
        }
        let next = match mean_proposal(proposals, &covered) {
            Ok(p) => p,
            Err(_) => break,
        };
        previous = covered;
        current = next;
    }
    Ok(best.unwrap_or((*initial, seed_cover)))
}

/// Runs the three-step RANSAC over the confident points of `cloud`.
pub fn detect(
    cloud: &PointCloud,
    pred: &PerPointPrediction,
    cfg: &RansacConfig,
) -> Result<Vec<SymmetryDetection>, FusionError> {
    cfg.validate()?;
    if pred.confidence.len() != cloud.len() || pred.normal.len() != cloud.len() {
        return Err(FusionError::LengthMismatch {
            predictions: pred.confidence.len().min(pred.normal.len()),
            points: cloud.len(),
        });
    }

    // (point index, proposal), ascending by point index
    let mut active: Vec<(usize, Proposal)> = cloud
        .points
        .iter()
        .zip(pred.confidence.iter().zip(&pred.normal))
        .enumerate()
        .filter(|(_, (_, (&c, _)))| c > cfg.p_threshold)
        .filter_map(|(i, (p, (_, n)))| make_proposal(p, n).ok().map(|prop| (i, prop)))
        .collect();

    let initial_active = active.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut detections = Vec::new();

    while active.len() >= cfg.min_points {
        let proposals: Vec<Proposal> = active.iter().map(|(_, p)| *p).collect();

        // step 1: candidate with the widest coverage among the sample
        let amount = cfg.sample_count.min(active.len());
        let mut sample = rand::seq::index::sample(&mut rng, active.len(), amount).into_vec();
        sample.sort_unstable();
        let mut chosen = sample[0];
        let mut chosen_count = 0;
        for &s in &sample {
            let count = count_coverage(&proposals[s], &proposals, cfg.dist1, cfg.offset_scale);
            if count > chosen_count {
                chosen = s;
                chosen_count = count;
            }
        }

        // step 2: the vote
        let candidate = proposals[chosen];
        let vote = coverage_scaled(&candidate, &proposals, cfg.dist1, cfg.offset_scale);

        // step 3: refit, score, scrub
        let (fitted, covered) = refit(&candidate, &proposals, cfg)?;
        if covered.len() >= cfg.min_points {
            let in_vote = covered
                .iter()
                .filter(|i| vote.binary_search(i).is_ok())
                .count();
            let denominator = match cfg.confidence_denominator {
                ConfidenceDenominator::Vote => vote.len(),
                ConfidenceDenominator::ActiveSet => initial_active,
            };
            detections.push(SymmetryDetection {
                plane: fitted.plane,
                confidence: in_vote as f64 / denominator as f64,
                support: covered.len(),
            });
        }

        let before = active.len();
        active.retain(|(_, p)| proposal_distance_scaled(p, &fitted, cfg.offset_scale) > cfg.dist2);
        if active.len() == before {
            let mut drop = covered;
            drop.push(chosen);
            drop.sort_unstable();
            let mut position = 0;
            active.retain(|_| {
                let keep = drop.binary_search(&position).is_err();
                position += 1;
                keep
            });
        }
    }
    Ok(detections)
}
