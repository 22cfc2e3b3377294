//! Correspondence-style reference detector.
//!
//! Candidate planes are perpendicular bisectors of point pairs; each is
//! scored by the share of points whose mirror image lands next to another
//! point. It only looks at geometry, so it loses the plane once occlusion
//! removes the mirror partners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::SymmetryDetection;
use crate::geometry::{angle_between_normals, Plane, PointCloud};
use crate::grid::SpatialGrid;

/// Clouds up to this size use every point pair.
pub const EXHAUSTIVE_LIMIT: usize = 200;

/// Kept planes must differ from each other by more than this angle (degrees) or the inlier radius in offset.
pub const SUPPRESSION_ANGLE_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid baseline configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub pair_sample_count: usize,
    pub chamfer_inlier_radius: f64,
    pub score_threshold: f64,
    pub rng_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            pair_sample_count: 5000,
            chamfer_inlier_radius: 0.005,
            score_threshold: 0.3,
            rng_seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.pair_sample_count == 0
            || !(self.chamfer_inlier_radius > 0.0)
            || !(self.score_threshold > 0.0 && self.score_threshold <= 1.0)
        {
            return Err(BaselineError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Share of points whose reflection has a neighbor within `radius`.
pub fn symmetry_score(
    cloud: &PointCloud,
    grid: &SpatialGrid<'_>,
    plane: &Plane,
    radius: f64,
) -> f64 {
    let hits = cloud
        .points
        .iter()
        .filter(|p| grid.any_within(&plane.reflect(p), radius))
        .count();
    hits as f64 / cloud.len() as f64
}

/// The score, or `None` as soon as it can no longer reach `threshold`.
fn score_at_least(
    cloud: &PointCloud,
    grid: &SpatialGrid<'_>,
    plane: &Plane,
    radius: f64,
    threshold: f64,
) -> Option<f64> {
    let n = cloud.len();
    // fewest hits that still compare >= threshold in floating point
    let mut needed = ((threshold * n as f64).ceil() as usize).min(n);
    while needed > 0 && (needed - 1) as f64 / n as f64 >= threshold {
        needed -= 1;
    }
    let max_misses = n - needed;
    let mut misses = 0;
    for p in &cloud.points {
        if !grid.any_within(&plane.reflect(p), radius) {
            misses += 1;
            if misses > max_misses {
                return None;
            }
        }
    }
    let score = (n - misses) as f64 / n as f64;
    (score >= threshold).then_some(score)
}

fn candidate_pairs(n: usize, cfg: &OracleConfig) -> Vec<(usize, usize)> {
    if n <= EXHAUSTIVE_LIMIT {
        return (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    (0..cfg.pair_sample_count)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            (i, j)
        })
        .collect()
}

/// Planes scoring at least `score_threshold`, best first, after suppressing near-duplicates.
pub fn brute_detect(
    cloud: &PointCloud,
    cfg: &OracleConfig,
) -> Result<Vec<(Plane, f64)>, BaselineError> {
    cfg.validate()?;
    if cloud.len() < 2 {
        return Err(BaselineError::TooFewPoints(cloud.len()));
    }
    let grid = SpatialGrid::new(&cloud.points, cfg.chamfer_inlier_radius);
    let mut scored: Vec<(Plane, f64)> = candidate_pairs(cloud.len(), cfg)
        .into_iter()
        .filter_map(|(i, j)| {
            let (p, q) = (cloud.points[i], cloud.points[j]);
            Plane::through_point(&((p + q) * 0.5), q - p).ok()
        })
        .filter_map(|plane| {
            score_at_least(
                cloud,
                &grid,
                &plane,
                cfg.chamfer_inlier_radius,
                cfg.score_threshold,
            )
            .map(|s| (plane, s))
        })
        .collect();
    // stable: equal scores keep enumeration order
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut kept: Vec<(Plane, f64)> = Vec::new();
    for (plane, score) in scored {
        let distinct = kept.iter().all(|(k, _)| {
            angle_between_normals(&k.normal(), &plane.normal()) > SUPPRESSION_ANGLE_DEG
                || (k.offset() - plane.offset()).abs() > cfg.chamfer_inlier_radius
        });
        if distinct {
            kept.push((plane, score));
        }
    }
    Ok(kept)
}

/// Baseline planes as detections, with the symmetry score as confidence.
pub fn as_detections(planes: &[(Plane, f64)]) -> Vec<SymmetryDetection> {
    planes
        .iter()
        .map(|(plane, score)| SymmetryDetection {
            plane: *plane,
            confidence: *score,
            support: 0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::synth::{generate, Pose, ShapeKind, ShapeSpec};
    use rand_distr::{Distribution, UnitSphere};

    #[test]
    fn two_points_give_their_bisector() {
        let cloud = PointCloud::new(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)]);
        let cfg = OracleConfig {
            chamfer_inlier_radius: 0.01,
            ..OracleConfig::default()
        };
        let planes = brute_detect(&cloud, &cfg).unwrap();
        assert_eq!(planes[0].0.to_array(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(planes[0].1, 1.0);
    }

    #[test]
    fn early_exit_agrees_with_the_full_score() {
        let cloud = generate(&ShapeSpec {
            kind: ShapeKind::MirroredBlob,
            dimensions: vec![0.05, 0.07, 0.09],
            pose: Pose::default(),
            sample_count: 300,
            rng_seed: 4,
        })
        .unwrap();
        let radius = 0.006;
        let grid = SpatialGrid::new(&cloud.points, radius);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = Vec3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let plane = Plane::canonicalize(
                Vec3::x() + n * rng.random::<f64>(),
                rng.random_range(-0.01..0.01),
            )
            .unwrap();
            let full = symmetry_score(&cloud, &grid, &plane, radius);
            for th in [0.1, 0.3, 0.5, 0.9, full] {
                let expected = (full >= th).then_some(full);
                assert_eq!(score_at_least(&cloud, &grid, &plane, radius, th), expected);
            }
        }
    }

    #[test]
    fn too_few_points() {
        let cloud = PointCloud::new(vec![Vec3::zeros()]);
        assert_eq!(
            brute_detect(&cloud, &OracleConfig::default()),
            Err(BaselineError::TooFewPoints(1))
        );
    }

    #[test]
    fn dense_box_yields_its_three_planes() {
        let spec = ShapeSpec {
            kind: ShapeKind::Box,
            dimensions: vec![1.0, 1.0, 1.0],
            pose: Pose::default(),
            sample_count: 600,
            rng_seed: 21,
        };
        let cloud = generate(&spec).unwrap();
        let cfg = OracleConfig {
            // more than all 179,700 pairs on average, so every axis plane has near-exact bisectors
            pair_sample_count: 200_000,
            chamfer_inlier_radius: 0.1,
            score_threshold: 0.9,
            rng_seed: 1,
        };
        let planes = brute_detect(&cloud, &cfg).unwrap();
        for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
            let found = planes.iter().find(|(p, _)| {
                angle_between_normals(&p.normal(), &axis) < SUPPRESSION_ANGLE_DEG
                    && p.offset() < cfg.chamfer_inlier_radius
            });
            let (_, score) = found.unwrap_or_else(|| {
                panic!(
                    "no plane near {axis:?}: {:?}",
                    &planes[..planes.len().min(10)]
                )
            });
            assert!(*score >= 0.95, "axis {axis:?} score {score}");
        }
    }

    #[test]
    fn asymmetric_ellipsoid_scores_low() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<Vec3> = (0..400)
                .map(|_| {
                    let u: [f64; 3] = UnitSphere.sample(&mut rng);
                    let r: f64 = rng.random::<f64>().cbrt();
                    let jitter = Vec3::new(
                        rng.random_range(-0.01..0.01),
                        rng.random_range(-0.01..0.01),
                        rng.random_range(-0.01..0.01),
                    );
                    Vec3::new(0.3 * u[0] * r, 0.5 * u[1] * r, 0.8 * u[2] * r) + jitter
                })
                .collect();
            let cloud = PointCloud::new(points);
            let cfg = OracleConfig {
                pair_sample_count: 3000,
                chamfer_inlier_radius: 0.02,
                score_threshold: 0.05,
                rng_seed: seed,
            };
            let planes = brute_detect(&cloud, &cfg).unwrap();
            assert!(
                planes.iter().all(|(_, s)| *s < 0.9),
                "seed {seed}: best {:?}",
                planes.first()
            );
        }
    }

    #[test]
    fn score_is_invariant_under_rigid_motion() {
        let spec = ShapeSpec {
            kind: ShapeKind::MirroredBlob,
            dimensions: vec![0.05, 0.07, 0.09],
            pose: Pose::default(),
            sample_count: 150,
            rng_seed: 2,
        };
        let cloud = generate(&spec).unwrap();
        let iso = Pose {
            rotation: [0.4, 1.1, -0.3],
            translation: [0.3, -0.2, 0.7],
        }
        .isometry();
        let moved = cloud.transformed(&iso);
        let cfg = OracleConfig {
            chamfer_inlier_radius: 0.004,
            score_threshold: 0.1,
            ..OracleConfig::default()
        };
        let a = brute_detect(&cloud, &cfg).unwrap();
        let b = brute_detect(&moved, &cfg).unwrap();
        assert!((a[0].1 - b[0].1).abs() <= 1e-6);
        let expected = a[0].0.transformed(&iso);
        assert!(angle_between_normals(&expected.normal(), &b[0].0.normal()) < 1e-6);
        assert!((expected.offset() - b[0].0.offset()).abs() < 1e-9);
    }

    #[test]
    fn best_plane_on_clean_blob_is_the_construction_plane() {
        let spec = ShapeSpec {
            kind: ShapeKind::MirroredBlob,
            dimensions: vec![0.05, 0.07, 0.09],
            pose: Pose {
                rotation: [0.2, -0.9, 0.5],
                translation: [0.1, 0.05, 0.3],
            },
            sample_count: 200,
            rng_seed: 8,
        };
        let cloud = generate(&spec).unwrap();
        let cfg = OracleConfig {
            chamfer_inlier_radius: 0.003,
            score_threshold: 0.5,
            ..OracleConfig::default()
        };
        let best = brute_detect(&cloud, &cfg).unwrap()[0].0;
        let gt = cloud.gt_planes[0];
        assert!(angle_between_normals(&best.normal(), &gt.normal()) < 0.5);
        assert!((best.offset() - gt.offset()).abs() < 1e-3);
    }
}
