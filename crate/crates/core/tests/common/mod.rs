//! Scene fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Isometry3, Translation3};
use occsym_core::evaluation::SceneRecord;
use occsym_core::fusion::SymmetryDetection;
use occsym_core::geometry::{Plane, PointCloud, Vec3};
use occsym_core::synth::{
    generate, occlude, random_rotation, OcclusionSpec, Pose, ShapeKind, ShapeSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

/// A randomly posed mirrored blob whose symmetry plane sits 0.1 to 0.3 m
/// from the origin.
pub fn posed_blob_spec(seed: u64, sample_count: usize) -> ShapeSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xb10b);
    let semi: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.1)).collect();
    let rotation = random_rotation(&mut rng);
    let local = Vec3::new(
        rng.random_range(0.1..0.3),
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
    );
    let iso = Isometry3::from_parts(Translation3::from(rotation * local), rotation);
    ShapeSpec {
        kind: ShapeKind::MirroredBlob,
        dimensions: semi,
        pose: Pose::from_isometry(&iso),
        sample_count,
        rng_seed: seed,
    }
}

pub struct OccludedScene {
    pub full: PointCloud,
    pub observed: PointCloud,
    pub degree: f64,
}

/// Removes `degree` of the points with a halfspace cut in a random direction.
pub fn halfspace_occluded(spec: &ShapeSpec, degree: f64, seed: u64) -> OccludedScene {
    let full = generate(spec).expect("valid spec");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    let normal: [f64; 3] = UnitSphere.sample(&mut rng);
    let occ = occlude(
        &full,
        &OcclusionSpec::Halfspace {
            normal,
            offset: None,
            remove_fraction: Some(degree),
        },
    )
    .expect("something stays visible");
    OccludedScene {
        full,
        observed: occ.observed,
        degree: occ.degree,
    }
}

/// Ground-truth planes with at least `min_points` observed points within `eps1`.
pub fn surviving_planes(observed: &PointCloud, eps1: f64, min_points: usize) -> Vec<Plane> {
    observed
        .gt_planes
        .iter()
        .filter(|pl| {
            observed
                .points
                .iter()
                .filter(|p| pl.signed_distance(p).abs() <= eps1)
                .count()
                >= min_points
        })
        .copied()
        .collect()
}

pub fn record(
    name: String,
    gt: Vec<Plane>,
    detections: Vec<SymmetryDetection>,
    degree: f64,
) -> SceneRecord {
    SceneRecord::new(name, gt, detections).with_occlusion(degree)
}
