//! Synthetic scenes with known symmetry planes: shape sampling, occlusion
//! and a noisy ground-truth oracle standing in for a trained network.

use nalgebra::{Isometry3, Matrix3, SymmetricEigen, Translation3, UnitQuaternion};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::occlusion_degree_from_counts;
use crate::geometry::{Plane, PointCloud, SymmetryAxis, Vec3};
use crate::supervision::{clamp_confidence, PerPointPrediction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid shape spec: {0}")]
    InvalidSpec(String),
    #[error("invalid occlusion spec: {0}")]
    InvalidOcclusion(String),
    #[error("occlusion removed every point")]
    FullyOccluded,
    #[error("cloud carries no ground-truth symmetry planes")]
    MissingGroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    /// `dimensions = [size_x, size_y, size_z]`, full edge lengths.
    Box,
    /// `dimensions = [radius, height]`, axis along local z.
    Cylinder,
    /// `dimensions = [semi_x, semi_y, semi_z]` of the underlying lumpy ellipsoid; mirrored across local x = 0.
    MirroredBlob,
}

/// Rigid placement: `rotation` is an axis-angle vector in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl Pose {
    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(Vec3::from(self.translation)),
            UnitQuaternion::from_scaled_axis(Vec3::from(self.rotation)),
        )
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Pose {
        Pose {
            rotation: iso.rotation.scaled_axis().into(),
            translation: iso.translation.vector.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub dimensions: Vec<f64>,
    #[serde(default)]
    pub pose: Pose,
    pub sample_count: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let expected = match self.kind {
            ShapeKind::Box | ShapeKind::MirroredBlob => 3,
            ShapeKind::Cylinder => 2,
        };
        if self.dimensions.len() != expected {
            return Err(SynthError::InvalidSpec(format!(
                "{:?} needs {expected} dimensions, got {}",
                self.kind,
                self.dimensions.len()
            )));
        }
        if !self.dimensions.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(SynthError::InvalidSpec(
                "dimensions must be positive".into(),
            ));
        }
        if self.sample_count < 100 {
            return Err(SynthError::InvalidSpec(format!(
                "sample_count {} is below 100",
                self.sample_count
            )));
        }
        if !self
            .pose
            .rotation
            .iter()
            .chain(&self.pose.translation)
            .all(|v| v.is_finite())
        {
            return Err(SynthError::InvalidSpec("pose must be finite".into()));
        }
        Ok(())
    }
}

/// Samples the shape's surface area-uniformly and attaches its symmetry planes.
pub fn generate(spec: &ShapeSpec) -> Result<PointCloud, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let d = &spec.dimensions;
    let (points, planes) = match spec.kind {
        ShapeKind::Box => (
            sample_box(&mut rng, [d[0], d[1], d[2]], spec.sample_count),
            axis_planes(3),
        ),
        ShapeKind::Cylinder => (
            sample_cylinder(&mut rng, d[0], d[1], spec.sample_count),
            axis_planes(3),
        ),
        ShapeKind::MirroredBlob => (
            sample_mirrored_blob(&mut rng, [d[0], d[1], d[2]], spec.sample_count),
            axis_planes(1),
        ),
    };
    let mut local = PointCloud::with_planes(points, planes);
    if spec.kind == ShapeKind::Cylinder {
        local.gt_axis = Some(SymmetryAxis {
            point: Vec3::zeros(),
            direction: Vec3::z(),
        });
    }
    Ok(local.transformed(&spec.pose.isometry()))
}

/// `x = 0`, `y = 0`, `z = 0`, truncated to `count`.
fn axis_planes(count: usize) -> Vec<Plane> {
    [Vec3::x(), Vec3::y(), Vec3::z()]
        .into_iter()
        .take(count)
        .map(|n| Plane::canonicalize(n, 0.0).expect("axis normal"))
        .collect()
}

fn sample_box(rng: &mut ChaCha8Rng, size: [f64; 3], count: usize) -> Vec<Vec3> {
    let h = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
    // face k is perpendicular to axis k / 2, on the side given by k % 2
    let areas: Vec<f64> = (0..6)
        .map(|k| {
            let axis = k / 2;
            size[(axis + 1) % 3] * size[(axis + 2) % 3]
        })
        .collect();
    let faces = WeightedIndex::new(&areas).expect("positive face areas");
    (0..count)
        .map(|_| {
            let k = faces.sample(rng);
            let axis = k / 2;
            let mut p = [0.0; 3];
            p[axis] = if k % 2 == 0 { h[axis] } else { -h[axis] };
            for other in [(axis + 1) % 3, (axis + 2) % 3] {
                p[other] = rng.random_range(-h[other]..=h[other]);
            }
            Vec3::from(p)
        })
        .collect()
}

fn sample_cylinder(rng: &mut ChaCha8Rng, radius: f64, height: f64, count: usize) -> Vec<Vec3> {
    let lateral = 2.0 * std::f64::consts::PI * radius * height;
    let cap = std::f64::consts::PI * radius * radius;
    let parts = WeightedIndex::new([lateral, cap, cap]).expect("positive areas");
    (0..count)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            match parts.sample(rng) {
                0 => Vec3::new(
                    radius * theta.cos(),
                    radius * theta.sin(),
                    rng.random_range(-height / 2.0..=height / 2.0),
                ),
                part => {
                    let r = radius * rng.random::<f64>().sqrt();
                    let z = if part == 1 {
                        height / 2.0
                    } else {
                        -height / 2.0
                    };
                    Vec3::new(r * theta.cos(), r * theta.sin(), z)
                }
            }
        })
        .collect()
}

const BLOB_LAT: usize = 32;
const BLOB_LON: usize = 64;

/// Triangles of a lumpy, asymmetric ellipsoid.
fn blob_mesh(rng: &mut ChaCha8Rng, semi: [f64; 3]) -> Vec<[Vec3; 3]> {
    let lumps: Vec<(Vec3, f64, f64, f64)> = (0..4)
        .map(|_| {
            let w: [f64; 3] = UnitSphere.sample(rng);
            (
                Vec3::from(w),
                rng.random_range(0.05..0.15),
                rng.random_range(1.0..3.0),
                rng.random_range(0.0..6.3),
            )
        })
        .collect();
    let vertex = |i: usize, j: usize| {
        let theta = std::f64::consts::PI * i as f64 / BLOB_LAT as f64;
        let phi = std::f64::consts::TAU * j as f64 / BLOB_LON as f64;
        let u = Vec3::new(
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        );
        let f: f64 = 1.0
            + lumps
                .iter()
                .map(|(w, a, freq, phase)| {
                    a * (std::f64::consts::PI * freq * u.dot(w) + phase).cos()
                })
                .sum::<f64>();
        Vec3::new(semi[0] * u.x * f, semi[1] * u.y * f, semi[2] * u.z * f)
    };
    let mut tris = Vec::with_capacity(2 * BLOB_LAT * BLOB_LON);
    for i in 0..BLOB_LAT {
        for j in 0..BLOB_LON {
            let jn = (j + 1) % BLOB_LON;
            let (a, b, c, d) = (
                vertex(i, j),
                vertex(i + 1, j),
                vertex(i + 1, jn),
                vertex(i, jn),
            );
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    tris
}

fn triangle_area(t: &[Vec3; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

fn sample_triangle(rng: &mut ChaCha8Rng, t: &[Vec3; 3]) -> Vec3 {
    let r1: f64 = rng.random::<f64>().sqrt();
    let r2: f64 = rng.random();
    t[0] * (1.0 - r1) + t[1] * (r1 * (1.0 - r2)) + t[2] * (r1 * r2)
}

/// Samples the `x >= 0` half of a random blob and mirrors it across `x = 0`.
fn sample_mirrored_blob(rng: &mut ChaCha8Rng, semi: [f64; 3], count: usize) -> Vec<Vec3> {
    let tris = blob_mesh(rng, semi);
    let areas: Vec<f64> = tris.iter().map(triangle_area).collect();
    let pick = WeightedIndex::new(&areas).expect("blob has area");
    let half_count = count / 2;
    let mut half = Vec::with_capacity(half_count);
    while half.len() < half_count + count % 2 {
        let tri = &tris[pick.sample(rng)];
        let p = sample_triangle(rng, tri);
        if p.x >= 0.0 {
            half.push(p);
        }
    }
    let mut points: Vec<Vec3> = half[..half_count].to_vec();
    points.extend(half[..half_count].iter().map(|p| Vec3::new(-p.x, p.y, p.z)));
    if count % 2 == 1 {
        let extra = half[half_count];
        points.push(Vec3::new(0.0, extra.y, extra.z));
    }
    points
}

/// A uniformly random rotation.
pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OcclusionSpec {
    /// Removes points with `normal . p > offset`. With `remove_fraction`
    /// the cut is placed so that exactly that share of points goes.
    Halfspace {
        normal: [f64; 3],
        #[serde(default)]
        offset: Option<f64>,
        #[serde(default)]
        remove_fraction: Option<f64>,
    },
    /// Keeps points whose estimated outward normal faces `view_dir`
    /// (the direction from the object towards the viewer).
    ViewCull { view_dir: [f64; 3] },
    /// Removes points inside any ball. `random_count` extra balls of
    /// `random_radius` are centered on randomly chosen cloud points.
    Patches {
        #[serde(default)]
        patches: Vec<Patch>,
        #[serde(default)]
        random_count: usize,
        #[serde(default)]
        random_radius: f64,
        #[serde(default)]
        rng_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Occluded {
    pub observed: PointCloud,
    /// Index into the full cloud for every observed point, ascending.
    pub kept: Vec<usize>,
    pub degree: f64,
}

pub fn occlude(cloud: &PointCloud, spec: &OcclusionSpec) -> Result<Occluded, SynthError> {
    let n = cloud.len();
    let keep: Vec<bool> = match spec {
        OcclusionSpec::Halfspace {
            normal,
            offset,
            remove_fraction,
        } => {
            let normal = Vec3::from(*normal);
            if !(normal.norm() > 1e-12) {
                return Err(SynthError::InvalidOcclusion(
                    "halfspace normal is zero".into(),
                ));
            }
            let normal = normal.normalize();
            let score: Vec<f64> = cloud.points.iter().map(|p| normal.dot(p)).collect();
            match (offset, remove_fraction) {
                (Some(d), None) => score.iter().map(|s| s <= d).collect(),
                (None, Some(f)) if (0.0..=1.0).contains(f) => {
                    let remove = (f * n as f64).round() as usize;
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
                    let mut keep = vec![true; n];
                    order[..remove].iter().for_each(|&i| keep[i] = false);
                    keep
                }
                _ => {
                    return Err(SynthError::InvalidOcclusion(
                        "halfspace needs exactly one of offset or remove_fraction in [0, 1]".into(),
                    ))
                }
            }
        }
        OcclusionSpec::ViewCull { view_dir } => {
            let view = Vec3::from(*view_dir);
            if !(view.norm() > 1e-12) {
                return Err(SynthError::InvalidOcclusion(
                    "view direction is zero".into(),
                ));
            }
            let view = view.normalize();
            // grazing surfaces count as hidden
            estimate_normals(&cloud.points, 12)
                .iter()
                .map(|nrm| nrm.dot(&view) > 1e-6)
                .collect()
        }
        OcclusionSpec::Patches {
            patches,
            random_count,
            random_radius,
            rng_seed,
        } => {
            let mut balls: Vec<(Vec3, f64)> = patches
                .iter()
                .map(|p| (Vec3::from(p.center), p.radius))
                .collect();
            if *random_count > 0 {
                if n == 0 || !(*random_radius > 0.0) {
                    return Err(SynthError::InvalidOcclusion(
                        "random patches need points and a positive radius".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*rng_seed);
                balls.extend(
                    (0..*random_count)
                        .map(|_| (cloud.points[rng.random_range(0..n)], *random_radius)),
                );
            }
            cloud
                .points
                .iter()
                .map(|p| balls.iter().all(|(c, r)| (p - c).norm() > *r))
                .collect()
        }
    };

    let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    if kept.is_empty() {
        return Err(SynthError::FullyOccluded);
    }
    let observed = PointCloud {
        points: kept.iter().map(|&i| cloud.points[i]).collect(),
        gt_planes: cloud.gt_planes.clone(),
        gt_axis: cloud.gt_axis,
        labels: cloud.labels.as_ref().map(|cols| {
            cols.iter()
                .map(|c| kept.iter().map(|&i| c[i]).collect())
                .collect()
        }),
    };
    let degree = occlusion_degree_from_counts(n, kept.len())
        .map_err(|e| SynthError::InvalidOcclusion(e.to_string()))?;
    Ok(Occluded {
        observed,
        kept,
        degree,
    })
}

/// PCA normals from the `k` nearest neighbors, oriented away from the centroid.
pub fn estimate_normals(points: &[Vec3], k: usize) -> Vec<Vec3> {
    if points.is_empty() {
        return Vec::new();
    }
    let centroid = points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64;
    let k = k.clamp(3, points.len());
    points
        .iter()
        .map(|p| {
            let mut dist: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .map(|(j, q)| ((q - p).norm_squared(), j))
                .collect();
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nbrs = &dist[..k];
            let mean = nbrs.iter().fold(Vec3::zeros(), |a, (_, j)| a + points[*j]) / k as f64;
            let cov = nbrs.iter().fold(Matrix3::zeros(), |a, (_, j)| {
                let d = points[*j] - mean;
                a + d * d.transpose()
            });
            let eig = SymmetricEigen::new(cov);
            let smallest = eig.eigenvalues.imin();
            let mut n: Vec3 = eig.eigenvectors.column(smallest).into();
            let radial = p - centroid;
            if n.dot(&radial) < 0.0 {
                n = -n;
            }
            n
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoise {
    /// Mean angular error of on-plane normals, degrees.
    pub normal_sigma_deg: f64,
    /// Width of the uniform confidence jitter away from 0 or 1.
    pub confidence_noise: f64,
    /// Share of off-plane points that get high confidence and random normals.
    pub false_positive_rate: f64,
    pub rng_seed: u64,
}

impl OracleNoise {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.normal_sigma_deg >= 0.0
            && self.confidence_noise >= 0.0
            && (0.0..1.0).contains(&self.false_positive_rate);
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!(
                "invalid oracle noise {self:?}"
            )))
        }
    }
}

/// Rotates `n` about a random perpendicular axis by `angle` radians.
fn tilt(rng: &mut ChaCha8Rng, n: &Vec3, angle: f64) -> Vec3 {
    let axis = loop {
        let r: [f64; 3] = UnitSphere.sample(rng);
        let r = Vec3::from(r);
        let perp = r - n * n.dot(&r);
        if perp.norm() > 1e-6 {
            break perp.normalize();
        }
    };
    n * angle.cos() + axis.cross(n) * angle.sin()
}

/// Emits the per-point confidence and normal a trained network would.
///
/// Points within `eps1` of their nearest ground-truth plane get confidence
/// in `[1 - confidence_noise, 1]` and that plane's normal tilted by a
/// folded-normal angle whose mean is `normal_sigma_deg`. Remaining points
/// get confidence in `[0, confidence_noise]`, except a
/// `false_positive_rate` share that look on-plane with uniform random normals.
pub fn oracle_predict(
    observed: &PointCloud,
    noise: &OracleNoise,
    eps1: f64,
) -> Result<PerPointPrediction, SynthError> {
    if !observed.has_ground_truth() {
        return Err(SynthError::MissingGroundTruth);
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    // folded N(0, s) has mean s * sqrt(2 / pi)
    let scale = noise.normal_sigma_deg.to_radians() * (std::f64::consts::PI / 2.0).sqrt();
    let tilt_dist = Normal::new(0.0, scale).expect("finite scale");
    let mut confidence = Vec::with_capacity(observed.len());
    let mut normal = Vec::with_capacity(observed.len());
    for p in &observed.points {
        let (dist, plane) = observed
            .gt_planes
            .iter()
            .map(|pl| (pl.signed_distance(p).abs(), pl))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("ground truth present");
        let jitter = noise.confidence_noise * rng.random::<f64>();
        let false_positive = rng.random::<f64>() < noise.false_positive_rate;
        if dist <= eps1 {
            confidence.push(clamp_confidence(1.0 - jitter));
            let angle = tilt_dist.sample(&mut rng).abs();
            normal.push(tilt(&mut rng, &plane.normal(), angle));
        } else if false_positive {
            confidence.push(clamp_confidence(1.0 - jitter));
            let r: [f64; 3] = UnitSphere.sample(&mut rng);
            normal.push(Vec3::from(r));
        } else {
            confidence.push(clamp_confidence(jitter));
            normal.push(plane.normal());
        }
    }
    Ok(PerPointPrediction { confidence, normal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angle_between_normals, reflect};
    use crate::supervision::CONFIDENCE_FLOOR;

    fn spec(kind: ShapeKind, dimensions: Vec<f64>, sample_count: usize, seed: u64) -> ShapeSpec {
        ShapeSpec {
            kind,
            dimensions,
            pose: Pose::default(),
            sample_count,
            rng_seed: seed,
        }
    }

    fn nn_dist(p: &Vec3, cloud: &[Vec3]) -> f64 {
        cloud
            .iter()
            .map(|q| (p - q).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn mean_nn_spacing(cloud: &[Vec3]) -> f64 {
        let total: f64 = cloud
            .iter()
            .enumerate()
            .map(|(i, p)| {
                cloud
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / cloud.len() as f64
    }

    fn chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
        let ab: f64 = a.iter().map(|p| nn_dist(p, b)).sum::<f64>() / a.len() as f64;
        let ba: f64 = b.iter().map(|p| nn_dist(p, a)).sum::<f64>() / b.len() as f64;
        0.5 * (ab + ba)
    }

    #[test]
    fn cylinder_carries_its_axis() {
        let mut s = spec(ShapeKind::Cylinder, vec![0.05, 0.2], 500, 2);
        s.pose = Pose {
            rotation: [0.3, -0.7, 0.2],
            translation: [0.1, 0.0, 0.4],
        };
        let cloud = generate(&s).unwrap();
        let axis = cloud.gt_axis.expect("cylinder axis");
        let on_axis: Vec<bool> = cloud
            .gt_planes
            .iter()
            .map(|p| axis.lies_in(p, 1e-12))
            .collect();
        assert_eq!(on_axis, vec![true, true, false]);
        assert!((axis.point - Vec3::new(0.1, 0.0, 0.4)).norm() < 1e-15);
        let box_cloud = generate(&spec(ShapeKind::Box, vec![1.0, 1.0, 1.0], 100, 1)).unwrap();
        assert!(box_cloud.gt_axis.is_none());
    }

    #[test]
    fn box_planes_are_the_axis_planes() {
        let cloud = generate(&spec(ShapeKind::Box, vec![1.0, 1.0, 1.0], 600, 1)).unwrap();
        assert_eq!(cloud.len(), 600);
        let arrays: Vec<[f64; 4]> = cloud.gt_planes.iter().map(|p| p.to_array()).collect();
        assert_eq!(
            arrays,
            vec![
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0]
            ]
        );
        assert!(cloud.points.iter().all(|p| p.amax() <= 0.5 + 1e-12));
        assert!(cloud.points.iter().all(|p| (p.amax() - 0.5).abs() < 1e-12));
    }

    #[test]
    fn posed_box_planes_follow_the_pose() {
        let pose = Pose {
            rotation: [0.3, -0.5, 0.9],
            translation: [0.2, 0.1, 0.8],
        };
        let mut s = spec(ShapeKind::Box, vec![0.2, 0.3, 0.4], 500, 4);
        let local = generate(&s).unwrap();
        s.pose = pose;
        let posed = generate(&s).unwrap();
        let iso = pose.isometry();
        for (a, b) in local.gt_planes.iter().zip(&posed.gt_planes) {
            let expected = a.transformed(&iso);
            assert!((expected.normal() - b.normal()).norm() < 1e-12);
            assert!((expected.offset() - b.offset()).abs() < 1e-12);
        }
        for (p, q) in local.points.iter().zip(&posed.points) {
            assert!((iso.transform_point(&(*p).into()).coords - q).norm() < 1e-12);
        }
    }

    #[test]
    fn mirrored_blob_is_exactly_symmetric() {
        let mut s = spec(ShapeKind::MirroredBlob, vec![0.06, 0.08, 0.1], 401, 7);
        s.pose = Pose {
            rotation: [1.0, 0.2, -0.4],
            translation: [0.1, 0.2, 0.5],
        };
        let cloud = generate(&s).unwrap();
        assert_eq!(cloud.len(), 401);
        assert_eq!(cloud.gt_planes.len(), 1);
        let plane = cloud.gt_planes[0];
        for p in &cloud.points {
            assert!(nn_dist(&reflect(p, &plane), &cloud.points) < 1e-9);
        }
    }

    #[test]
    fn generated_shapes_are_symmetric_in_chamfer_distance() {
        let shapes = [
            spec(ShapeKind::Box, vec![0.3, 0.2, 0.1], 1500, 2),
            spec(ShapeKind::Cylinder, vec![0.05, 0.2], 1500, 3),
            spec(ShapeKind::MirroredBlob, vec![0.05, 0.07, 0.09], 1500, 5),
        ];
        for s in shapes {
            let cloud = generate(&s).unwrap();
            let spacing = mean_nn_spacing(&cloud.points);
            for plane in &cloud.gt_planes {
                let mirrored: Vec<Vec3> = cloud.points.iter().map(|p| reflect(p, plane)).collect();
                let c = chamfer(&cloud.points, &mirrored);
                assert!(
                    c <= 2.0 * spacing,
                    "{:?}: chamfer {c} vs spacing {spacing}",
                    s.kind
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(ShapeKind::Cylinder, vec![0.05, 0.2], 300, 11);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = ShapeSpec {
            rng_seed: 12,
            ..s.clone()
        };
        assert_ne!(generate(&s).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&spec(ShapeKind::Box, vec![1.0, 1.0], 200, 0)).is_err());
        assert!(generate(&spec(ShapeKind::Box, vec![1.0, -1.0, 1.0], 200, 0)).is_err());
        assert!(generate(&spec(ShapeKind::Cylinder, vec![1.0, 1.0], 99, 0)).is_err());
    }

    #[test]
    fn halfspace_through_centroid_removes_half() {
        let cloud = generate(&spec(ShapeKind::Box, vec![0.2, 0.2, 0.2], 2000, 9)).unwrap();
        let out = occlude(
            &cloud,
            &OcclusionSpec::Halfspace {
                normal: [1.0, 0.0, 0.0],
                offset: Some(0.0),
                remove_fraction: None,
            },
        )
        .unwrap();
        assert!((out.degree - 0.5).abs() < 0.05);
        assert!(out.observed.points.iter().all(|p| p.x <= 0.0));

        let exact = occlude(
            &cloud,
            &OcclusionSpec::Halfspace {
                normal: [0.3, 0.2, 1.0],
                offset: None,
                remove_fraction: Some(0.35),
            },
        )
        .unwrap();
        assert!((exact.degree - 0.35).abs() < 1e-12);
    }

    #[test]
    fn empty_patch_list_keeps_everything() {
        let cloud = generate(&spec(ShapeKind::Box, vec![0.2, 0.2, 0.2], 300, 9)).unwrap();
        let out = occlude(
            &cloud,
            &OcclusionSpec::Patches {
                patches: vec![],
                random_count: 0,
                random_radius: 0.0,
                rng_seed: 0,
            },
        )
        .unwrap();
        assert_eq!(out.degree, 0.0);
        assert_eq!(out.observed, cloud);
        assert_eq!(out.kept, (0..300).collect::<Vec<_>>());
    }

    #[test]
    fn view_cull_keeps_the_visible_side() {
        let cloud = generate(&spec(ShapeKind::Box, vec![0.2, 0.2, 0.2], 1200, 5)).unwrap();
        let out = occlude(
            &cloud,
            &OcclusionSpec::ViewCull {
                view_dir: [0.0, 0.0, 1.0],
            },
        )
        .unwrap();
        let top = cloud
            .points
            .iter()
            .filter(|p| (p.z - 0.1).abs() < 1e-12)
            .count();
        assert!(
            out.observed
                .points
                .iter()
                .filter(|p| (p.z - 0.1).abs() < 1e-12)
                .count() as f64
                >= 0.9 * top as f64
        );
        // side points along edges get blended normals; the bottom face stays hidden
        assert!(out
            .observed
            .points
            .iter()
            .all(|p| (p.z + 0.1).abs() > 1e-12));
        assert!(out.observed.len() < 2 * top);
        assert!((out.degree - (1.0 - out.observed.len() as f64 / 1200.0)).abs() < 1e-12);
    }

    #[test]
    fn occlusion_never_invents_points() {
        let cloud = generate(&spec(
            ShapeKind::MirroredBlob,
            vec![0.05, 0.06, 0.07],
            500,
            2,
        ))
        .unwrap();
        let out = occlude(
            &cloud,
            &OcclusionSpec::Patches {
                patches: vec![],
                random_count: 4,
                random_radius: 0.03,
                rng_seed: 8,
            },
        )
        .unwrap();
        assert!(out.degree > 0.0);
        for (obs, &src) in out.observed.points.iter().zip(&out.kept) {
            assert_eq!(*obs, cloud.points[src]);
        }
        let all = occlude(
            &cloud,
            &OcclusionSpec::Halfspace {
                normal: [1.0, 0.0, 0.0],
                offset: None,
                remove_fraction: Some(1.0),
            },
        );
        assert_eq!(all, Err(SynthError::FullyOccluded));
    }

    #[test]
    fn zero_noise_oracle_is_exact() {
        let cloud = generate(&spec(
            ShapeKind::MirroredBlob,
            vec![0.05, 0.06, 0.07],
            1000,
            3,
        ))
        .unwrap();
        let pred = oracle_predict(&cloud, &OracleNoise::default(), 0.01).unwrap();
        let plane = cloud.gt_planes[0];
        for ((p, c), n) in cloud.points.iter().zip(&pred.confidence).zip(&pred.normal) {
            if plane.signed_distance(p).abs() <= 0.01 {
                assert_eq!(*c, 1.0 - CONFIDENCE_FLOOR);
                assert_eq!(*n, plane.normal());
            } else {
                assert!(*c <= CONFIDENCE_FLOOR);
            }
        }
    }

    #[test]
    fn oracle_normal_noise_has_the_requested_mean() {
        let mut cloud = generate(&spec(ShapeKind::Box, vec![0.2, 0.2, 0.2], 4000, 3)).unwrap();
        cloud.gt_planes.truncate(1);
        let noise = OracleNoise {
            normal_sigma_deg: 5.0,
            rng_seed: 17,
            ..OracleNoise::default()
        };
        let pred = oracle_predict(&cloud, &noise, 0.05).unwrap();
        let gt = cloud.gt_planes[0].normal();
        let errors: Vec<f64> = cloud
            .points
            .iter()
            .zip(&pred.normal)
            .filter(|(p, _)| cloud.gt_planes[0].signed_distance(p).abs() <= 0.05)
            .map(|(_, n)| angle_between_normals(n, &gt))
            .collect();
        assert!(errors.len() > 1000);
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        assert!((mean - 5.0).abs() <= 1.0, "mean angular error {mean}");
    }

    #[test]
    fn oracle_false_positive_rate() {
        let cloud = generate(&spec(ShapeKind::Box, vec![0.2, 0.2, 0.2], 5000, 3)).unwrap();
        let noise = OracleNoise {
            confidence_noise: 0.1,
            false_positive_rate: 0.1,
            rng_seed: 5,
            ..OracleNoise::default()
        };
        let pred = oracle_predict(&cloud, &noise, 0.01).unwrap();
        let off: Vec<f64> = cloud
            .points
            .iter()
            .zip(&pred.confidence)
            .filter(|(p, _)| {
                cloud
                    .gt_planes
                    .iter()
                    .all(|pl| pl.signed_distance(p).abs() > 0.01)
            })
            .map(|(_, c)| *c)
            .collect();
        let n = off.len() as f64;
        let rate = off.iter().filter(|c| **c > 0.6).count() as f64 / n;
        // four binomial standard deviations
        let tol = 4.0 * (0.1f64 * 0.9 / n).sqrt();
        assert!((rate - 0.1).abs() <= tol, "rate {rate} over {n} points");
    }

    #[test]
    fn oracle_needs_ground_truth() {
        let cloud = PointCloud::new(vec![Vec3::zeros()]);
        assert_eq!(
            oracle_predict(&cloud, &OracleNoise::default(), 0.01),
            Err(SynthError::MissingGroundTruth)
        );
    }

    #[test]
    fn random_rotation_is_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let r = random_rotation(&mut rng);
            assert!((r.to_rotation_matrix().matrix().determinant() - 1.0).abs() < 1e-12);
        }
    }
}
