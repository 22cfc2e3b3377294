//! Hesse-form planes, point clouds and the elementary operations on them.

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Normals shorter than this cannot be normalized.
pub const MIN_NORMAL_NORM: f64 = 1e-12;

/// Offsets at or below this magnitude are treated as exactly zero.
pub const ZERO_OFFSET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate normal: norm {0:e} is below {MIN_NORMAL_NORM:e}")]
    DegenerateNormal(f64),
}

/// A reflection plane `{ x : normal . x = offset }` in canonical form.
///
/// The normal is unit length and `offset >= 0`. Planes through the origin
/// orient the normal so that its first nonzero component is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlane", into = "RawPlane")]
pub struct Plane {
    normal: Vec3,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPlane {
    normal: [f64; 3],
    offset: f64,
}

impl TryFrom<RawPlane> for Plane {
    type Error = GeometryError;

    fn try_from(raw: RawPlane) -> Result<Self, Self::Error> {
        Plane::canonicalize(Vec3::from(raw.normal), raw.offset)
    }
}

impl From<Plane> for RawPlane {
    fn from(p: Plane) -> Self {
        RawPlane {
            normal: p.normal.into(),
            offset: p.offset,
        }
    }
}

impl Plane {
    /// Builds the canonical plane for `normal . x = offset`.
    ///
    /// The pair is scaled to a unit normal, then `(normal, offset)` is
    /// flipped to `(-normal, -offset)` if needed. Already-unit normals are
    /// not rescaled, which makes the operation exactly idempotent.
    pub fn canonicalize(normal: Vec3, offset: f64) -> Result<Plane, GeometryError> {
        let norm = normal.norm();
        if !(norm > MIN_NORMAL_NORM) {
            return Err(GeometryError::DegenerateNormal(norm));
        }
        let (mut n, mut d) = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            (normal, offset)
        } else {
            (normal / norm, offset / norm)
        };
        if d.abs() <= ZERO_OFFSET_TOL {
            d = 0.0;
            let first = n.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
            if first < 0.0 {
                n = -n;
            }
        } else if d < 0.0 {
            n = -n;
            d = -d;
        }
        // -0.0 components would break bitwise idempotence after a flip
        n.apply(|c| {
            if *c == 0.0 {
                *c = 0.0
            }
        });
        Ok(Plane {
            normal: n,
            offset: d,
        })
    }

    /// Plane through `point` with the given (not necessarily unit) normal.
    pub fn through_point(point: &Vec3, normal: Vec3) -> Result<Plane, GeometryError> {
        let norm = normal.norm();
        if !(norm > MIN_NORMAL_NORM) {
            return Err(GeometryError::DegenerateNormal(norm));
        }
        let n = normal / norm;
        Plane::canonicalize(n, n.dot(point))
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `(n_x, n_y, n_z, d)`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, self.offset]
    }

    /// The point of the plane closest to the origin.
    pub fn foot_point(&self) -> Vec3 {
        self.normal * self.offset
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        signed_distance(p, self)
    }

    pub fn reflect(&self, p: &Vec3) -> Vec3 {
        reflect(p, self)
    }

    /// Image of the plane under a rigid motion.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Plane {
        let n = iso.rotation * self.normal;
        let foot = iso.transform_point(&self.foot_point().into());
        Plane::canonicalize(n, n.dot(&foot.coords)).expect("rotation preserves unit normals")
    }
}

pub fn signed_distance(p: &Vec3, plane: &Plane) -> f64 {
    plane.normal.dot(p) - plane.offset
}

pub fn reflect(p: &Vec3, plane: &Plane) -> Vec3 {
    p - plane.normal * (2.0 * signed_distance(p, plane))
}

/// Angle between two reflection-plane normals in degrees, folded into `[0, 90]`.
pub fn angle_between_normals(n1: &Vec3, n2: &Vec3) -> f64 {
    n1.cross(n2).norm().atan2(n1.dot(n2).abs()).to_degrees()
}

/// Line contained in every plane of a continuous symmetry family, such as
/// the axis of a cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryAxis {
    pub point: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

impl SymmetryAxis {
    pub fn new(point: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let norm = direction.norm();
        if !(norm > MIN_NORMAL_NORM) {
            return Err(GeometryError::DegenerateNormal(norm));
        }
        Ok(SymmetryAxis {
            point,
            direction: direction / norm,
        })
    }

    /// Whether `plane` contains the axis, up to `tol` in both angle (as a
    /// sine) and distance.
    pub fn lies_in(&self, plane: &Plane, tol: f64) -> bool {
        plane.normal().dot(&self.direction).abs() <= tol
            && plane.signed_distance(&self.point).abs() <= tol
    }

    /// Angle in degrees between `plane` and the axis; zero when the plane
    /// is parallel to it.
    pub fn angle_to(&self, plane: &Plane) -> f64 {
        let n = plane.normal();
        n.dot(&self.direction)
            .abs()
            .atan2(n.cross(&self.direction).norm())
            .to_degrees()
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> SymmetryAxis {
        SymmetryAxis {
            point: iso.transform_point(&self.point.into()).coords,
            direction: iso.rotation * self.direction,
        }
    }
}

/// An ordered point set with optional ground-truth symmetry planes.
///
/// `labels[s][i]` marks point `i` as lying on ground-truth plane `s`. When
/// `gt_axis` is set, ground-truth planes containing it stand for the whole
/// family of planes through the axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub gt_planes: Vec<Plane>,
    pub labels: Option<Vec<Vec<bool>>>,
    pub gt_axis: Option<SymmetryAxis>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            gt_planes: Vec::new(),
            labels: None,
            gt_axis: None,
        }
    }

    pub fn with_planes(points: Vec<Vec3>, gt_planes: Vec<Plane>) -> Self {
        PointCloud {
            points,
            gt_planes,
            labels: None,
            gt_axis: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.gt_planes.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::zeros();
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.points.len() as f64
    }

    /// Checks finiteness and label shape.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(format!("point {i} has a non-finite coordinate"));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.gt_planes.len() {
                return Err(format!(
                    "{} label columns for {} ground-truth planes",
                    labels.len(),
                    self.gt_planes.len()
                ));
            }
            if let Some(col) = labels.iter().find(|col| col.len() != self.points.len()) {
                return Err(format!(
                    "label column has {} entries for {} points",
                    col.len(),
                    self.points.len()
                ));
            }
        }
        Ok(())
    }

    /// Applies a rigid motion to points and ground truth.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| iso.transform_point(&(*p).into()).coords)
                .collect(),
            gt_planes: self
                .gt_planes
                .iter()
                .map(|pl| pl.transformed(iso))
                .collect(),
            labels: self.labels.clone(),
            gt_axis: self.gt_axis.map(|a| a.transformed(iso)),
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}
