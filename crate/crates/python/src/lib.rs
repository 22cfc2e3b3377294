//! Python bindings: `import occsym`.

use std::fmt::Display;

use nalgebra::Vector3;
use occsym_core::baseline::{brute_detect as core_brute_detect, OracleConfig};
use occsym_core::evaluation::{self, CorrectnessThreshold, Role};
use occsym_core::fusion::{self, ConfidenceDenominator, RansacConfig, SymmetryDetection};
use occsym_core::geometry::{angle_between_normals, Plane, PointCloud, SymmetryAxis};
use occsym_core::supervision::{self, LossConfig, OnPlaneMask, PerPointPrediction};
use occsym_core::synth::{self, OcclusionSpec, OracleNoise, Patch, Pose, ShapeKind, ShapeSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

type Vec3 = Vector3<f64>;

/// `(detections, gt_planes)` as passed from Python.
type SceneArg<'py> = (Vec<PyRef<'py, PyDetection>>, Vec<PyRef<'py, PyPlane>>);

fn value_error(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[pyclass(name = "Plane", module = "occsym", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPlane {
    inner: Plane,
}

#[pymethods]
impl PyPlane {
    /// Canonical plane `normal . x = offset` (normal rescaled, offset >= 0).
    #[new]
    fn new(normal: [f64; 3], offset: f64) -> PyResult<Self> {
        Plane::canonicalize(Vec3::from(normal), offset)
            .map(|inner| PyPlane { inner })
            .map_err(value_error)
    }

    #[getter]
    fn normal(&self) -> [f64; 3] {
        arr(&self.inner.normal())
    }

    #[getter]
    fn offset(&self) -> f64 {
        self.inner.offset()
    }

    fn signed_distance(&self, point: [f64; 3]) -> f64 {
        self.inner.signed_distance(&Vec3::from(point))
    }

    fn reflect(&self, point: [f64; 3]) -> [f64; 3] {
        arr(&self.inner.reflect(&Vec3::from(point)))
    }

    /// Unsigned angle in degrees between the two normals, sign folded.
    fn angle_to(&self, other: &PyPlane) -> f64 {
        angle_between_normals(&self.inner.normal(), &other.inner.normal())
    }

    fn __repr__(&self) -> String {
        let n = self.inner.normal();
        format!(
            "Plane(normal=[{}, {}, {}], offset={})",
            n.x,
            n.y,
            n.z,
            self.inner.offset()
        )
    }

    fn __eq__(&self, other: &PyPlane) -> bool {
        self.inner == other.inner
    }
}

#[pyclass(name = "PointCloud", module = "occsym", skip_from_py_object)]
#[derive(Clone)]
struct PyPointCloud {
    inner: PointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    #[pyo3(signature = (points, gt_planes = Vec::new()))]
    fn new(points: Vec<[f64; 3]>, gt_planes: Vec<PyRef<'_, PyPlane>>) -> Self {
        let points = points.into_iter().map(Vec3::from).collect();
        PyPointCloud {
            inner: PointCloud::with_planes(points, gt_planes.iter().map(|p| p.inner).collect()),
        }
    }

    #[getter]
    fn points(&self) -> Vec<[f64; 3]> {
        self.inner.points.iter().map(arr).collect()
    }

    #[getter]
    fn gt_planes(&self) -> Vec<PyPlane> {
        self.inner
            .gt_planes
            .iter()
            .map(|&inner| PyPlane { inner })
            .collect()
    }

    /// `(point, direction)` of a cylinder's axis, if the shape has one.
    #[getter]
    fn gt_axis(&self) -> Option<([f64; 3], [f64; 3])> {
        self.inner
            .gt_axis
            .map(|a| (arr(&a.point), arr(&a.direction)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Prediction", module = "occsym", skip_from_py_object)]
#[derive(Clone)]
struct PyPrediction {
    inner: PerPointPrediction,
}

#[pymethods]
impl PyPrediction {
    #[new]
    fn new(confidence: Vec<f64>, normals: Vec<[f64; 3]>) -> Self {
        PyPrediction {
            inner: PerPointPrediction::new(
                confidence,
                normals.into_iter().map(Vec3::from).collect(),
            ),
        }
    }

    #[getter]
    fn confidence(&self) -> Vec<f64> {
        self.inner.confidence.clone()
    }

    #[getter]
    fn normals(&self) -> Vec<[f64; 3]> {
        self.inner.normal.iter().map(arr).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Detection", module = "occsym", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyDetection {
    inner: SymmetryDetection,
}

#[pymethods]
impl PyDetection {
    #[new]
    #[pyo3(signature = (plane, confidence, support = 1))]
    fn new(plane: &PyPlane, confidence: f64, support: usize) -> Self {
        PyDetection {
            inner: SymmetryDetection {
                plane: plane.inner,
                confidence,
                support,
            },
        }
    }

    #[getter]
    fn plane(&self) -> PyPlane {
        PyPlane {
            inner: self.inner.plane,
        }
    }

    #[getter]
    fn confidence(&self) -> f64 {
        self.inner.confidence
    }

    #[getter]
    fn support(&self) -> usize {
        self.inner.support
    }

    fn __repr__(&self) -> String {
        format!(
            "Detection(confidence={}, support={}, {})",
            self.inner.confidence,
            self.inner.support,
            self.plane().__repr__()
        )
    }
}

#[pyclass(name = "MatchOutcome", module = "occsym", frozen, get_all)]
struct PyMatchOutcome {
    tp: usize,
    fp: usize,
    #[pyo3(name = "fn")]
    fn_: usize,
    /// One of true_positive, false_positive, false_negative, ignored, suppressed.
    roles: Vec<&'static str>,
    gt_match: Vec<Option<usize>>,
}

#[pyclass(name = "PrPoint", module = "occsym", frozen, get_all)]
struct PyPrPoint {
    threshold: f64,
    precision: f64,
    recall: f64,
    tp: usize,
    fp: usize,
    #[pyo3(name = "fn")]
    fn_: usize,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::TruePositive => "true_positive",
        Role::FalsePositive => "false_positive",
        Role::FalseNegative => "false_negative",
        Role::Ignored => "ignored",
        Role::Suppressed => "suppressed",
    }
}

fn threshold(d_th: f64, angle_th: f64) -> PyResult<CorrectnessThreshold> {
    CorrectnessThreshold::new(d_th, angle_th).map_err(value_error)
}

fn detections(list: &[PyRef<'_, PyDetection>]) -> Vec<SymmetryDetection> {
    list.iter().map(|d| d.inner).collect()
}

fn planes(list: &[PyRef<'_, PyPlane>]) -> Vec<Plane> {
    list.iter().map(|p| p.inner).collect()
}

/// Samples a synthetic shape; `kind` is box, cylinder or mirrored_blob.
#[pyfunction]
#[pyo3(signature = (kind, dimensions, sample_count, seed = 0, rotation = [0.0; 3], translation = [0.0; 3]))]
fn generate(
    kind: &str,
    dimensions: Vec<f64>,
    sample_count: usize,
    seed: u64,
    rotation: [f64; 3],
    translation: [f64; 3],
) -> PyResult<PyPointCloud> {
    let kind = match kind {
        "box" => ShapeKind::Box,
        "cylinder" => ShapeKind::Cylinder,
        "mirrored_blob" => ShapeKind::MirroredBlob,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown shape kind {other:?}"
            )))
        }
    };
    let spec = ShapeSpec {
        kind,
        dimensions,
        pose: Pose {
            rotation,
            translation,
        },
        sample_count,
        rng_seed: seed,
    };
    synth::generate(&spec)
        .map(|inner| PyPointCloud { inner })
        .map_err(value_error)
}

/// Removes points; returns `(observed, kept_indices, degree)`.
///
/// `mode` is halfspace (`normal`, `offset` or `remove_fraction`), view_cull
/// (`view_dir`) or patches (`patches` as `(center, radius)` pairs plus
/// `random_count` balls of `random_radius`).
#[pyfunction]
#[pyo3(signature = (
    cloud, mode, *, normal = None, offset = None, remove_fraction = None, view_dir = None,
    patches = Vec::new(), random_count = 0, random_radius = 0.0, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn occlude(
    cloud: &PyPointCloud,
    mode: &str,
    normal: Option<[f64; 3]>,
    offset: Option<f64>,
    remove_fraction: Option<f64>,
    view_dir: Option<[f64; 3]>,
    patches: Vec<([f64; 3], f64)>,
    random_count: usize,
    random_radius: f64,
    seed: u64,
) -> PyResult<(PyPointCloud, Vec<usize>, f64)> {
    let missing = |name: &str| PyValueError::new_err(format!("{mode} occlusion needs {name}"));
    let spec = match mode {
        "halfspace" => OcclusionSpec::Halfspace {
            normal: normal.ok_or_else(|| missing("normal"))?,
            offset,
            remove_fraction,
        },
        "view_cull" => OcclusionSpec::ViewCull {
            view_dir: view_dir.ok_or_else(|| missing("view_dir"))?,
        },
        "patches" => OcclusionSpec::Patches {
            patches: patches
                .into_iter()
                .map(|(center, radius)| Patch { center, radius })
                .collect(),
            random_count,
            random_radius,
            rng_seed: seed,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown occlusion mode {other:?}"
            )))
        }
    };
    let occ = synth::occlude(&cloud.inner, &spec).map_err(value_error)?;
    Ok((
        PyPointCloud {
            inner: occ.observed,
        },
        occ.kept,
        occ.degree,
    ))
}

/// Synthetic per-point predictions from the cloud's ground-truth planes.
#[pyfunction]
#[pyo3(signature = (cloud, *, normal_sigma_deg = 0.0, confidence_noise = 0.0, false_positive_rate = 0.0, seed = 0, eps1 = 0.01))]
fn oracle_predict(
    cloud: &PyPointCloud,
    normal_sigma_deg: f64,
    confidence_noise: f64,
    false_positive_rate: f64,
    seed: u64,
    eps1: f64,
) -> PyResult<PyPrediction> {
    let noise = OracleNoise {
        normal_sigma_deg,
        confidence_noise,
        false_positive_rate,
        rng_seed: seed,
    };
    synth::oracle_predict(&cloud.inner, &noise, eps1)
        .map(|inner| PyPrediction { inner })
        .map_err(value_error)
}

/// Fuses per-point predictions into symmetry detections.
#[pyfunction]
#[pyo3(signature = (
    cloud, prediction, *, dist1 = 0.6, dist2 = 1.3, p_threshold = 0.6, sample_count = 10, min_points = 10,
    max_refit_iters = 20, seed = 0, offset_scale = 1.0, confidence_denominator = "active_set"
))]
#[allow(clippy::too_many_arguments)]
fn detect(
    cloud: &PyPointCloud,
    prediction: &PyPrediction,
    dist1: f64,
    dist2: f64,
    p_threshold: f64,
    sample_count: usize,
    min_points: usize,
    max_refit_iters: usize,
    seed: u64,
    offset_scale: f64,
    confidence_denominator: &str,
) -> PyResult<Vec<PyDetection>> {
    let confidence_denominator = match confidence_denominator {
        "active_set" => ConfidenceDenominator::ActiveSet,
        "vote" => ConfidenceDenominator::Vote,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown confidence denominator {other:?}"
            )))
        }
    };
    let cfg = RansacConfig {
        dist1,
        dist2,
        p_threshold,
        sample_count,
        min_points,
        max_refit_iters,
        rng_seed: seed,
        offset_scale,
        confidence_denominator,
    };
    let found = fusion::detect(&cloud.inner, &prediction.inner, &cfg).map_err(value_error)?;
    Ok(found
        .into_iter()
        .map(|inner| PyDetection { inner })
        .collect())
}

/// Brute-force baseline; returns `(plane, score)` pairs, best first.
#[pyfunction]
#[pyo3(signature = (cloud, *, pair_sample_count = 5000, inlier_radius = 0.005, score_threshold = 0.3, seed = 0))]
fn brute_detect(
    cloud: &PyPointCloud,
    pair_sample_count: usize,
    inlier_radius: f64,
    score_threshold: f64,
    seed: u64,
) -> PyResult<Vec<(PyPlane, f64)>> {
    let cfg = OracleConfig {
        pair_sample_count,
        chamfer_inlier_radius: inlier_radius,
        score_threshold,
        rng_seed: seed,
    };
    let found = core_brute_detect(&cloud.inner, &cfg).map_err(value_error)?;
    Ok(found
        .into_iter()
        .map(|(inner, score)| (PyPlane { inner }, score))
        .collect())
}

/// Assigns every detection a role at one confidence threshold. Passing a
/// cylinder's `axis` as `(point, direction)` matches its axial planes as a
/// family.
#[pyfunction]
#[pyo3(signature = (detections, gt_planes, conf_threshold, *, d_th = 0.01, angle_th = 20.0, axis = None))]
fn match_scene(
    detections: Vec<PyRef<'_, PyDetection>>,
    gt_planes: Vec<PyRef<'_, PyPlane>>,
    conf_threshold: f64,
    d_th: f64,
    angle_th: f64,
    axis: Option<([f64; 3], [f64; 3])>,
) -> PyResult<PyMatchOutcome> {
    let th = threshold(d_th, angle_th)?;
    let axis = axis
        .map(|(p, d)| SymmetryAxis::new(Vec3::from(p), Vec3::from(d)))
        .transpose()
        .map_err(value_error)?;
    let m = evaluation::match_scene_with_axis(
        &self::detections(&detections),
        &planes(&gt_planes),
        axis.as_ref(),
        &th,
        conf_threshold,
    );
    Ok(PyMatchOutcome {
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        roles: m.roles.into_iter().map(role_name).collect(),
        gt_match: m.gt_match,
    })
}

/// Pooled precision/recall sweep over `(detections, gt_planes)` scenes.
#[pyfunction]
#[pyo3(signature = (scenes, *, d_th = 0.01, angle_th = 20.0))]
fn pr_curve(scenes: Vec<SceneArg<'_>>, d_th: f64, angle_th: f64) -> PyResult<Vec<PyPrPoint>> {
    let th = threshold(d_th, angle_th)?;
    let owned: Vec<(Vec<SymmetryDetection>, Vec<Plane>)> = scenes
        .iter()
        .map(|(d, g)| (detections(d), planes(g)))
        .collect();
    let borrowed: Vec<(&[SymmetryDetection], &[Plane])> = owned
        .iter()
        .map(|(d, g)| (d.as_slice(), g.as_slice()))
        .collect();
    let report = evaluation::pr_curve(&borrowed, &th).map_err(value_error)?;
    Ok(report
        .pr_points
        .into_iter()
        .map(|p| PyPrPoint {
            threshold: p.threshold,
            precision: p.precision,
            recall: p.recall,
            tp: p.tp,
            fp: p.fp,
            fn_: p.fn_,
        })
        .collect())
}

/// Training loss against the cloud's ground truth; returns
/// `(value, grad_confidence, grad_normals)`.
#[pyfunction]
#[pyo3(signature = (cloud, prediction, *, eps1 = 0.01, eps2 = 0.02, p_threshold = 0.6, lam = 10.0, mask = "standard"))]
fn loss_total(
    cloud: &PyPointCloud,
    prediction: &PyPrediction,
    eps1: f64,
    eps2: f64,
    p_threshold: f64,
    lam: f64,
    mask: &str,
) -> PyResult<(f64, Vec<f64>, Vec<[f64; 3]>)> {
    let op_mask_mode = match mask {
        "standard" => OnPlaneMask::Standard,
        "threshold_masked" => OnPlaneMask::ThresholdMasked,
        other => return Err(PyValueError::new_err(format!("unknown mask {other:?}"))),
    };
    let cfg = LossConfig {
        eps1,
        eps2,
        p_threshold,
        lambda: lam,
        op_mask_mode,
    };
    cfg.validate().map_err(value_error)?;
    let labels = supervision::make_labels(&cloud.inner, &cfg).map_err(value_error)?;
    let out = supervision::loss_total(&prediction.inner, &labels, &cfg).map_err(value_error)?;
    Ok((
        out.value,
        out.grad_confidence,
        out.grad_normal.iter().map(arr).collect(),
    ))
}

#[pymodule]
fn occsym(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlane>()?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyPrediction>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PyMatchOutcome>()?;
    m.add_class::<PyPrPoint>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(occlude, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_predict, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(brute_detect, m)?)?;
    m.add_function(wrap_pyfunction!(match_scene, m)?)?;
    m.add_function(wrap_pyfunction!(pr_curve, m)?)?;
    m.add_function(wrap_pyfunction!(loss_total, m)?)?;
    Ok(())
}
