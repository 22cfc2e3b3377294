//! Scene, prediction, detection and report files.
//!
//! Scenes are ASCII PLY. Ground-truth planes and scene metadata ride in
//! header comments:
//!
//! ```text
//! comment sym_plane <nx> <ny> <nz> <d>
//! comment sym_axis <px> <py> <pz> <dx> <dy> <dz>
//! comment seed <u64>
//! comment occlusion_degree <f64>
//! comment full_count <usize>
//! comment circumference <plane index> <meters>
//! ```
//!
//! Per-plane on-plane labels are `uchar label_<k>` vertex properties and the
//! index into the unoccluded cloud is an `int source_index` property. Plain
//! whitespace-separated XYZ text is accepted as a fallback.
//!
//! Predictions are CSV bound to their scene by a SHA-256 over the point
//! coordinates.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fusion::{RansacConfig, SymmetryDetection};
use crate::geometry::{Plane, PointCloud, SymmetryAxis, Vec3};
use crate::supervision::PerPointPrediction;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("header declares {expected} vertices but {found} data rows follow")]
    CountMismatch { expected: usize, found: usize },
    #[error("predictions belong to scene {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("prediction file has {found} rows but the scene has {expected} points")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneMeta {
    pub seed: Option<u64>,
    pub occlusion_degree: Option<f64>,
    pub full_count: Option<usize>,
    /// Intersection circumference per ground-truth plane, meters.
    pub circumference: Vec<f64>,
    pub source_index: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub cloud: PointCloud,
    pub meta: SceneMeta,
}

impl Scene {
    pub fn new(cloud: PointCloud) -> Self {
        Scene {
            cloud,
            meta: SceneMeta::default(),
        }
    }
}

/// Lowercase hex SHA-256 over the little-endian coordinates of every point.
pub fn scene_hash(cloud: &PointCloud) -> String {
    let mut hasher = Sha256::new();
    for p in &cloud.points {
        for c in p.iter() {
            hasher.update(c.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn format_ply(scene: &Scene) -> String {
    let cloud = &scene.cloud;
    let mut out = String::from("ply\nformat ascii 1.0\n");
    for pl in &cloud.gt_planes {
        let a = pl.to_array();
        let _ = writeln!(
            out,
            "comment sym_plane {} {} {} {}",
            num(a[0]),
            num(a[1]),
            num(a[2]),
            num(a[3])
        );
    }
    if let Some(axis) = &cloud.gt_axis {
        let v: Vec<String> = axis
            .point
            .iter()
            .chain(axis.direction.iter())
            .map(|&c| num(c))
            .collect();
        let _ = writeln!(out, "comment sym_axis {}", v.join(" "));
    }
    if let Some(seed) = scene.meta.seed {
        let _ = writeln!(out, "comment seed {seed}");
    }
    if let Some(d) = scene.meta.occlusion_degree {
        let _ = writeln!(out, "comment occlusion_degree {}", num(d));
    }
    if let Some(n) = scene.meta.full_count {
        let _ = writeln!(out, "comment full_count {n}");
    }
    for (k, c) in scene.meta.circumference.iter().enumerate() {
        let _ = writeln!(out, "comment circumference {k} {}", num(*c));
    }
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let labels = cloud.labels.as_deref().unwrap_or(&[]);
    for k in 0..labels.len() {
        let _ = writeln!(out, "property uchar label_{k}");
    }
    if scene.meta.source_index.is_some() {
        out.push_str("property int source_index\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", num(p.x), num(p.y), num(p.z));
        for col in labels {
            let _ = write!(out, " {}", u8::from(col[i]));
        }
        if let Some(src) = &scene.meta.source_index {
            let _ = write!(out, " {}", src[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    X,
    Y,
    Z,
    Label(usize),
    Source,
    Other,
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, FormatError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad {what} `{tok}`")))
}

fn parse_comment(
    rest: &str,
    line: usize,
    cloud: &mut PointCloud,
    meta: &mut SceneMeta,
) -> Result<(), FormatError> {
    let toks: Vec<&str> = rest.split_whitespace().collect();
    match toks.first().copied() {
        Some("sym_plane") => {
            if toks.len() != 5 {
                return Err(parse_err(line, "sym_plane needs 4 numbers"));
            }
            let v: Vec<f64> = toks[1..]
                .iter()
                .map(|t| parse_f64(t, line, "plane value"))
                .collect::<Result<_, _>>()?;
            let plane = Plane::canonicalize(Vec3::new(v[0], v[1], v[2]), v[3])
                .map_err(|e| parse_err(line, e.to_string()))?;
            cloud.gt_planes.push(plane);
        }
        Some("sym_axis") => {
            if toks.len() != 7 {
                return Err(parse_err(line, "sym_axis needs 6 numbers"));
            }
            let v: Vec<f64> = toks[1..]
                .iter()
                .map(|t| parse_f64(t, line, "axis value"))
                .collect::<Result<_, _>>()?;
            let (point, direction) = (Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
            let mut axis =
                SymmetryAxis::new(point, direction).map_err(|e| parse_err(line, e.to_string()))?;
            // keep written unit vectors bit for bit
            if (direction.norm() - 1.0).abs() <= 1e-12 {
                axis.direction = direction;
            }
            cloud.gt_axis = Some(axis);
        }
        Some("seed") if toks.len() == 2 => {
            meta.seed = Some(toks[1].parse().map_err(|_| parse_err(line, "bad seed"))?);
        }
        Some("occlusion_degree") if toks.len() == 2 => {
            meta.occlusion_degree = Some(parse_f64(toks[1], line, "occlusion degree")?);
        }
        Some("full_count") if toks.len() == 2 => {
            meta.full_count = Some(
                toks[1]
                    .parse()
                    .map_err(|_| parse_err(line, "bad full_count"))?,
            );
        }
        Some("circumference") if toks.len() == 3 => {
            let k: usize = toks[1]
                .parse()
                .map_err(|_| parse_err(line, "bad circumference index"))?;
            if k != meta.circumference.len() {
                return Err(parse_err(
                    line,
                    "circumference entries must be in plane order",
                ));
            }
            meta.circumference
                .push(parse_f64(toks[2], line, "circumference")?);
        }
        _ => {}
    }
    Ok(())
}

pub fn parse_ply(text: &str) -> Result<Scene, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing `ply` magic")),
    }
    let mut cloud = PointCloud::default();
    let mut meta = SceneMeta::default();
    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut columns = Vec::new();
    let mut header_end = None;
    for (ln, line) in lines.by_ref() {
        let line = line.trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => {
                if toks.next() != Some("ascii") {
                    return Err(parse_err(ln, "only ascii PLY is supported"));
                }
            }
            Some("comment") => {
                parse_comment(line["comment".len()..].trim(), ln, &mut cloud, &mut meta)?
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = toks
                    .next()
                    .ok_or_else(|| parse_err(ln, "element without name"))?;
                let count: usize = toks
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(ln, format!("element `{name}` has no valid count")))?;
                in_vertex = name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                } else if count > 0 {
                    return Err(parse_err(ln, format!("unsupported element `{name}`")));
                }
            }
            Some("property") => {
                if !in_vertex {
                    continue;
                }
                let rest: Vec<&str> = toks.collect();
                if rest.first() == Some(&"list") {
                    return Err(parse_err(
                        ln,
                        "list properties are not supported on vertices",
                    ));
                }
                let name = rest
                    .last()
                    .ok_or_else(|| parse_err(ln, "property without name"))?;
                columns.push(match *name {
                    "x" => Column::X,
                    "y" => Column::Y,
                    "z" => Column::Z,
                    "source_index" => Column::Source,
                    n => match n.strip_prefix("label_").and_then(|k| k.parse().ok()) {
                        Some(k) => Column::Label(k),
                        None => Column::Other,
                    },
                });
            }
            Some("end_header") => {
                header_end = Some(ln);
                break;
            }
            Some(other) => return Err(parse_err(ln, format!("unknown header keyword `{other}`"))),
        }
    }
    let header_end =
        header_end.ok_or_else(|| parse_err(text.lines().count(), "missing end_header"))?;
    let count = vertex_count
        .ok_or_else(|| parse_err(header_end, "header has no `element vertex` count"))?;
    for axis in [Column::X, Column::Y, Column::Z] {
        if !columns.contains(&axis) {
            return Err(parse_err(
                header_end,
                format!("vertex element lacks {axis:?} property"),
            ));
        }
    }
    let label_cols = columns
        .iter()
        .filter(|c| matches!(c, Column::Label(_)))
        .count();
    let mut labels = vec![Vec::with_capacity(count); label_cols];
    let mut sources = columns
        .contains(&Column::Source)
        .then(|| Vec::with_capacity(count));

    let mut found = 0;
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        found += 1;
        if found > count {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != columns.len() {
            return Err(parse_err(
                ln,
                format!("expected {} values, found {}", columns.len(), toks.len()),
            ));
        }
        let mut p = Vec3::zeros();
        for (col, tok) in columns.iter().zip(&toks) {
            match col {
                Column::X => p.x = parse_f64(tok, ln, "x")?,
                Column::Y => p.y = parse_f64(tok, ln, "y")?,
                Column::Z => p.z = parse_f64(tok, ln, "z")?,
                Column::Label(k) => {
                    let col = labels
                        .get_mut(*k)
                        .ok_or_else(|| parse_err(ln, "label columns must be numbered from 0"))?;
                    col.push(match *tok {
                        "0" => false,
                        "1" => true,
                        _ => return Err(parse_err(ln, format!("bad label `{tok}`"))),
                    });
                }
                Column::Source => {
                    let v = tok
                        .parse()
                        .map_err(|_| parse_err(ln, format!("bad source_index `{tok}`")))?;
                    sources.as_mut().expect("source column").push(v);
                }
                Column::Other => {}
            }
        }
        if !p.iter().all(|c| c.is_finite()) {
            return Err(parse_err(ln, "non-finite coordinate"));
        }
        cloud.points.push(p);
    }
    if found != count {
        return Err(FormatError::CountMismatch {
            expected: count,
            found,
        });
    }
    if label_cols > 0 {
        if label_cols != cloud.gt_planes.len() {
            return Err(parse_err(
                header_end,
                format!(
                    "{label_cols} label columns for {} sym_plane comments",
                    cloud.gt_planes.len()
                ),
            ));
        }
        cloud.labels = Some(labels);
    }
    if !meta.circumference.is_empty() && meta.circumference.len() != cloud.gt_planes.len() {
        return Err(parse_err(
            header_end,
            "circumference count differs from sym_plane count",
        ));
    }
    meta.source_index = sources;
    Ok(Scene { cloud, meta })
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    cloud.points.iter().fold(String::new(), |mut s, p| {
        let _ = writeln!(s, "{} {} {}", num(p.x), num(p.y), num(p.z));
        s
    })
}

pub fn parse_xyz(text: &str) -> Result<PointCloud, FormatError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(
                i + 1,
                format!("expected 3 columns, found {}", toks.len()),
            ));
        }
        let p = Vec3::new(
            parse_f64(toks[0], i + 1, "x")?,
            parse_f64(toks[1], i + 1, "y")?,
            parse_f64(toks[2], i + 1, "z")?,
        );
        if !p.iter().all(|c| c.is_finite()) {
            return Err(parse_err(i + 1, "non-finite coordinate"));
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

/// Reads PLY (detected by its magic line) or XYZ text.
pub fn read_scene(path: &Path) -> Result<Scene, FormatError> {
    let text = read_text(path)?;
    if text.lines().next().map(str::trim) == Some("ply") {
        parse_ply(&text)
    } else {
        Ok(Scene::new(parse_xyz(&text)?))
    }
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, FormatError> {
    Ok(read_scene(path)?.cloud)
}

/// Writes XYZ for a `.xyz` extension and PLY otherwise.
pub fn write_scene(path: &Path, scene: &Scene) -> Result<(), FormatError> {
    let text = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("xyz"))
    {
        format_xyz(&scene.cloud)
    } else {
        format_ply(scene)
    };
    write_text(path, &text)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), FormatError> {
    write_scene(path, &Scene::new(cloud.clone()))
}

const HASH_PREFIX: &str = "# scene_sha256=";
const PREDICTION_HEADER: &str = "confidence,nx,ny,nz";

/// Nine significant digits.
fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn format_predictions(pred: &PerPointPrediction, scene_sha256: &str) -> String {
    let mut out = format!("{HASH_PREFIX}{scene_sha256}\n{PREDICTION_HEADER}\n");
    for (c, n) in pred.confidence.iter().zip(&pred.normal) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            sig9(*c),
            sig9(n.x),
            sig9(n.y),
            sig9(n.z)
        );
    }
    out
}

/// Parsed prediction rows with the scene hash from the header.
pub fn parse_predictions(text: &str) -> Result<(PerPointPrediction, String), FormatError> {
    let mut hash = None;
    let mut header_seen = false;
    let mut pred = PerPointPrediction::default();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix(HASH_PREFIX) {
            hash = Some(h.trim().to_owned());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != PREDICTION_HEADER {
                return Err(parse_err(
                    ln,
                    format!("expected header `{PREDICTION_HEADER}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| parse_f64(t.trim(), ln, "value"))
            .collect::<Result<_, _>>()?;
        if vals.len() != 4 {
            return Err(parse_err(
                ln,
                format!("expected 4 values, found {}", vals.len()),
            ));
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(parse_err(ln, "non-finite value"));
        }
        pred.confidence.push(vals[0]);
        pred.normal.push(Vec3::new(vals[1], vals[2], vals[3]));
    }
    if !header_seen {
        return Err(parse_err(
            text.lines().count().max(1),
            "missing prediction header",
        ));
    }
    let hash = hash.ok_or_else(|| parse_err(1, "missing `# scene_sha256=` line"))?;
    Ok((pred, hash))
}

pub fn write_predictions(
    path: &Path,
    pred: &PerPointPrediction,
    scene_sha256: &str,
) -> Result<(), FormatError> {
    write_text(path, &format_predictions(pred, scene_sha256))
}

/// Reads predictions and checks them against the scene they are meant for.
pub fn read_predictions(
    path: &Path,
    scene: &PointCloud,
) -> Result<PerPointPrediction, FormatError> {
    let (pred, found) = parse_predictions(&read_text(path)?)?;
    let expected = scene_hash(scene);
    if found != expected {
        return Err(FormatError::HashMismatch { expected, found });
    }
    if pred.len() != scene.len() {
        return Err(FormatError::RowCountMismatch {
            expected: scene.len(),
            found: pred.len(),
        });
    }
    Ok(pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub scene_sha256: String,
    pub config: RansacConfig,
    pub detections: Vec<SymmetryDetection>,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// RGB per point: `|n|` components of the predicted normal for confident
/// points, mid gray otherwise.
pub fn normal_colors(pred: &PerPointPrediction, p_threshold: f64) -> Vec<[u8; 3]> {
    pred.confidence
        .iter()
        .zip(&pred.normal)
        .map(|(c, n)| {
            let norm = n.norm();
            if *c > p_threshold && norm > 0.0 {
                let u = n / norm;
                [u.x, u.y, u.z].map(|v| (v.abs() * 255.0).round() as u8)
            } else {
                [128, 128, 128]
            }
        })
        .collect()
}

pub fn format_colored_ply(cloud: &PointCloud, colors: &[[u8; 3]]) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    for pl in &cloud.gt_planes {
        let a = pl.to_array();
        let _ = writeln!(
            out,
            "comment sym_plane {} {} {} {}",
            num(a[0]),
            num(a[1]),
            num(a[2]),
            num(a[3])
        );
    }
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n");
    for (p, c) in cloud.points.iter().zip(colors) {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            num(p.x),
            num(p.y),
            num(p.z),
            c[0],
            c[1],
            c[2]
        );
    }
    out
}
