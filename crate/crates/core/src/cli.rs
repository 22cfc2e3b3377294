//! The `occsym` command line: generate, occlude, predict-oracle, detect,
//! eval, pr-curve and visualize.
//!
//! Exit codes: 0 on success, 2 on usage errors, 3 on data errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::evaluation::{
    intersection_circumference, pr_curve_records, CorrectnessThreshold, EvalReport, SceneRecord,
};
use crate::fusion::{detect, RansacConfig};
use crate::io::{
    format_colored_ply, normal_colors, read_json, read_predictions, read_scene, scene_hash,
    write_json, write_predictions, write_scene, write_text, DetectionFile, Scene, SceneMeta,
};
use crate::supervision::{make_labels, LossConfig};
use crate::synth::{generate, occlude, oracle_predict, OcclusionSpec, OracleNoise, ShapeSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "occsym",
    version,
    about = "Reflective symmetry planes in occluded point clouds"
)]
struct Cli {
    /// Overrides every random seed in the input specs and configs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample synthetic scenes from a shape spec (one spec or {"scenes": [...]}).
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove points from a scene according to an occlusion spec.
    Occlude {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write ground-truth-derived per-point predictions with controlled noise.
    PredictOracle {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        /// JSON with loss keys; `eps1` sets the on-plane band.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse per-point predictions into symmetry planes.
    Detect {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match detections against ground truth and sweep the confidence threshold.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        detections: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        dth: f64,
        #[arg(long, default_value_t = 20.0)]
        angleth: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool evaluation reports into one precision/recall CSV.
    PrCurve {
        #[arg(long = "eval-inputs", num_args = 1.., required = true)]
        eval_inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a PLY colored by predicted normal direction.
    Visualize {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<crate::io::FormatError> for Failure {
    fn from(e: crate::io::FormatError) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult = Result<(), Failure>;

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(std::io::stderr(), "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(std::io::stderr(), "error: {e:#}");
            EXIT_DATA
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let seed = cli.seed;
    match cli.command {
        Command::Generate { spec, out } => cmd_generate(&spec, &out, seed),
        Command::Occlude { input, spec, out } => cmd_occlude(&input, &spec, &out, seed),
        Command::PredictOracle {
            input,
            noise,
            config,
            out,
        } => cmd_predict_oracle(&input, &noise, config.as_deref(), &out, seed),
        Command::Detect {
            scene,
            pred,
            config,
            out,
        } => cmd_detect(&scene, &pred, config.as_deref(), &out, seed),
        Command::Eval {
            detections,
            scenes,
            dth,
            angleth,
            out,
        } => cmd_eval(&detections, &scenes, dth, angleth, &out),
        Command::PrCurve { eval_inputs, out } => cmd_pr_curve(&eval_inputs, &out),
        Command::Visualize {
            scene,
            pred,
            config,
            out,
        } => cmd_visualize(&scene, &pred, config.as_deref(), &out),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    Many { scenes: Vec<ShapeSpec> },
    Single(ShapeSpec),
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    read_json(path).with_context(|| format!("reading {}", path.display()))
}

/// Both config halves read from one JSON object; absent keys keep defaults.
fn load_configs(path: Option<&Path>) -> anyhow::Result<(RansacConfig, LossConfig)> {
    let Some(path) = path else {
        return Ok((RansacConfig::default(), LossConfig::default()));
    };
    let value: serde_json::Value = load_json(path)?;
    let ransac: RansacConfig =
        serde_json::from_value(value.clone()).with_context(|| format!("{}", path.display()))?;
    let loss: LossConfig =
        serde_json::from_value(value).with_context(|| format!("{}", path.display()))?;
    ransac.validate()?;
    loss.validate()?;
    Ok((ransac, loss))
}

fn load_scene(path: &Path) -> anyhow::Result<Scene> {
    read_scene(path).with_context(|| format!("reading scene {}", path.display()))
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn cmd_generate(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult {
    let specs = match load_json::<ScenarioFile>(spec_path)? {
        ScenarioFile::Many { scenes } => scenes,
        ScenarioFile::Single(spec) => vec![spec],
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let band = LossConfig::default();
    for (i, mut spec) in specs.into_iter().enumerate() {
        if let Some(s) = seed {
            spec.rng_seed = s.wrapping_add(i as u64);
        }
        let mut cloud = generate(&spec).with_context(|| format!("scene {i}"))?;
        let labels = make_labels(&cloud, &band).map_err(anyhow::Error::from)?;
        cloud.labels = Some(
            labels
                .planes
                .iter()
                .map(|p| p.on_plane_eps1.clone())
                .collect(),
        );
        let circumference = cloud
            .gt_planes
            .iter()
            .map(|pl| intersection_circumference(&cloud, pl, band.eps1))
            .collect();
        let scene = Scene {
            meta: SceneMeta {
                seed: Some(spec.rng_seed),
                full_count: Some(cloud.len()),
                circumference,
                ..SceneMeta::default()
            },
            cloud,
        };
        write_scene(&out.join(format!("scene_{i:03}.ply")), &scene)?;
    }
    Ok(())
}

fn cmd_occlude(input: &Path, spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult {
    let scene = load_scene(input)?;
    let mut spec: OcclusionSpec = load_json(spec_path)?;
    if let (Some(s), OcclusionSpec::Patches { rng_seed, .. }) = (seed, &mut spec) {
        *rng_seed = s;
    }
    let occ = occlude(&scene.cloud, &spec).map_err(anyhow::Error::from)?;
    let full_count = scene.meta.full_count.unwrap_or(scene.cloud.len());
    let source_index: Vec<usize> = match &scene.meta.source_index {
        Some(src) => occ.kept.iter().map(|&k| src[k]).collect(),
        None => occ.kept.clone(),
    };
    let degree = crate::evaluation::occlusion_degree_from_counts(full_count, occ.observed.len())
        .map_err(anyhow::Error::from)?;
    let circumference = if scene.meta.circumference.is_empty() {
        // the input is the full cloud
        let band = LossConfig::default().eps1;
        scene
            .cloud
            .gt_planes
            .iter()
            .map(|pl| intersection_circumference(&scene.cloud, pl, band))
            .collect()
    } else {
        scene.meta.circumference.clone()
    };
    let result = Scene {
        cloud: occ.observed,
        meta: SceneMeta {
            seed: scene.meta.seed,
            occlusion_degree: Some(degree),
            full_count: Some(full_count),
            circumference,
            source_index: Some(source_index),
        },
    };
    create_parent(out)?;
    write_scene(out, &result)?;
    Ok(())
}

fn cmd_predict_oracle(
    input: &Path,
    noise: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> CliResult {
    let scene = load_scene(input)?;
    let mut noise: OracleNoise = load_json(noise)?;
    if let Some(s) = seed {
        noise.rng_seed = s;
    }
    let (_, loss) = load_configs(config)?;
    let pred = oracle_predict(&scene.cloud, &noise, loss.eps1).map_err(anyhow::Error::from)?;
    create_parent(out)?;
    write_predictions(out, &pred, &scene_hash(&scene.cloud))?;
    Ok(())
}

fn cmd_detect(
    scene_path: &Path,
    pred_path: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> CliResult {
    let scene = load_scene(scene_path)?;
    let pred = read_predictions(pred_path, &scene.cloud)
        .with_context(|| format!("reading {}", pred_path.display()))?;
    let (mut cfg, _) = load_configs(config)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let detections = detect(&scene.cloud, &pred, &cfg).map_err(anyhow::Error::from)?;
    create_parent(out)?;
    write_json(
        out,
        &DetectionFile {
            scene_sha256: scene_hash(&scene.cloud),
            config: cfg,
            detections,
        },
    )?;
    Ok(())
}

fn cmd_eval(
    detections: &[PathBuf],
    scenes: &[PathBuf],
    dth: f64,
    angleth: f64,
    out: &Path,
) -> CliResult {
    if detections.len() != scenes.len() {
        return Err(Failure::Usage(format!(
            "{} detection files for {} scenes; pass them in matching order",
            detections.len(),
            scenes.len()
        )));
    }
    let th = CorrectnessThreshold::new(dth, angleth).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut records = Vec::with_capacity(scenes.len());
    for (det_path, scene_path) in detections.iter().zip(scenes) {
        let scene = load_scene(scene_path)?;
        let dets: DetectionFile = load_json(det_path)?;
        let hash = scene_hash(&scene.cloud);
        if dets.scene_sha256 != hash {
            return Err(anyhow!(
                "{} was computed for scene {}, but {} hashes to {}",
                det_path.display(),
                dets.scene_sha256,
                scene_path.display(),
                hash
            )
            .into());
        }
        let name = scene_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut record = SceneRecord::new(name, scene.cloud.gt_planes.clone(), dets.detections)
            .with_axis(scene.cloud.gt_axis);
        if let Some(d) = scene.meta.occlusion_degree {
            record = record.with_occlusion(d);
        }
        if !scene.meta.circumference.is_empty() {
            record = record.with_circumference(scene.meta.circumference.clone());
        }
        records.push(record);
    }
    let report = pr_curve_records(records, &th).map_err(anyhow::Error::from)?;
    create_parent(out)?;
    write_json(out, &report)?;
    Ok(())
}

fn cmd_pr_curve(inputs: &[PathBuf], out: &Path) -> CliResult {
    let reports: Vec<EvalReport> = inputs
        .iter()
        .map(|p| load_json(p))
        .collect::<anyhow::Result<_>>()?;
    let pooled = if let [single] = reports.as_slice() {
        single.clone()
    } else {
        let th = reports[0].threshold;
        if reports.iter().any(|r| r.threshold != th) {
            return Err(anyhow!("reports use different correctness thresholds").into());
        }
        if reports.iter().any(|r| r.scenes.is_empty()) {
            return Err(anyhow!("a report without scene records cannot be pooled").into());
        }
        let records = reports.into_iter().flat_map(|r| r.scenes).collect();
        pr_curve_records(records, &th).map_err(anyhow::Error::from)?
    };
    create_parent(out)?;
    write_text(out, &pooled.to_csv())?;
    Ok(())
}

fn cmd_visualize(
    scene_path: &Path,
    pred_path: &Path,
    config: Option<&Path>,
    out: &Path,
) -> CliResult {
    let scene = load_scene(scene_path)?;
    let pred = read_predictions(pred_path, &scene.cloud)
        .with_context(|| format!("reading {}", pred_path.display()))?;
    let (cfg, _) = load_configs(config)?;
    let colors = normal_colors(&pred, cfg.p_threshold);
    create_parent(out)?;
    write_text(out, &format_colored_ply(&scene.cloud, &colors))?;
    Ok(())
}
