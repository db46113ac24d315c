//! Command implementations and argument parsing for the `rinkreg` binary.
//!
//! Each subcommand is a plain function over a resolved config struct so
//! integration tests can drive them without spawning processes. Flags win
//! over values from an optional TOML config file; unknown keys in that
//! file are rejected.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::camera::default_pool;
use crate::error::{Error, Result};
use crate::homography::Homography;
use crate::io::{
    atomic_write, load_seg_png, load_spec, read_manifest, read_predictions, save_seg_png,
    save_spec, write_manifest, write_predictions,
};
use crate::metrics::{evaluate, ClipMode, EvalConfig, EvalReport, Prediction};
use crate::register::{register, InitConfig, RefineConfig, RegistrationStatus};
use crate::rink::{
    random_spec, rasterize, RandomizationRanges, RinkSpec, SegClass, SegMap, TEMPLATE_SIZE,
};
use crate::synth::{child_seed, make_dataset, CorruptionProfile, DatasetConfig, HAugmentConfig};
use crate::warp::{warp_raster, Sampling};

/// Map an error to the process exit code: usage errors are handled by the
/// parser (1); malformed inputs are data errors (2); the rest are internal
/// failures (3).
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_)
        | Error::Json(_)
        | Error::Image(_)
        | Error::Config(_)
        | Error::Range(_)
        | Error::MissingPrediction(_) => 2,
        Error::Degenerate(_) | Error::Horizon(_) | Error::Dimension(_, _, _, _)
        | Error::InitFailed(_) => 3,
    }
}

fn read_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_resolved_config<T: Serialize>(out_dir: &Path, cfg: &T) -> Result<()> {
    atomic_write(
        &out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg)?.as_bytes(),
    )
}

// ---------------------------------------------------------------------------
// rinkgen

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RinkgenConfig {
    pub n: u32,
    pub seed: u64,
    pub ranges: RandomizationRanges,
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RinkgenFile {
    n: Option<u32>,
    seed: Option<u64>,
    ranges: Option<RandomizationRanges>,
}

/// Write `n` randomized rink spec files plus an `index.json` listing them.
/// Deterministic in `seed`.
pub fn cmd_rinkgen(cfg: &RinkgenConfig) -> Result<Vec<String>> {
    fs::create_dir_all(&cfg.out)?;
    let mut index = Vec::with_capacity(cfg.n as usize);
    for i in 0..cfg.n {
        let spec = random_spec(child_seed(cfg.seed, i as u64), &cfg.ranges)?;
        let name = format!("rink_{i:05}.json");
        save_spec(&spec, &cfg.out.join(&name))?;
        index.push(name);
    }
    atomic_write(
        &cfg.out.join("index.json"),
        serde_json::to_string_pretty(&index)?.as_bytes(),
    )?;
    write_resolved_config(&cfg.out, cfg)?;
    log::info!("rinkgen: wrote {} specs to {}", index.len(), cfg.out.display());
    Ok(index)
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub spec_dir: PathBuf,
    pub out: PathBuf,
    pub profile: CorruptionProfile,
    pub n_per_spec: u32,
    pub seed: u64,
    pub frame_size: (u32, u32),
    pub template_size: (u32, u32),
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthFile {
    profile: Option<CorruptionProfile>,
    n_per_spec: Option<u32>,
    seed: Option<u64>,
    frame_size: Option<(u32, u32)>,
    jobs: Option<usize>,
}

/// Spec files in a directory: the `index.json` order when present, else
/// all `*.json` sorted by name (minus our own bookkeeping files).
fn list_spec_files(dir: &Path) -> Result<Vec<String>> {
    let index = dir.join("index.json");
    if index.exists() {
        let names: Vec<String> = serde_json::from_str(&fs::read_to_string(index)?)?;
        return Ok(names);
    }
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".json") && name != "config.json" {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Range("jobs must be > 0".into()));
        }
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::Degenerate(format!("thread pool: {e}")))
}

/// Generate a self-contained dataset directory: `manifest.jsonl`,
/// `segs/*.png` with sidecars, and a copy of every used spec under
/// `specs/`.
pub fn cmd_synth(cfg: &SynthConfig) -> Result<Vec<crate::synth::ManifestEntry>> {
    let names = list_spec_files(&cfg.spec_dir)?;
    if names.is_empty() {
        return Err(Error::Range(format!(
            "no spec files found in {}",
            cfg.spec_dir.display()
        )));
    }
    let specs: Vec<(String, RinkSpec)> = names
        .iter()
        .map(|n| {
            let spec = load_spec(&cfg.spec_dir.join(n))?;
            let id = n.trim_end_matches(".json").to_string();
            Ok((id, spec))
        })
        .collect::<Result<_>>()?;

    let pool = default_pool()?;
    let ds_cfg = DatasetConfig {
        n_per_spec: cfg.n_per_spec,
        h_cfg: HAugmentConfig {
            frame_size: cfg.frame_size,
            ..HAugmentConfig::default()
        },
        profile: cfg.profile,
        template_size: cfg.template_size,
        seed: cfg.seed,
    };

    let dataset = thread_pool(cfg.jobs)?.install(|| make_dataset(&specs, &pool, &ds_cfg))?;

    fs::create_dir_all(cfg.out.join("segs"))?;
    fs::create_dir_all(cfg.out.join("specs"))?;
    for (id, spec) in &specs {
        save_spec(spec, &cfg.out.join("specs").join(format!("{id}.json")))?;
    }
    let mut entries = Vec::with_capacity(dataset.len());
    for (entry, sample) in dataset {
        save_seg_png(&sample.frame_seg, &cfg.out.join(&entry.seg_png))?;
        entries.push(entry);
    }
    write_manifest(&cfg.out.join("manifest.jsonl"), &entries)?;
    write_resolved_config(&cfg.out, cfg)?;
    log::info!("synth: wrote {} samples to {}", entries.len(), cfg.out.display());
    Ok(entries)
}

// ---------------------------------------------------------------------------
// register

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterConfig {
    /// Batch mode: dataset manifest; spec and raster paths resolve
    /// relative to its directory.
    pub manifest: Option<PathBuf>,
    /// Single-raster mode: one segmentation PNG plus its rink spec.
    pub seg: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub out: PathBuf,
    pub iters: usize,
    pub overlay: bool,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterFile {
    iters: Option<usize>,
    overlay: Option<bool>,
    seed: Option<u64>,
    jobs: Option<usize>,
}

fn status_str(s: RegistrationStatus) -> String {
    match s {
        RegistrationStatus::Converged => "converged".into(),
        RegistrationStatus::IterationCap => "iteration_cap".into(),
        RegistrationStatus::InitFailed => "init_failed".into(),
    }
}

/// Template classes drawn in overlays: the painted lines and circles.
const OVERLAY_CLASSES: [SegClass; 4] = [
    SegClass::BlueLines,
    SegClass::CenterLine,
    SegClass::CenterFaceoffCircle,
    SegClass::OuterFaceoffCircles,
];

/// Render the observed raster in grey with the template's line classes
/// warped by each homography on top: green for ground truth when known,
/// light blue for the initial estimate, dark blue for the final one.
pub fn render_overlay(
    frame: &SegMap,
    template: &SegMap,
    h_init: &Homography,
    h_final: &Homography,
    h_gt: Option<&Homography>,
) -> Result<image::RgbImage> {
    let mut img = image::RgbImage::new(frame.width, frame.height);
    for (px, &c) in img.pixels_mut().zip(frame.data.iter()) {
        let v = 40 + c * 18;
        *px = image::Rgb([v, v, v]);
    }
    let mut paint = |h: &Homography, color: [u8; 3]| -> Result<()> {
        let warped = warp_raster(template, h, frame.width, frame.height, Sampling::Nearest)?;
        for (px, &c) in img.pixels_mut().zip(warped.data.iter()) {
            if OVERLAY_CLASSES.iter().any(|k| k.index() == c) {
                *px = image::Rgb(color);
            }
        }
        Ok(())
    };
    if let Some(gt) = h_gt {
        paint(gt, [60, 200, 60])?;
    }
    paint(h_init, [150, 200, 255])?;
    paint(h_final, [30, 60, 200])?;
    Ok(img)
}

struct RegisterJob {
    id: String,
    seg: SegMap,
    spec: RinkSpec,
    h_gt: Option<Homography>,
}

/// Register every sample, recording per-sample failures in the status
/// column instead of aborting the run. Writes `predictions.jsonl` and,
/// with `overlay`, one `overlay_<id>.png` per sample.
pub fn cmd_register(cfg: &RegisterConfig) -> Result<Vec<Prediction>> {
    use rayon::prelude::*;

    let jobs: Vec<RegisterJob> = match (&cfg.manifest, &cfg.seg, &cfg.spec) {
        (Some(manifest), None, None) => {
            let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
            let entries = read_manifest(manifest)?;
            let mut specs: HashMap<String, RinkSpec> = HashMap::new();
            for e in &entries {
                if !specs.contains_key(&e.spec_file) {
                    specs.insert(e.spec_file.clone(), load_spec(&base.join(&e.spec_file))?);
                }
            }
            entries
                .into_iter()
                .map(|e| {
                    Ok(RegisterJob {
                        seg: load_seg_png(&base.join(&e.seg_png))?,
                        spec: specs[&e.spec_file].clone(),
                        h_gt: Some(e.h_gt),
                        id: e.id,
                    })
                })
                .collect::<Result<_>>()?
        }
        (None, Some(seg), Some(spec)) => {
            let id = seg
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sample".into());
            vec![RegisterJob {
                id,
                seg: load_seg_png(seg)?,
                spec: load_spec(spec)?,
                h_gt: None,
            }]
        }
        _ => {
            return Err(Error::Config(
                "pass either --manifest, or --seg together with --spec".into(),
            ))
        }
    };

    let init_cfg = InitConfig {
        rng_seed: cfg.seed.unwrap_or(InitConfig::default().rng_seed),
        ..InitConfig::default()
    };
    let ref_cfg = RefineConfig::default();
    fs::create_dir_all(&cfg.out)?;

    let preds: Vec<Prediction> = thread_pool(cfg.jobs)?.install(|| {
        jobs.par_iter()
            .map(|job| {
                let (pred, h_init) = match register(&job.seg, &job.spec, &init_cfg, &ref_cfg, cfg.iters)
                {
                    Ok(r) => (
                        Prediction {
                            id: job.id.clone(),
                            h: r.h_final,
                            status: status_str(r.status),
                        },
                        r.h_init,
                    ),
                    Err(e) => {
                        log::warn!("register {} failed: {e}", job.id);
                        (
                            Prediction {
                                id: job.id.clone(),
                                h: Homography::identity(),
                                status: format!("error: {e}"),
                            },
                            Homography::identity(),
                        )
                    }
                };
                if cfg.overlay {
                    let template = rasterize(&job.spec, TEMPLATE_SIZE.0, TEMPLATE_SIZE.1);
                    let img = render_overlay(
                        &job.seg,
                        &template,
                        &h_init,
                        &pred.h,
                        job.h_gt.as_ref(),
                    )?;
                    let mut buf = Vec::new();
                    img.write_to(
                        &mut std::io::Cursor::new(&mut buf),
                        image::ImageFormat::Png,
                    )?;
                    atomic_write(&cfg.out.join(format!("overlay_{}.png", job.id)), &buf)?;
                }
                Ok(pred)
            })
            .collect::<Result<_>>()
    })?;

    write_predictions(&cfg.out.join("predictions.jsonl"), &preds)?;
    write_resolved_config(&cfg.out, cfg)?;
    log::info!("register: wrote {} predictions to {}", preds.len(), cfg.out.display());
    Ok(preds)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCommandConfig {
    pub manifest: PathBuf,
    pub predictions: PathBuf,
    pub out: PathBuf,
    pub clip: ClipMode,
    pub frame_size: (u32, u32),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalFile {
    clip: Option<ClipMode>,
    frame_size: Option<(u32, u32)>,
}

/// Score predictions against a manifest; writes `report.json` and
/// `report.txt`. A manifest id with no prediction is a data error.
pub fn cmd_eval(cfg: &EvalCommandConfig) -> Result<EvalReport> {
    let base = cfg.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = read_manifest(&cfg.manifest)?;
    let preds = read_predictions(&cfg.predictions)?;
    let mut specs: HashMap<String, RinkSpec> = HashMap::new();
    for e in &manifest {
        if !specs.contains_key(&e.spec_file) {
            specs.insert(e.spec_file.clone(), load_spec(&base.join(&e.spec_file))?);
        }
    }
    let eval_cfg = EvalConfig {
        frame_size: cfg.frame_size,
        template_size: TEMPLATE_SIZE,
        clip: cfg.clip,
    };
    let report = evaluate(&manifest, &preds, &specs, &eval_cfg)?;
    fs::create_dir_all(&cfg.out)?;
    atomic_write(
        &cfg.out.join("report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    atomic_write(&cfg.out.join("report.txt"), report.to_text_table().as_bytes())?;
    write_resolved_config(&cfg.out, cfg)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(
    name = "rinkreg",
    about = "Hockey rink template generation, synthetic data, registration, and evaluation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate randomized rink spec files.
    Rinkgen(RinkgenArgs),
    /// Build a synthetic dataset from a directory of specs.
    Synth(SynthArgs),
    /// Register segmentation rasters against their rink templates.
    Register(RegisterArgs),
    /// Score predictions against a manifest.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct RinkgenArgs {
    /// Number of specs to generate.
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TOML config; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of rink spec JSON files.
    #[arg(long)]
    pub specs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Corruption profile: clean, mild, or heavy.
    #[arg(long)]
    pub profile: Option<CorruptionProfile>,
    #[arg(long)]
    pub n_per_spec: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical CPUs).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Dataset manifest (batch mode).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Single segmentation PNG (with --spec).
    #[arg(long)]
    pub seg: Option<PathBuf>,
    /// Rink spec for --seg.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Refinement iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Write an overlay PNG per sample.
    #[arg(long)]
    pub overlay: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Footprint clip region: rink or template.
    #[arg(long)]
    pub clip: Option<ClipMode>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Resolve flags against an optional config file and run the command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Rinkgen(a) => {
            let f: RinkgenFile = read_toml(a.config.as_deref())?;
            let cfg = RinkgenConfig {
                n: a.n.or(f.n).unwrap_or(200),
                seed: a.seed.or(f.seed).unwrap_or(0),
                ranges: f.ranges.unwrap_or_default(),
                out: a.out,
            };
            cmd_rinkgen(&cfg)?;
        }
        Command::Synth(a) => {
            let f: SynthFile = read_toml(a.config.as_deref())?;
            let cfg = SynthConfig {
                spec_dir: a.specs,
                out: a.out,
                profile: a.profile.or(f.profile).unwrap_or(CorruptionProfile::Clean),
                n_per_spec: a.n_per_spec.or(f.n_per_spec).unwrap_or(1),
                seed: a.seed.or(f.seed).unwrap_or(0),
                frame_size: f.frame_size.unwrap_or((1280, 720)),
                template_size: TEMPLATE_SIZE,
                jobs: a.jobs.or(f.jobs),
            };
            cmd_synth(&cfg)?;
        }
        Command::Register(a) => {
            let f: RegisterFile = read_toml(a.config.as_deref())?;
            let cfg = RegisterConfig {
                manifest: a.manifest,
                seg: a.seg,
                spec: a.spec,
                out: a.out,
                iters: a.iters.or(f.iters).unwrap_or(3),
                overlay: a.overlay || f.overlay.unwrap_or(false),
                seed: a.seed.or(f.seed),
                jobs: a.jobs.or(f.jobs),
            };
            cmd_register(&cfg)?;
        }
        Command::Eval(a) => {
            let f: EvalFile = read_toml(a.config.as_deref())?;
            let cfg = EvalCommandConfig {
                manifest: a.manifest,
                predictions: a.predictions,
                out: a.out,
                clip: a.clip.or(f.clip).unwrap_or(ClipMode::Rink),
                frame_size: f.frame_size.unwrap_or((1280, 720)),
            };
            let report = cmd_eval(&cfg)?;
            print!("{}", report.to_text_table());
        }
    }
    Ok(())
}
