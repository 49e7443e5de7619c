use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ScenarioConfig;
use crate::budget::{resolutions, LinkBudget};
use crate::error::{Error, Result};
use crate::frame::{generate_reference_frame, FrameConfig};
use crate::io::{self, DetectionRecord, GridFile, GridKind, TrackRecord};
use crate::scene::{apply_channel, synthesize_channel, Scene};
use crate::spu::{capture_clutter_reference, compute_channel, process_frame, ChannelMatrix};
use crate::track::{Measurement, Tracker};

/// Caps worker threads when set to a positive integer.
pub const THREADS_ENV: &str = "ISAC_SPU_THREADS";

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const CLUTTER_REF_FILE: &str = "clutter_ref.grid";

pub fn reference_file(frame: u64) -> String {
    format!("frame_{frame:06}_ref.grid")
}

pub fn reflected_file(frame: u64) -> String {
    format!("frame_{frame:06}_refl.grid")
}

pub fn periodogram_file(frame: u64) -> String {
    format!("periodogram_{frame:06}.pgrm")
}

pub fn periodogram_csv_file(frame: u64) -> String {
    format!("periodogram_{frame:06}.csv")
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::invalid(THREADS_ENV, format!("expected a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::invalid(THREADS_ENV, e.to_string()))
}

/// Seed of frame `k` in a run seeded with `seed`.
pub fn frame_seed(seed: u64, k: u64) -> u64 {
    seed ^ k
}

/// Reference and reflected grids of one simulated frame.
pub fn simulate_frame(
    frame: &FrameConfig,
    scene: &Scene,
    seed: u64,
) -> Result<(crate::ResourceGrid, crate::ResourceGrid)> {
    let reference = generate_reference_frame(frame, seed);
    let channel = synthesize_channel(scene, frame, seed);
    let reflected = apply_channel(&reference, &channel, scene.noise_power(), seed)?;
    Ok((reference, reflected))
}

/// Writes `n_frames` (reference, reflected) grid pairs into `out`.
pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let scene = cfg.scene()?;
    let pool = thread_pool()?;
    let written: Vec<Vec<PathBuf>> = pool.install(|| {
        (0..cfg.run.n_frames)
            .into_par_iter()
            .map(|k| {
                let (reference, reflected) = simulate_frame(&cfg.frame, &scene, frame_seed(cfg.run.seed, k))?;
                let ref_path = out.join(reference_file(k));
                let refl_path = out.join(reflected_file(k));
                io::write_grid(&ref_path, &GridFile::from_grid(GridKind::Reference, k, &reference))?;
                io::write_grid(&refl_path, &GridFile::from_grid(GridKind::Reflected, k, &reflected))?;
                Ok(vec![ref_path, refl_path])
            })
            .collect::<Result<_>>()
    })?;
    Ok(written.into_iter().flatten().collect())
}

/// Averaged channel of the clutter-only scene over `frames` captures.
pub fn calibrate_clutter(frame: &FrameConfig, scene: &Scene, seed: u64, frames: u64) -> Result<ChannelMatrix> {
    let clutter_scene = scene.clutter_only();
    let channels = (0..frames)
        .into_par_iter()
        .map(|k| {
            let (reference, reflected) = simulate_frame(frame, &clutter_scene, frame_seed(seed, k))?;
            compute_channel(&reflected, &reference)
        })
        .collect::<Result<Vec<_>>>()?;
    capture_clutter_reference(&channels)
}

/// Simulates `run.calibration_frames` captures of the clutter-only scene and
/// writes their average channel.
pub fn cmd_calibrate(cfg: &ScenarioConfig, out: &Path) -> Result<PathBuf> {
    let scene = cfg.scene()?;
    let pool = thread_pool()?;
    let reference =
        pool.install(|| calibrate_clutter(&cfg.frame, &scene, cfg.run.seed, cfg.run.calibration_frames))?;
    let path = out.join(CLUTTER_REF_FILE);
    io::write_grid(&path, &GridFile::from_channel(0, &reference))?;
    Ok(path)
}

/// Frame indices with both grid files present in `dir`, ascending.
pub fn discover_frames(dir: &Path) -> Result<Vec<u64>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(k) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix("_ref.grid"))
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        let refl = dir.join(reflected_file(k));
        if !refl.exists() {
            return Err(Error::io(refl, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
        frames.push(k);
    }
    frames.sort_unstable();
    Ok(frames)
}

fn load_grid(path: &Path, kind: GridKind, frame: Option<u64>, shape: (usize, usize)) -> Result<GridFile> {
    let g = io::read_grid(path)?;
    if g.kind != kind {
        return Err(Error::format(path, format!("expected a {kind:?} grid, found {:?}", g.kind)));
    }
    if let Some(k) = frame {
        if g.frame_index != k {
            return Err(Error::format(path, format!("frame index {} does not match file name", g.frame_index)));
        }
    }
    if g.data.dim() != shape {
        return Err(Error::DimensionMismatch {
            expected: shape,
            actual: g.data.dim(),
        });
    }
    Ok(g)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProcessSummary {
    pub frames: Vec<u64>,
    pub detections: Vec<DetectionRecord>,
}

/// Runs the processing chain on every frame pair in `frames_dir` and writes
/// one periodogram per frame plus `detections.jsonl`.
pub fn cmd_process(
    cfg: &ScenarioConfig,
    frames_dir: &Path,
    clutter_ref: Option<&Path>,
    out: &Path,
    write_csv: bool,
) -> Result<ProcessSummary> {
    let params = cfg.processing_params()?;
    let shape = cfg.frame.shape();
    let clutter = clutter_ref
        .map(|p| load_grid(p, GridKind::Channel, None, shape)?.into_channel())
        .transpose()?;
    let frames = discover_frames(frames_dir)?;
    let pool = thread_pool()?;
    let per_frame: Vec<Vec<DetectionRecord>> = pool.install(|| {
        frames
            .par_iter()
            .map(|&k| {
                let reference =
                    load_grid(&frames_dir.join(reference_file(k)), GridKind::Reference, Some(k), shape)?
                        .into_resource_grid()?;
                let reflected =
                    load_grid(&frames_dir.join(reflected_file(k)), GridKind::Reflected, Some(k), shape)?
                        .into_resource_grid()?;
                let result = process_frame(&reflected, &reference, clutter.as_ref(), &cfg.frame, &params)?;
                io::write_periodogram(&out.join(periodogram_file(k)), &result.periodogram)?;
                if write_csv {
                    io::write_atomic(
                        &out.join(periodogram_csv_file(k)),
                        io::periodogram_csv(&result.periodogram).as_bytes(),
                    )?;
                }
                Ok(result.detections.iter().map(|d| DetectionRecord::new(k, d)).collect())
            })
            .collect::<Result<_>>()
    })?;
    let detections: Vec<DetectionRecord> = per_frame.into_iter().flatten().collect();
    io::write_atomic(&out.join(DETECTIONS_FILE), io::to_jsonl(&detections).as_bytes())?;
    Ok(ProcessSummary { frames, detections })
}

/// Runs the tracker over a detection stream, one step per frame from the
/// first to the last frame present (frames without detections coast).
pub fn track_records(cfg: &ScenarioConfig, detections: &[DetectionRecord], path: &Path) -> Result<Vec<TrackRecord>> {
    let mut tracker = Tracker::new(cfg.tracker_config()?)?;
    let mut by_frame: BTreeMap<u64, Vec<Measurement>> = BTreeMap::new();
    let mut last = None;
    for (line, d) in detections.iter().enumerate() {
        if last.is_some_and(|f| d.frame < f) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line + 1,
                reason: format!("frame {} is out of order", d.frame),
            });
        }
        last = Some(d.frame);
        by_frame.entry(d.frame).or_default().push(Measurement {
            range: d.range_m,
            speed: d.velocity_mps,
            power: crate::db_to_linear(d.power_db),
        });
    }
    let (Some(&first), Some(&end)) = (by_frame.keys().next(), by_frame.keys().next_back()) else {
        return Ok(Vec::new());
    };
    let mut records = Vec::new();
    for frame in first..=end {
        let meas = by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        for t in tracker.step(meas)? {
            records.push(TrackRecord::new(frame, t));
        }
    }
    Ok(records)
}

pub fn cmd_track(cfg: &ScenarioConfig, detections_path: &Path, out: &Path) -> Result<PathBuf> {
    let detections: Vec<DetectionRecord> = io::read_jsonl(detections_path)?;
    let records = track_records(cfg, &detections, detections_path)?;
    let path = out.join(TRACKS_FILE);
    io::write_atomic(&path, io::to_jsonl(&records).as_bytes())?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

/// Achievable range and an SNR sweep over `steps` log-spaced ranges.
pub fn predict_range_report(
    budget: &LinkBudget,
    r_min: f64,
    r_max: f64,
    steps: usize,
    format: ReportFormat,
) -> Result<String> {
    if !(r_min > 0.0 && r_max >= r_min && r_max.is_finite()) {
        return Err(Error::invalid("r_min/r_max", format!("need 0 < r_min <= r_max, got {r_min}, {r_max}")));
    }
    if steps < 2 && r_max > r_min {
        return Err(Error::invalid("steps", "need at least 2 sweep points"));
    }
    let ranges: Vec<f64> = if steps <= 1 {
        vec![r_min]
    } else {
        let ratio = (r_max / r_min).ln() / (steps - 1) as f64;
        (0..steps).map(|i| r_min * (ratio * i as f64).exp()).collect()
    };
    let r_star = budget.max_range();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            writeln!(out, "# max_range_m,{r_star}").unwrap();
            writeln!(out, "range_m,snr_linear,snr_db").unwrap();
            for r in ranges {
                let g = budget.snr_at_range(r)?;
                writeln!(out, "{r},{g},{}", crate::linear_to_db(g)).unwrap();
            }
        }
        ReportFormat::Text => {
            writeln!(
                out,
                "reference SNR {:.2} dB at {} m, eta = {}, minimum SNR {:.2} dB",
                crate::linear_to_db(budget.gamma_ref()),
                budget.r_ref(),
                budget.eta(),
                crate::linear_to_db(budget.gamma_min())
            )
            .unwrap();
            writeln!(out, "achievable range r* = {r_star:.2} m").unwrap();
            writeln!(out, "{:>12}  {:>10}", "range [m]", "SNR [dB]").unwrap();
            for r in ranges {
                let g = budget.snr_at_range(r)?;
                let mark = if g >= budget.gamma_min() { "" } else { "  below minimum" };
                writeln!(out, "{r:>12.3}  {:>10.2}{mark}", crate::linear_to_db(g)).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn resolutions_report(frame: &FrameConfig) -> String {
    let r = resolutions(frame);
    let mut out = String::new();
    writeln!(out, "range resolution        {:.6} m", r.range_res).unwrap();
    writeln!(out, "velocity resolution     {:.6} m/s", r.velocity_res).unwrap();
    writeln!(out, "unambiguous range       {:.3} m", r.unambiguous_range).unwrap();
    writeln!(out, "unambiguous velocity    ±{:.3} m/s", r.unambiguous_velocity).unwrap();
    if frame.exceeds_bandwidth() {
        writeln!(out, "warning: N·Δf exceeds the configured bandwidth").unwrap();
    }
    out
}
