//! Scenario files (TOML).
//!
//! ```toml
//! [frame]                      # any field omitted takes the 27.6 GHz / μ=3 default
//! n_subcarriers = 256
//! n_symbols = 128
//! frame_duration_s = 1.142857142857143e-3
//!
//! [scene]
//! noise_power_db = -30.0       # per resource element; omit for a noiseless run
//! sync_jitter_std_s = 0.0
//!
//! [[scene.targets]]
//! range_m = 3.0
//! velocity_mps = 1.0
//! amplitude_db = 0.0           # |a|² in dB
//! phase_rad = 0.0
//!
//! [[scene.clutter]]            # static, velocity_mps must be 0 if given
//! range_m = 15.0
//! amplitude_db = 20.0
//!
//! [processing]
//! threshold_db = 60.0
//! pad_range = 4
//! pad_doppler = 4
//! window = "rectangular"       # or "hann"
//! max_targets = 16
//!
//! [tracker]
//! dt_s = 0.01                  # defaults to the frame duration
//! process_noise = 1.0
//! range_std_m = 0.05
//! speed_std_mps = 0.1
//! gate = 9.21
//! max_misses = 10
//!
//! [run]
//! n_frames = 10
//! seed = 1
//! output_dir = "out"
//! calibration_frames = 1
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameConfig;
use crate::scene::{PointTarget, Scene};
use crate::spu::{ProcessingParams, Window};
use crate::track::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub frame: FrameConfig,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub processing: ProcessingSpec,
    #[serde(default)]
    pub tracker: TrackerSpec,
    #[serde(default)]
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub targets: Vec<ReflectorSpec>,
    pub clutter: Vec<ReflectorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_power_db: Option<f64>,
    pub sync_jitter_std_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectorSpec {
    pub range_m: f64,
    #[serde(default)]
    pub velocity_mps: f64,
    pub amplitude_db: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessingSpec {
    pub threshold_db: f64,
    pub pad_range: usize,
    pub pad_doppler: usize,
    pub window: Window,
    pub max_targets: usize,
}

impl Default for ProcessingSpec {
    fn default() -> Self {
        Self {
            threshold_db: 60.0,
            pad_range: 1,
            pad_doppler: 1,
            window: Window::Rectangular,
            max_targets: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    pub process_noise: f64,
    pub range_std_m: f64,
    pub speed_std_mps: f64,
    pub gate: f64,
    pub max_misses: u32,
}

impl Default for TrackerSpec {
    fn default() -> Self {
        Self {
            dt_s: None,
            process_noise: 1.0,
            range_std_m: 0.05,
            speed_std_mps: 0.1,
            gate: 9.21,
            max_misses: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub n_frames: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub calibration_frames: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            n_frames: 1,
            seed: 0,
            output_dir: PathBuf::from("out"),
            calibration_frames: 1,
        }
    }
}

/// Prefixes the field name of a validation error with its location.
fn at(prefix: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Invalid { field, reason } => Error::Invalid {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite, got {v}")))
    }
}

impl ScenarioConfig {
    /// Validated simulation scene.
    pub fn scene(&self) -> Result<Scene> {
        let build = |list: &[ReflectorSpec], name: &str| -> Result<Vec<PointTarget>> {
            list.iter()
                .enumerate()
                .map(|(i, r)| {
                    let prefix = format!("scene.{name}[{i}]");
                    finite(&format!("{prefix}.amplitude_db"), r.amplitude_db)?;
                    finite(&format!("{prefix}.phase_rad"), r.phase_rad)?;
                    if name == "clutter" && r.velocity_mps != 0.0 {
                        return Err(Error::invalid(format!("{prefix}.velocity_mps"), "clutter must be static"));
                    }
                    PointTarget::from_db(r.range_m, r.velocity_mps, r.amplitude_db, r.phase_rad, &self.frame)
                        .map_err(at(&prefix))
                })
                .collect()
        };
        let targets = build(&self.scene.targets, "targets")?;
        let clutter = build(&self.scene.clutter, "clutter")?;
        let noise_power = match self.scene.noise_power_db {
            Some(db) if db.is_nan() || db == f64::INFINITY => {
                return Err(Error::invalid("scene.noise_power_db", format!("invalid value {db}")))
            }
            Some(db) => crate::db_to_linear(db),
            None => 0.0,
        };
        Scene::new(targets, clutter, noise_power, self.scene.sync_jitter_std_s).map_err(at("scene"))
    }

    pub fn processing_params(&self) -> Result<ProcessingParams> {
        let p = &self.processing;
        finite("processing.threshold_db", p.threshold_db)?;
        if p.pad_range == 0 {
            return Err(Error::invalid("processing.pad_range", "must be at least 1"));
        }
        if p.pad_doppler == 0 {
            return Err(Error::invalid("processing.pad_doppler", "must be at least 1"));
        }
        if p.max_targets == 0 {
            return Err(Error::invalid("processing.max_targets", "must be at least 1"));
        }
        Ok(ProcessingParams {
            threshold: crate::db_to_linear(p.threshold_db),
            pad_range: p.pad_range,
            pad_doppler: p.pad_doppler,
            window: p.window,
            max_targets: p.max_targets,
        })
    }

    pub fn tracker_config(&self) -> Result<TrackerConfig> {
        let t = &self.tracker;
        for (field, v) in [("tracker.range_std_m", t.range_std_m), ("tracker.speed_std_mps", t.speed_std_mps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        let cfg = TrackerConfig {
            dt: t.dt_s.unwrap_or(self.frame.frame_duration_s),
            process_noise: t.process_noise,
            meas_noise: Matrix2::new(t.range_std_m.powi(2), 0.0, 0.0, t.speed_std_mps.powi(2)),
            gate: t.gate,
            max_misses: t.max_misses,
        };
        cfg.validate().map_err(at("tracker"))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate().map_err(at("frame"))?;
        self.scene()?;
        self.processing_params()?;
        self.tracker_config()?;
        if self.run.n_frames == 0 {
            return Err(Error::invalid("run.n_frames", "must be at least 1"));
        }
        if self.run.calibration_frames == 0 {
            return Err(Error::invalid("run.calibration_frames", "must be at least 1"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        if cfg.frame.exceeds_bandwidth() {
            log::warn!(
                "{}: occupied band {} Hz exceeds the configured bandwidth {} Hz",
                path.display(),
                cfg.frame.n_subcarriers as f64 * cfg.frame.subcarrier_spacing_hz,
                cfg.frame.bandwidth_hz
            );
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::from_toml_str(&text, path)
}

pub fn save_config(path: &Path, cfg: &ScenarioConfig) -> Result<()> {
    crate::io::write_atomic(path, cfg.to_toml_string().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::default_config;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        ScenarioConfig::from_toml_str(text, Path::new("scenario.toml"))
    }

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = parse("[[scene.targets]]\nrange_m = 3\nvelocity_mps = 1\namplitude_db = -30\n").unwrap();
        assert_eq!(cfg.frame, default_config());
        assert_eq!(cfg.scene.targets.len(), 1);
        assert_eq!(cfg.processing, ProcessingSpec::default());
        assert_eq!(cfg.run, RunSpec::default());
        let scene = cfg.scene().unwrap();
        assert_eq!(scene.targets()[0].range(), 3.0);
        assert!((scene.targets()[0].amplitude().norm() - 10f64.powf(-1.5)).abs() < 1e-15);
        assert_eq!(scene.noise_power(), 0.0);
        assert_eq!(cfg.tracker_config().unwrap().dt, 0.01);
    }

    #[test]
    fn negative_range_names_field() {
        let err = parse("[[scene.targets]]\nrange_m = -3\namplitude_db = 0\n").unwrap_err();
        assert!(matches!(&err, Error::Invalid { field, .. } if field == "scene.targets[0].range_m"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn unknown_key_named_with_line() {
        let err = parse("[frame]\nn_subcarriers = 64\nbogus_key = 1\n").unwrap_err();
        match err {
            Error::Parse { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("bogus_key"), "{reason}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse("[run]\nn_frames = 2\nseed = = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn moving_clutter_rejected() {
        let err = parse("[[scene.clutter]]\nrange_m = 5\nvelocity_mps = 0.5\namplitude_db = 0\n").unwrap_err();
        assert!(err.to_string().contains("scene.clutter[0].velocity_mps"), "{err}");
    }

    #[test]
    fn invalid_processing_and_tracker() {
        assert!(parse("[processing]\npad_range = 0\n").unwrap_err().to_string().contains("pad_range"));
        assert!(parse("[tracker]\ngate = -1\n").unwrap_err().to_string().contains("tracker.gate"));
        assert!(parse("[frame]\nn_symbols = 0\n").unwrap_err().to_string().contains("frame.n_symbols"));
        assert!(parse("[run]\nn_frames = 0\n").unwrap_err().to_string().contains("run.n_frames"));
    }

    #[test]
    fn noise_in_db() {
        let cfg = parse("[scene]\nnoise_power_db = -30\n").unwrap();
        assert!((cfg.scene().unwrap().noise_power() - 1e-3).abs() < 1e-18);
        let cfg = parse("[scene]\nnoise_power_db = -inf\n").unwrap();
        assert_eq!(cfg.scene().unwrap().noise_power(), 0.0);
    }

    #[test]
    fn save_load_round_trip() {
        let text = "[frame]\nn_subcarriers = 64\nn_symbols = 20\n\n[scene]\nnoise_power_db = -20\n\n\
                    [[scene.targets]]\nrange_m = 3\nvelocity_mps = 1\namplitude_db = -30\n\n\
                    [[scene.clutter]]\nrange_m = 8.5\namplitude_db = -5\nphase_rad = 1.0\n\n\
                    [processing]\nwindow = \"hann\"\npad_range = 2\n\n[tracker]\ndt_s = 0.02\n";
        let cfg = parse(text).unwrap();
        let again = parse(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml_string(), cfg.to_toml_string());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        save_config(&path, &cfg).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
        assert!(matches!(load_config(&dir.path().join("missing.toml")), Err(Error::Io { .. })));
    }
}
