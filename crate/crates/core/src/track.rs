//! Constant-velocity Kalman tracking of (range, range-rate) with greedy
//! nearest-neighbour association.
//!
//! Both range and the Doppler-derived radial speed are measured, so the
//! measurement matrix is the identity.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Innovation covariances worse conditioned than this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Frame interval in seconds.
    pub dt: f64,
    /// White-acceleration spectral density, (m/s²)².
    pub process_noise: f64,
    /// Measurement covariance over (range m, speed m/s).
    pub meas_noise: Matrix2<f64>,
    /// Gate on the squared Mahalanobis distance `yᵀS⁻¹y`.
    pub gate: f64,
    /// Consecutive missed frames after which a track is dropped.
    pub max_misses: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            process_noise: 1.0,
            meas_noise: Matrix2::new(0.05f64.powi(2), 0.0, 0.0, 0.1f64.powi(2)),
            gate: 9.21,
            max_misses: 10,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt_s", format!("must be positive, got {}", self.dt)));
        }
        if !(self.process_noise.is_finite() && self.process_noise >= 0.0) {
            return Err(Error::invalid(
                "process_noise",
                format!("must be non-negative, got {}", self.process_noise),
            ));
        }
        let r = self.meas_noise;
        if (r[(0, 1)] - r[(1, 0)]).abs() > 1e-12 * r.norm() || !is_positive_definite(&r) {
            return Err(Error::invalid("meas_noise", "must be symmetric positive-definite"));
        }
        if !(self.gate.is_finite() && self.gate > 0.0) {
            return Err(Error::invalid("gate", format!("must be positive, got {}", self.gate)));
        }
        Ok(())
    }

    /// Discrete white-acceleration process covariance for one step of `dt`.
    pub fn process_covariance(&self, dt: f64) -> Matrix2<f64> {
        let q = self.process_noise;
        q * Matrix2::new(dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt.powi(3) / 2.0, dt * dt)
    }
}

fn is_positive_definite(m: &Matrix2<f64>) -> bool {
    m[(0, 0)] > 0.0 && m.determinant() > 0.0 && m.iter().all(|v| v.is_finite())
}

fn condition_number(s: &Matrix2<f64>) -> f64 {
    let eig = SymmetricEigen::new(*s).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// A single measurement fed to the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub range: f64,
    pub speed: f64,
    /// Linear power, used only for association order.
    pub power: f64,
}

impl Measurement {
    pub fn vector(&self) -> Vector2<f64> {
        Vector2::new(self.range, self.speed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub id: u64,
    /// (range m, range-rate m/s).
    pub state: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    /// Frames since the track was spawned, counting the first.
    pub age: u32,
    /// Consecutive frames without an associated detection.
    pub misses: u32,
}

impl TrackState {
    /// New track at a measurement, with covariance `10·R`.
    pub fn spawn(id: u64, z: &Measurement, cfg: &TrackerConfig) -> Self {
        Self {
            id,
            state: z.vector(),
            covariance: cfg.meas_noise * 10.0,
            age: 1,
            misses: 0,
        }
    }

    pub fn range(&self) -> f64 {
        self.state[0]
    }

    pub fn speed(&self) -> f64 {
        self.state[1]
    }
}

/// Constant-velocity prediction over `cfg.dt`.
pub fn kf_predict(track: &TrackState, cfg: &TrackerConfig) -> TrackState {
    predict_over(track, cfg, cfg.dt)
}

fn predict_over(track: &TrackState, cfg: &TrackerConfig, dt: f64) -> TrackState {
    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    TrackState {
        state: f * track.state,
        covariance: symmetrize(f * track.covariance * f.transpose() + cfg.process_covariance(dt)),
        ..track.clone()
    }
}

/// Innovation `z − x` and its covariance `P + R`.
pub fn innovation(track: &TrackState, z: &Measurement, cfg: &TrackerConfig) -> (Vector2<f64>, Matrix2<f64>) {
    (z.vector() - track.state, track.covariance + cfg.meas_noise)
}

/// Squared Mahalanobis distance `yᵀS⁻¹y`; infinite if `S` is singular.
pub fn mahalanobis_sq(track: &TrackState, z: &Measurement, cfg: &TrackerConfig) -> f64 {
    let (y, s) = innovation(track, z, cfg);
    match s.try_inverse() {
        Some(s_inv) => (y.transpose() * s_inv * y)[(0, 0)],
        None => f64::INFINITY,
    }
}

/// Linear update with identity measurement matrix.
pub fn kf_update(track: &TrackState, z: &Measurement, cfg: &TrackerConfig) -> Result<TrackState> {
    let (y, s) = innovation(track, z, cfg);
    let cond = condition_number(&s);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularInnovation(cond));
    }
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovation(cond))?;
    let k = track.covariance * s_inv;
    Ok(TrackState {
        state: track.state + k * y,
        covariance: symmetrize((Matrix2::identity() - k) * track.covariance),
        ..track.clone()
    })
}

/// Outcome of matching one frame's detections to the existing tracks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(track index, detection index)`.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

/// Greedy nearest-neighbour association.
///
/// Detections are visited strongest first; each takes the free track with
/// the smallest squared Mahalanobis distance, provided it is below the gate.
pub fn associate(tracks: &[TrackState], detections: &[Measurement], cfg: &TrackerConfig) -> Assignment {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].power.total_cmp(&detections[a].power).then(a.cmp(&b)));

    let mut taken = vec![false; tracks.len()];
    let mut out = Assignment::default();
    for d in order {
        let best = tracks
            .iter()
            .enumerate()
            .filter(|(t, _)| !taken[*t])
            .map(|(t, track)| (t, mahalanobis_sq(track, &detections[d], cfg)))
            .filter(|&(_, dist)| dist < cfg.gate)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((t, _)) => {
                taken[t] = true;
                out.pairs.push((t, d));
            }
            None => out.unmatched_detections.push(d),
        }
    }
    out.unmatched_tracks = (0..tracks.len()).filter(|&t| !taken[t]).collect();
    out
}

/// Multi-target tracker for one sensing stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<TrackState>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// Advances all tracks by one frame and incorporates `detections`.
    ///
    /// Matched tracks are updated, unmatched ones coast and are dropped once
    /// they reach `max_misses` consecutive misses, and unmatched detections
    /// start new tracks.
    pub fn step(&mut self, detections: &[Measurement]) -> Result<&[TrackState]> {
        let predicted: Vec<TrackState> = self.tracks.iter().map(|t| kf_predict(t, &self.cfg)).collect();
        let assignment = associate(&predicted, detections, &self.cfg);

        let mut next = predicted;
        for &(t, d) in &assignment.pairs {
            let updated = kf_update(&next[t], &detections[d], &self.cfg)?;
            next[t] = TrackState {
                misses: 0,
                age: updated.age + 1,
                ..updated
            };
        }
        for &t in &assignment.unmatched_tracks {
            next[t].misses += 1;
            next[t].age += 1;
        }
        next.retain(|t| t.misses < self.cfg.max_misses);
        for &d in &assignment.unmatched_detections {
            next.push(TrackState::spawn(self.next_id, &detections[d], &self.cfg));
            self.next_id += 1;
        }
        self.tracks = next;
        Ok(&self.tracks)
    }
}
