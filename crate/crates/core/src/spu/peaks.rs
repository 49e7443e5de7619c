use serde::{Deserialize, Serialize};

use super::periodogram::{bins_to_physical, Periodogram};
use crate::error::{Error, Result};

/// One extracted reflector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub range: f64,
    pub velocity: f64,
    /// Periodogram value at the peak bin (linear).
    pub power: f64,
    /// `(range_bin, doppler_column)` in the periodogram.
    pub bin: (usize, usize),
    /// Sub-bin offsets `(δr, δv)`, each in (−0.5, 0.5).
    pub frac: (f64, f64),
}

/// Largest offset strictly inside the open interval (−0.5, 0.5).
const MAX_OFFSET: f64 = 0.5 - f64::EPSILON;

/// Neighbours of `(i, j)` over the 8-neighbourhood. The Doppler axis wraps,
/// the range axis does not. Duplicates from wrapping on tiny axes and the
/// bin itself are skipped.
fn neighbours(bin: (usize, usize), shape: (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
    let (i, j) = bin;
    let (n, m) = shape;
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(8);
    for di in [-1isize, 0, 1] {
        let ii = i as isize + di;
        if ii < 0 || ii >= n as isize {
            continue;
        }
        for dj in [-1isize, 0, 1] {
            let jj = (j as isize + dj).rem_euclid(m as isize) as usize;
            let nb = (ii as usize, jj);
            if nb != bin && !out.contains(&nb) {
                out.push(nb);
            }
        }
    }
    out.into_iter()
}

/// Strict 8-neighbourhood maximum; on equal values the lexicographically
/// smaller bin wins, so a plateau yields a single peak.
fn is_local_maximum(p: &Periodogram, bin: (usize, usize)) -> bool {
    let v = p.values()[bin];
    neighbours(bin, p.shape()).all(|nb| {
        let w = p.values()[nb];
        v > w || (v == w && bin < nb)
    })
}

fn parabolic_vertex(below: f64, centre: f64, above: f64) -> f64 {
    let denom = below - 2.0 * centre + above;
    if denom.abs() < 1e-30 {
        return 0.0;
    }
    (0.5 * (below - above) / denom).clamp(-MAX_OFFSET, MAX_OFFSET)
}

/// Parabolic sub-bin offsets `(δr, δv)` around a local maximum.
///
/// Each axis fits a parabola through `(y₋, y₀, y₊)` and returns its vertex
/// `0.5·(y₋ − y₊)/(y₋ − 2y₀ + y₊)`. Bins on the first or last range row get
/// `δr = 0`; Doppler neighbours wrap.
pub fn interpolate_peak(p: &Periodogram, bin: (usize, usize)) -> Result<(f64, f64)> {
    let (n, m) = p.shape();
    let (i, j) = bin;
    if i >= n || j >= m {
        return Err(Error::BinOutOfRange(i, j));
    }
    if !is_local_maximum(p, bin) {
        return Err(Error::NotLocalMaximum(i, j));
    }
    let v = p.values();
    let dr = if i == 0 || i + 1 == n {
        0.0
    } else {
        parabolic_vertex(v[[i - 1, j]], v[[i, j]], v[[i + 1, j]])
    };
    let dv = if m < 3 {
        0.0
    } else {
        parabolic_vertex(v[[i, (j + m - 1) % m]], v[[i, j]], v[[i, (j + 1) % m]])
    };
    Ok((dr, dv))
}

/// Local maxima above `threshold`, strongest first.
///
/// Equal powers are ordered by `(range_bin, doppler_column)`. At most
/// `max_targets` detections are returned.
pub fn extract_peaks(p: &Periodogram, threshold: f64, max_targets: usize) -> Result<Vec<Detection>> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold", format!("must be positive, got {threshold}")));
    }
    let mut detections = Vec::new();
    for (bin, &power) in p.values().indexed_iter() {
        if power <= threshold || !is_local_maximum(p, bin) {
            continue;
        }
        let frac = interpolate_peak(p, bin)?;
        let (range, velocity) = bins_to_physical(bin, frac, p)?;
        detections.push(Detection {
            range,
            velocity,
            power,
            bin,
            frac,
        });
    }
    detections.sort_by(|a, b| b.power.total_cmp(&a.power).then(a.bin.cmp(&b.bin)));
    detections.truncate(max_targets);
    Ok(detections)
}
