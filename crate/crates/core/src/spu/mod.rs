//! The sensing processing unit: channel estimation, clutter removal,
//! periodogram and peak extraction for one frame at a time.

mod channel;
mod peaks;
mod periodogram;

pub use channel::{capture_clutter_reference, compute_channel, remove_clutter, ChannelMatrix, DIVISION_EPSILON};
pub use peaks::{extract_peaks, interpolate_peak, Detection};
pub use periodogram::{bins_to_physical, compute_periodogram, Periodogram, Processing, Window};

use crate::error::Result;
use crate::frame::{FrameConfig, ResourceGrid};

/// Periodogram and peak-extraction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessingParams {
    /// Absolute linear periodogram power a peak must exceed.
    pub threshold: f64,
    pub pad_range: usize,
    pub pad_doppler: usize,
    pub window: Window,
    pub max_targets: usize,
}

impl Default for ProcessingParams {
    fn default() -> Self {
        Self {
            threshold: 1e6,
            pad_range: 1,
            pad_doppler: 1,
            window: Window::Rectangular,
            max_targets: 16,
        }
    }
}

/// Output of [`process_frame`].
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub periodogram: Periodogram,
    pub detections: Vec<Detection>,
}

/// Runs channel computation, optional clutter removal, the periodogram and
/// peak extraction on one (reflected, reference) pair.
pub fn process_frame(
    reflected: &ResourceGrid,
    reference: &ResourceGrid,
    clutter: Option<&ChannelMatrix>,
    config: &FrameConfig,
    params: &ProcessingParams,
) -> Result<FrameResult> {
    let mut channel = compute_channel(reflected, reference)?;
    if let Some(clutter) = clutter {
        channel = remove_clutter(&channel, clutter)?;
    }
    let periodogram = compute_periodogram(&channel, config, params.pad_range, params.pad_doppler, params.window)?;
    let detections = extract_peaks(&periodogram, params.threshold, params.max_targets)?;
    Ok(FrameResult {
        periodogram,
        detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{default_config, generate_reference_frame, qam16_symbol};
    use crate::scene::{apply_channel, per_re_snr, synthesize_channel, PointTarget, Scene};
    use num_complex::Complex64;

    fn desk() -> FrameConfig {
        default_config().with_grid(16, 8)
    }

    fn run(scene: &Scene, c: &FrameConfig, seed: u64, params: &ProcessingParams) -> FrameResult {
        let reference = generate_reference_frame(c, seed);
        let h = synthesize_channel(scene, c, seed);
        let reflected = apply_channel(&reference, &h, scene.noise_power(), seed).unwrap();
        process_frame(&reflected, &reference, None, c, params).unwrap()
    }

    fn params(threshold: f64) -> ProcessingParams {
        ProcessingParams {
            threshold,
            ..Default::default()
        }
    }

    #[test]
    fn on_grid_target_has_no_offset() {
        let c = default_config().with_grid(64, 20);
        let step = crate::SPEED_OF_LIGHT / (2.0 * 64.0 * c.subcarrier_spacing_hz);
        let vstep = c.wavelength() / (2.0 * 20.0 * c.symbol_duration());
        let t = PointTarget::new(5.0 * step, 3.0 * vstep, Complex64::new(1.0, 0.0), &c).unwrap();
        let scene = Scene::new(vec![t], vec![], 0.0, 0.0).unwrap();
        let out = run(&scene, &c, 1, &params(1.0));
        let d = &out.detections[0];
        assert_eq!(d.bin, (5, 13));
        assert!(d.frac.0.abs() < 0.02 && (d.range - 5.0 * step).abs() < 0.02 * step);
        assert!((d.velocity - 3.0 * vstep).abs() < 0.02 * vstep);
    }

    #[test]
    fn two_targets_ordered_by_power() {
        let c = default_config().with_grid(64, 20);
        let step = crate::SPEED_OF_LIGHT / (2.0 * 64.0 * c.subcarrier_spacing_hz);
        let weak = PointTarget::new(5.0 * step, 0.0, Complex64::new(0.5, 0.0), &c).unwrap();
        let strong = PointTarget::new(20.0 * step, 0.0, Complex64::new(1.0, 0.0), &c).unwrap();
        let scene = Scene::new(vec![weak, strong], vec![], 0.0, 0.0).unwrap();
        // TDD gating leaves Doppler images 12 dB down; the threshold sits between.
        let out = run(&scene, &c, 3, &params(1e5));
        assert_eq!(out.detections.len(), 2);
        assert_eq!(out.detections[0].bin.0, 20);
        assert_eq!(out.detections[1].bin.0, 5);
        let ratio = out.detections[0].power / out.detections[1].power;
        assert!((ratio - 4.0).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn processing_is_linear_in_reflectors() {
        let c = desk();
        let a = PointTarget::new(3.0, 1.0, Complex64::new(0.3, 0.2), &c).unwrap();
        let b = PointTarget::new(40.0, -2.0, Complex64::new(-0.1, 0.7), &c).unwrap();
        let reference = generate_reference_frame(&c, 5);
        let est = |targets: Vec<PointTarget>| {
            let s = Scene::new(targets, vec![], 0.0, 0.0).unwrap();
            let refl = apply_channel(&reference, &synthesize_channel(&s, &c, 5), 0.0, 5).unwrap();
            compute_channel(&refl, &reference).unwrap()
        };
        let (ha, hb, hab) = (est(vec![a]), est(vec![b]), est(vec![a, b]));
        for ((x, y), z) in ha.data().iter().zip(hb.data().iter()).zip(hab.data().iter()) {
            assert!((x + y - z).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_peak_is_coherent_sum() {
        let c = desk();
        let amp = Complex64::new(0.6, -0.8);
        let t = PointTarget::new(1e-15, 0.0, amp, &c).unwrap();
        let scene = Scene::new(vec![t], vec![], 0.0, 0.0).unwrap();
        let out = run(&scene, &c, 2, &params(1.0));
        // 16 subcarriers × 7 downlink symbols under 4:1 TDD
        let n_active = 112.0f64;
        let p = out.periodogram.values()[[0, 4]];
        assert!((p - (n_active * amp.norm()).powi(2)).abs() < 1e-9 * p);
    }

    /// E[1/|X|²] over the normalized 16-QAM alphabet, by enumeration.
    fn mean_inverse_power() -> f64 {
        (0..16u8).map(|i| 1.0 / qam16_symbol(i).unwrap().norm_sqr()).sum::<f64>() / 16.0
    }

    #[test]
    fn integrated_snr_monte_carlo() {
        let c = desk();
        let amp = Complex64::new(1.0, 0.0);
        let sigma2 = 0.5;
        let t = PointTarget::new(1e-15, 0.0, amp, &c).unwrap();
        let trials = 400;
        let n_active = 112.0;
        let mut floor = 0.0;
        for seed in 0..trials {
            // Noise-only run: the target term is deterministic and separable.
            let s = Scene::new(vec![], vec![], sigma2, 0.0).unwrap();
            let out = run(&s, &c, seed, &params(f64::INFINITY));
            floor += out.periodogram.total_power() / (16.0 * 8.0);
        }
        floor /= trials as f64;
        let expected_floor = n_active * sigma2 * mean_inverse_power();
        assert!((floor / expected_floor - 1.0).abs() < 0.05, "{floor} vs {expected_floor}");

        let clean = run(&Scene::new(vec![t], vec![], 0.0, 0.0).unwrap(), &c, 0, &params(1.0));
        let peak = clean.periodogram.values()[[0, 4]];
        let gain = (peak / floor) / per_re_snr(amp, sigma2).unwrap();
        let want = n_active / mean_inverse_power();
        assert!((gain / want - 1.0).abs() < 0.05, "{gain} vs {want}");
        assert!((mean_inverse_power() - 1.888_888_888_888_889).abs() < 1e-12);
    }

    #[test]
    fn clutter_averaging_reduces_error() {
        let c = desk();
        let clutter = PointTarget::new(15.0, 0.0, Complex64::new(1.0, 0.0), &c).unwrap();
        let scene = Scene::new(vec![], vec![clutter], 0.1, 0.0).unwrap();
        let truth = synthesize_channel(&scene, &c, 0);
        let capture = |seed: u64| {
            let reference = generate_reference_frame(&c, seed);
            let refl = apply_channel(&reference, &truth, scene.noise_power(), seed).unwrap();
            compute_channel(&refl, &reference).unwrap()
        };
        let error = |est: &ChannelMatrix| remove_clutter(est, &truth).unwrap().energy();
        let single: f64 = (0..100).map(|k| error(&capture(k))).sum::<f64>() / 100.0;
        let frames: Vec<_> = (1000..1100).map(capture).collect();
        let averaged = error(&capture_clutter_reference(&frames).unwrap());
        let ratio = single / averaged;
        // The error of one mean is a single χ² draw with 224 degrees of freedom.
        assert!((70.0..140.0).contains(&ratio), "{ratio}");
    }
}
