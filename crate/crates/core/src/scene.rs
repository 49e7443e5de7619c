//! Point-scatterer scene model standing in for the radio units.
//!
//! Every reflector contributes `a · exp(−j2π·n·Δf·τ) · exp(+j2π·m·T_sym·f_D)`
//! to the channel, with round-trip delay `τ = 2r/c` and Doppler
//! `f_D = 2v/λ`. Doppler only rotates the phase from symbol to symbol; there
//! is no inter-carrier interference term.

use ndarray::Array2;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::{FrameConfig, ResourceGrid};
use crate::spu::ChannelMatrix;
use crate::{seeded_rng, SPEED_OF_LIGHT};

const STREAM_JITTER: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// A single reflector. Positive velocity means moving away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTarget {
    range: f64,
    velocity: f64,
    amplitude: Complex64,
}

impl PointTarget {
    /// Checks the reflector against the unambiguous range `c/(2Δf)` and
    /// velocity `λ/(4·T_sym)` of `config`.
    pub fn new(range: f64, velocity: f64, amplitude: Complex64, config: &FrameConfig) -> Result<Self> {
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::invalid("range_m", format!("must be positive, got {range}")));
        }
        let max_range = SPEED_OF_LIGHT / (2.0 * config.subcarrier_spacing_hz);
        if range >= max_range {
            return Err(Error::invalid(
                "range_m",
                format!("{range} m is beyond the unambiguous range {max_range:.3} m"),
            ));
        }
        let max_velocity = config.wavelength() / (4.0 * config.symbol_duration());
        if !velocity.is_finite() || velocity.abs() >= max_velocity {
            return Err(Error::invalid(
                "velocity_mps",
                format!("|{velocity}| m/s exceeds the unambiguous velocity {max_velocity:.3} m/s"),
            ));
        }
        if !(amplitude.re.is_finite() && amplitude.im.is_finite()) {
            return Err(Error::invalid("amplitude", "must be finite"));
        }
        Ok(Self {
            range,
            velocity,
            amplitude,
        })
    }

    /// Amplitude given as `|a|²` in dB plus a phase in radians.
    pub fn from_db(range: f64, velocity: f64, amplitude_db: f64, phase_rad: f64, config: &FrameConfig) -> Result<Self> {
        let magnitude = 10f64.powf(amplitude_db / 20.0);
        Self::new(range, velocity, Complex64::from_polar(magnitude, phase_rad), config)
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    pub fn amplitude(&self) -> Complex64 {
        self.amplitude
    }

    /// Round-trip delay in seconds.
    pub fn delay(&self) -> f64 {
        2.0 * self.range / SPEED_OF_LIGHT
    }

    pub fn doppler(&self, config: &FrameConfig) -> f64 {
        2.0 * self.velocity / config.wavelength()
    }
}

/// Targets of interest plus static clutter, noise and timing jitter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    targets: Vec<PointTarget>,
    clutter: Vec<PointTarget>,
    noise_power: f64,
    sync_jitter_std: f64,
}

impl Scene {
    pub fn new(targets: Vec<PointTarget>, clutter: Vec<PointTarget>, noise_power: f64, sync_jitter_std: f64) -> Result<Self> {
        if let Some(i) = clutter.iter().position(|c| c.velocity != 0.0) {
            return Err(Error::invalid(format!("clutter[{i}].velocity_mps"), "clutter must be static"));
        }
        if !(noise_power.is_finite() && noise_power >= 0.0) {
            return Err(Error::invalid("noise_power", format!("must be non-negative, got {noise_power}")));
        }
        if !(sync_jitter_std.is_finite() && sync_jitter_std >= 0.0) {
            return Err(Error::invalid(
                "sync_jitter_std_s",
                format!("must be non-negative, got {sync_jitter_std}"),
            ));
        }
        Ok(Self {
            targets,
            clutter,
            noise_power,
            sync_jitter_std,
        })
    }

    pub fn targets(&self) -> &[PointTarget] {
        &self.targets
    }

    pub fn clutter(&self) -> &[PointTarget] {
        &self.clutter
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn sync_jitter_std(&self) -> f64 {
        self.sync_jitter_std
    }

    /// The same scene with the targets of interest removed, as seen during
    /// calibration.
    pub fn clutter_only(&self) -> Scene {
        Scene {
            targets: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Result<Scene> {
        Scene::new(self.targets.clone(), self.clutter.clone(), noise_power, self.sync_jitter_std)
    }

    pub fn reflectors(&self) -> impl Iterator<Item = &PointTarget> {
        self.targets.iter().chain(self.clutter.iter())
    }
}

/// `exp(−j2π·x)` with the integer part of `x` removed first.
fn unit_phasor(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.round();
    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * frac)
}

/// Noiseless channel of all reflectors in `scene` over the full grid.
///
/// With a nonzero `sync_jitter_std` a single Gaussian delay offset, drawn
/// from `seed`, is added to every reflector's delay for this frame.
pub fn synthesize_channel(scene: &Scene, config: &FrameConfig, seed: u64) -> ChannelMatrix {
    let (n_sc, n_sym) = config.shape();
    let jitter = if scene.sync_jitter_std > 0.0 {
        let z: f64 = StandardNormal.sample(&mut seeded_rng(seed, STREAM_JITTER));
        z * scene.sync_jitter_std
    } else {
        0.0
    };
    let df = config.subcarrier_spacing_hz;
    let t_sym = config.symbol_duration();

    let mut h = Array2::<Complex64>::zeros((n_sc, n_sym));
    for r in scene.reflectors() {
        let tau = r.delay() + jitter;
        let f_d = r.doppler(config);
        let range_phase: Vec<Complex64> = (0..n_sc).map(|n| unit_phasor(n as f64 * df * tau)).collect();
        let doppler_phase: Vec<Complex64> = (0..n_sym).map(|m| unit_phasor(-(m as f64) * t_sym * f_d)).collect();
        for (mut row, rp) in h.rows_mut().into_iter().zip(&range_phase) {
            let scaled = r.amplitude * rp;
            for (x, dp) in row.iter_mut().zip(&doppler_phase) {
                *x += scaled * dp;
            }
        }
    }
    ChannelMatrix::full(h)
}

/// Reflected grid `reference · H + w` on the active elements of `reference`,
/// with circularly-symmetric complex Gaussian noise of variance
/// `noise_power`.
pub fn apply_channel(reference: &ResourceGrid, channel: &ChannelMatrix, noise_power: f64, seed: u64) -> Result<ResourceGrid> {
    if reference.shape() != channel.shape() {
        return Err(Error::DimensionMismatch {
            expected: reference.shape(),
            actual: channel.shape(),
        });
    }
    if !(noise_power.is_finite() && noise_power >= 0.0) {
        return Err(Error::invalid("noise_power", format!("must be non-negative, got {noise_power}")));
    }
    let sigma = (noise_power / 2.0).sqrt();
    let mut rng = seeded_rng(seed, STREAM_NOISE);
    let mut data = Array2::<Complex64>::zeros(reference.shape());
    ndarray::Zip::from(&mut data)
        .and(reference.data())
        .and(reference.mask())
        .and(channel.data())
        .for_each(|out, &x, &active, &h| {
            if active {
                *out = x * h;
                if noise_power > 0.0 {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    *out += Complex64::new(re, im) * sigma;
                }
            }
        });
    ResourceGrid::new(data, reference.mask().clone())
}

/// Per resource element SNR `|a|²/σ²` for a unit-power reference;
/// infinite when there is no noise.
pub fn per_re_snr(target_amplitude: Complex64, noise_power: f64) -> Result<f64> {
    if !(noise_power >= 0.0) {
        return Err(Error::invalid("noise_power", format!("must be non-negative, got {noise_power}")));
    }
    if noise_power == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(target_amplitude.norm_sqr() / noise_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{default_config, generate_reference_frame};
    use proptest::prelude::*;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn small_config() -> FrameConfig {
        default_config().with_grid(128, 32)
    }

    #[test]
    fn empty_scene_is_zero() {
        let h = synthesize_channel(&Scene::default(), &small_config(), 0);
        assert!(h.data().iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn near_zero_target_is_flat() {
        let c = small_config();
        let t = PointTarget::new(1e-15, 0.0, one(), &c).unwrap();
        let scene = Scene::new(vec![t], vec![], 0.0, 0.0).unwrap();
        let h = synthesize_channel(&scene, &c, 0);
        assert!(h.data().iter().all(|x| (x - one()).norm() < 1e-9));
    }

    #[test]
    fn three_metre_target_phase() {
        let c = default_config();
        let t = PointTarget::new(3.0, 0.0, one(), &c).unwrap();
        let scene = Scene::new(vec![t], vec![], 0.0, 0.0).unwrap();
        let h = synthesize_channel(&scene, &c, 0);
        let arg = -2.0 * std::f64::consts::PI * 100.0 * 120e3 * (6.0 / SPEED_OF_LIGHT);
        let expected = Complex64::new(arg.cos(), arg.sin());
        assert!((h.data()[[100, 0]] - expected).norm() < 1e-12);
        assert!((h.data()[[100, 7]] - expected).norm() < 1e-12);
    }

    #[test]
    fn doppler_phase_progression() {
        let c = small_config();
        let t = PointTarget::new(2.0, 1.5, one(), &c).unwrap();
        let scene = Scene::new(vec![t], vec![], 0.0, 0.0).unwrap();
        let h = synthesize_channel(&scene, &c, 0);
        let f_d = 2.0 * 1.5 / c.wavelength();
        let m = 17.0;
        let tau = 4.0 / SPEED_OF_LIGHT;
        let n = 5.0;
        let phase = 2.0 * std::f64::consts::PI * (m * c.symbol_duration() * f_d - n * 120e3 * tau);
        let expected = Complex64::new(phase.cos(), phase.sin());
        assert!((h.data()[[5, 17]] - expected).norm() < 1e-12);
    }

    #[test]
    fn target_constructor_limits() {
        let c = default_config();
        assert!(PointTarget::new(-1.0, 0.0, one(), &c).is_err());
        assert!(PointTarget::new(1300.0, 0.0, one(), &c).is_err());
        assert!(PointTarget::new(1200.0, 0.0, one(), &c).is_ok());
        let vmax = c.wavelength() / (4.0 * c.symbol_duration());
        assert!(PointTarget::new(3.0, vmax, one(), &c).is_err());
        assert!(PointTarget::new(3.0, -vmax * 0.99, one(), &c).is_ok());
    }

    #[test]
    fn clutter_must_be_static() {
        let c = default_config();
        let moving = PointTarget::new(5.0, 0.5, one(), &c).unwrap();
        let err = Scene::new(vec![], vec![moving], 0.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("clutter[0].velocity_mps"));
        assert!(Scene::new(vec![], vec![], -1.0, 0.0).is_err());
        assert!(Scene::new(vec![], vec![], 0.0, -1e-12).is_err());
    }

    #[test]
    fn from_db_magnitude() {
        let c = default_config();
        let t = PointTarget::from_db(3.0, 0.0, -20.0, 0.5, &c).unwrap();
        assert!((t.amplitude().norm() - 0.1).abs() < 1e-15);
        assert!((t.amplitude().arg() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_channel_noiseless() {
        let c = small_config();
        let x = generate_reference_frame(&c, 1);
        let h = ChannelMatrix::full(Array2::from_elem(c.shape(), one()));
        let y = apply_channel(&x, &h, 0.0, 9).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn apply_channel_inverts() {
        let c = small_config();
        let x = generate_reference_frame(&c, 1);
        let t = PointTarget::new(7.0, -2.0, Complex64::new(0.3, 0.2), &c).unwrap();
        let h = synthesize_channel(&Scene::new(vec![t], vec![], 0.0, 0.0).unwrap(), &c, 0);
        let y = apply_channel(&x, &h, 0.0, 0).unwrap();
        for ((yv, xv), (hv, &m)) in y.data().iter().zip(x.data()).zip(h.data().iter().zip(x.mask())) {
            if m {
                assert!((yv / xv - hv).norm() < 1e-12);
            } else {
                assert_eq!(yv.norm(), 0.0);
            }
        }
    }

    #[test]
    fn inactive_reference_gates_noise() {
        let x = ResourceGrid::zeros((8, 4));
        let h = ChannelMatrix::full(Array2::from_elem((8, 4), one()));
        let y = apply_channel(&x, &h, 1.0, 5).unwrap();
        assert!(y.data().iter().all(|v| v.norm() == 0.0));
        assert!(y.mask().iter().all(|&m| !m));
    }

    #[test]
    fn apply_channel_shape_mismatch() {
        let x = ResourceGrid::zeros((8, 4));
        let h = ChannelMatrix::full(Array2::zeros((4, 8)));
        assert!(matches!(apply_channel(&x, &h, 0.0, 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn noise_variance() {
        let c = FrameConfig {
            tdd_dl: 1,
            tdd_ul: 0,
            ..default_config().with_grid(200, 100)
        };
        let x = generate_reference_frame(&c, 0);
        let h = ChannelMatrix::full(Array2::zeros(c.shape()));
        let y = apply_channel(&x, &h, 0.25, 3).unwrap();
        let mean = y.mean_active_power();
        assert!((mean - 0.25).abs() < 0.25 * 0.03, "{mean}");
    }

    #[test]
    fn snr_ratio() {
        assert_eq!(per_re_snr(one(), 1.0).unwrap(), 1.0);
        assert!((per_re_snr(Complex64::new(1e-2, 0.0), 1e-4).unwrap() - 1.0).abs() < 1e-12);
        assert!(per_re_snr(one(), 0.0).unwrap().is_infinite());
        assert!(per_re_snr(one(), -1.0).is_err());
    }

    #[test]
    fn jitter_shifts_delay() {
        let c = small_config();
        let t = PointTarget::new(3.0, 0.0, one(), &c).unwrap();
        let clean = Scene::new(vec![t], vec![], 0.0, 0.0).unwrap();
        let jittered = Scene::new(vec![t], vec![], 0.0, 40e-12).unwrap();
        let a = synthesize_channel(&jittered, &c, 1);
        let b = synthesize_channel(&jittered, &c, 1);
        assert_eq!(a, b);
        assert_ne!(a, synthesize_channel(&clean, &c, 1));
        // the offset is common to the whole frame: the phase slope stays linear in n
        let d1 = a.data()[[1, 0]] / a.data()[[0, 0]];
        let d2 = a.data()[[2, 0]] / a.data()[[1, 0]];
        assert!((d1 - d2).norm() < 1e-12);
    }

    fn arb_target(c: FrameConfig) -> impl Strategy<Value = PointTarget> {
        (0.1f64..100.0, -20.0f64..20.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_map(move |(r, v, re, im)| PointTarget::new(r, v, Complex64::new(re, im), &c).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn channel_is_linear_in_reflectors(
            a in prop::collection::vec(arb_target(default_config().with_grid(24, 12)), 0..4),
            b in prop::collection::vec(arb_target(default_config().with_grid(24, 12)), 0..4),
        ) {
            let c = default_config().with_grid(24, 12);
            let ha = synthesize_channel(&Scene::new(a.clone(), vec![], 0.0, 0.0).unwrap(), &c, 0);
            let hb = synthesize_channel(&Scene::new(b.clone(), vec![], 0.0, 0.0).unwrap(), &c, 0);
            let all: Vec<_> = a.into_iter().chain(b).collect();
            let hab = synthesize_channel(&Scene::new(all, vec![], 0.0, 0.0).unwrap(), &c, 0);
            for ((x, y), z) in ha.data().iter().zip(hb.data()).zip(hab.data()) {
                prop_assert!((x + y - z).norm() < 1e-12);
            }
        }

        #[test]
        fn static_clutter_constant_over_symbols(ranges in prop::collection::vec(0.1f64..500.0, 1..4), seed in any::<u64>()) {
            let c = default_config().with_grid(16, 10);
            let clutter: Vec<_> = ranges.iter().map(|&r| PointTarget::new(r, 0.0, one(), &c).unwrap()).collect();
            let h = synthesize_channel(&Scene::new(vec![], clutter, 0.0, 0.0).unwrap(), &c, seed);
            for row in h.data().rows() {
                for x in row.iter() {
                    prop_assert_eq!(*x, row[0]);
                }
            }
        }

        #[test]
        fn no_jitter_means_seed_independent(t in arb_target(default_config().with_grid(16, 8)), s1 in any::<u64>(), s2 in any::<u64>()) {
            let c = default_config().with_grid(16, 8);
            let scene = Scene::new(vec![t], vec![], 0.0, 0.0).unwrap();
            prop_assert_eq!(synthesize_channel(&scene, &c, s1), synthesize_channel(&scene, &c, s2));
        }
    }
}
