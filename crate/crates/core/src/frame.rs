//! OFDM frame geometry, the 16-QAM reference grid and the TDD activity mask.
//!
//! The default configuration is the μ = 3 FR2 setup: 27.6 GHz carrier,
//! 200 MHz channel, 120 kHz subcarrier spacing, 1120 symbols per 10 ms
//! frame and a 4:1 DL/UL split. The subcarrier count defaults to
//! 1584 (132 resource blocks of 12 subcarriers).

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{seeded_rng, SPEED_OF_LIGHT};

const STREAM_REFERENCE: u64 = 1;

/// Physical description of one radio frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub frame_duration_s: f64,
    /// Downlink symbols per TDD period.
    pub tdd_dl: usize,
    /// Uplink symbols per TDD period.
    pub tdd_ul: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> FrameConfig {
    FrameConfig {
        carrier_freq_hz: 27.6e9,
        bandwidth_hz: 200e6,
        subcarrier_spacing_hz: 120e3,
        n_subcarriers: 1584,
        n_symbols: 1120,
        frame_duration_s: 10e-3,
        tdd_dl: 4,
        tdd_ul: 1,
    }
}

impl FrameConfig {
    /// OFDM symbol duration including cyclic prefix, `frame_duration / M`.
    pub fn symbol_duration(&self) -> f64 {
        self.frame_duration_s / self.n_symbols as f64
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_subcarriers, self.n_symbols)
    }

    /// True when the occupied band `N·Δf` is wider than the nominal channel.
    /// Such a configuration is accepted but should be reported to the user.
    pub fn exceeds_bandwidth(&self) -> bool {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz > self.bandwidth_hz
    }

    /// Keeps the symbol duration of `self` and resizes the grid to `n × m`.
    pub fn with_grid(&self, n_subcarriers: usize, n_symbols: usize) -> FrameConfig {
        FrameConfig {
            n_subcarriers,
            n_symbols,
            frame_duration_s: self.symbol_duration() * n_symbols as f64,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be a positive finite number, got {v}")))
            }
        }
        positive("carrier_freq_hz", self.carrier_freq_hz)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("subcarrier_spacing_hz", self.subcarrier_spacing_hz)?;
        positive("frame_duration_s", self.frame_duration_s)?;
        if self.n_subcarriers == 0 {
            return Err(Error::invalid("n_subcarriers", "must be at least 1"));
        }
        if self.n_symbols == 0 {
            return Err(Error::invalid("n_symbols", "must be at least 1"));
        }
        if self.tdd_dl == 0 {
            return Err(Error::invalid("tdd_dl", "must be at least 1"));
        }
        Ok(())
    }
}

/// Frequency-domain resource elements of one frame with their activity mask.
///
/// Rows are subcarriers, columns are OFDM symbols. Inactive elements are
/// always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    data: Array2<Complex64>,
    mask: Array2<bool>,
}

impl ResourceGrid {
    /// Builds a grid, forcing inactive elements to zero.
    pub fn new(mut data: Array2<Complex64>, mask: Array2<bool>) -> Result<Self> {
        if data.dim() != mask.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                actual: mask.dim(),
            });
        }
        ndarray::Zip::from(&mut data).and(&mask).for_each(|d, &active| {
            if !active {
                *d = Complex64::new(0.0, 0.0);
            }
        });
        Ok(Self { data, mask })
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            data: Array2::zeros(shape),
            mask: Array2::from_elem(shape, false),
        }
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Mean of `|x|²` over active elements, 0 for an empty mask.
    pub fn mean_active_power(&self) -> f64 {
        let n = self.active_count();
        if n == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(self.mask.iter())
            .filter(|(_, &m)| m)
            .map(|(d, _)| d.norm_sqr())
            .sum();
        sum / n as f64
    }

    pub fn into_parts(self) -> (Array2<Complex64>, Array2<bool>) {
        (self.data, self.mask)
    }
}

/// Symbol-wise TDD gating: within each period of `dl + ul` symbols the first
/// `dl` are downlink (true). Every subcarrier of a symbol shares its state.
pub fn tdd_mask(config: &FrameConfig) -> Array2<bool> {
    let period = config.tdd_dl + config.tdd_ul;
    Array2::from_shape_fn(config.shape(), |(_, m)| m % period < config.tdd_dl)
}

const QAM16_SCALE: f64 = 0.316_227_766_016_837_94; // 1/√10

/// Gray code for two bits onto one PAM-4 axis: 00→−3, 01→−1, 11→+1, 10→+3.
const PAM4_GRAY: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

/// Gray-mapped, unit-average-power 16-QAM point for a 4-bit index.
///
/// Bits `b3 b2` select the in-phase level and `b1 b0` the quadrature level,
/// each through the PAM-4 Gray code `00 → −3, 01 → −1, 11 → +1, 10 → +3`:
///
/// | index | point      | index | point      | index | point      | index | point      |
/// |-------|------------|-------|------------|-------|------------|-------|------------|
/// | 0     | −3 − 3j    | 4     | −1 − 3j    | 8     | +3 − 3j    | 12    | +1 − 3j    |
/// | 1     | −3 − 1j    | 5     | −1 − 1j    | 9     | +3 − 1j    | 13    | +1 − 1j    |
/// | 2     | −3 + 3j    | 6     | −1 + 3j    | 10    | +3 + 3j    | 14    | +1 + 3j    |
/// | 3     | −3 + 1j    | 7     | −1 + 1j    | 11    | +3 + 1j    | 15    | +1 + 1j    |
///
/// All points are scaled by 1/√10.
pub fn qam16_symbol(index: u8) -> Result<Complex64> {
    if index > 15 {
        return Err(Error::invalid("index", format!("16-QAM index must be 0..=15, got {index}")));
    }
    let i = PAM4_GRAY[(index >> 2) as usize];
    let q = PAM4_GRAY[(index & 0b11) as usize];
    Ok(Complex64::new(i, q) * QAM16_SCALE)
}

/// Random 16-QAM reference frame on the downlink resource elements.
///
/// The constellation is drawn as a shuffled balanced multiset: every full
/// block of 16 active elements holds each point once, and the remaining
/// `count mod 16` elements take uniformly drawn unit-modulus points
/// (`|x|² = 1`). This keeps each element a uniformly placed constellation
/// point while making the mean active power exactly one.
pub fn generate_reference_frame(config: &FrameConfig, seed: u64) -> ResourceGrid {
    let mask = tdd_mask(config);
    let active = mask.iter().filter(|&&m| m).count();
    let mut rng = seeded_rng(seed, STREAM_REFERENCE);

    let mut indices: Vec<u8> = Vec::with_capacity(active);
    for _ in 0..active / 16 {
        indices.extend(0u8..16);
    }
    // Points with one coordinate ±1 and the other ±3 have |x|² = 1.
    const UNIT_POWER: [u8; 8] = [1, 3, 4, 6, 9, 11, 12, 14];
    for _ in 0..active % 16 {
        indices.push(UNIT_POWER[rng.random_range(0..UNIT_POWER.len())]);
    }
    indices.shuffle(&mut rng);

    let mut data = Array2::zeros(config.shape());
    let mut next = indices.into_iter();
    for (d, &m) in data.iter_mut().zip(mask.iter()) {
        if m {
            let idx = next.next().expect("one index per active element");
            *d = qam16_symbol(idx).expect("index < 16");
        }
    }
    ResourceGrid { data, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_parameters() {
        let c = default_config();
        assert_eq!(c.subcarrier_spacing_hz, 120_000.0);
        assert_eq!(c.n_symbols, 1120);
        assert_eq!(c.n_subcarriers, 1584);
        assert!((c.symbol_duration() - 8.928_571_428_571e-6).abs() < 1e-15);
        assert!((c.symbol_duration() * c.n_symbols as f64 - c.frame_duration_s).abs() < 1e-18);
        // 299792458 / 27.6e9
        assert!((c.wavelength() - 0.010_862_045_579_710_145).abs() < 1e-15);
        assert!((c.wavelength() * c.carrier_freq_hz / SPEED_OF_LIGHT - 1.0).abs() < 1e-12);
        assert!(!c.exceeds_bandwidth());
        c.validate().unwrap();
    }

    #[test]
    fn oversized_band_is_flagged_not_rejected() {
        let c = FrameConfig {
            n_subcarriers: 2000,
            ..default_config()
        };
        assert!(c.exceeds_bandwidth());
        c.validate().unwrap();
    }

    #[test]
    fn validation_names_field() {
        let c = FrameConfig {
            subcarrier_spacing_hz: -1.0,
            ..default_config()
        };
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("subcarrier_spacing_hz"), "{err}");
    }

    #[test]
    fn tdd_4_1_pattern() {
        let c = default_config().with_grid(3, 10);
        let mask = tdd_mask(&c);
        let expected = [true, true, true, true, false, true, true, true, true, false];
        for row in mask.rows() {
            assert_eq!(row.to_vec(), expected);
        }
    }

    #[test]
    fn tdd_without_uplink_is_all_true() {
        let c = FrameConfig {
            tdd_dl: 1,
            tdd_ul: 0,
            ..default_config().with_grid(4, 7)
        };
        assert!(tdd_mask(&c).iter().all(|&m| m));
    }

    #[test]
    fn default_tdd_keeps_896_symbols() {
        let c = default_config();
        let mask = tdd_mask(&c);
        let active_columns = mask.columns().into_iter().filter(|col| col[0]).count();
        // pattern expansion: 1120 / 5 full periods of 4 DL symbols
        let expected = (0..1120).filter(|m| m % 5 < 4).count();
        assert_eq!(expected, 896);
        assert_eq!(active_columns, expected);
    }

    #[test]
    fn qam16_constellation() {
        let points: Vec<Complex64> = (0..16).map(|i| qam16_symbol(i).unwrap()).collect();
        let mean_power: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((mean_power - 1.0).abs() < 1e-12);
        let sum: Complex64 = points.iter().sum();
        assert!(sum.norm() < 1e-12);
        let s = 10f64.sqrt();
        assert!((points[0] - Complex64::new(-3.0, -3.0) / s).norm() < 1e-15);
        assert!((points[15] - Complex64::new(1.0, 1.0) / s).norm() < 1e-15);
        for (a, pa) in points.iter().enumerate() {
            for pb in &points[a + 1..] {
                assert!((pa - pb).norm() > 0.1);
            }
        }
        // quadrant symmetry of moduli: 4 inner, 8 middle, 4 outer
        let count = |p2: f64| points.iter().filter(|p| (p.norm_sqr() - p2).abs() < 1e-12).count();
        assert_eq!((count(0.2), count(1.0), count(1.8)), (4, 8, 4));
        assert!(qam16_symbol(16).is_err());
    }

    #[test]
    fn qam16_gray_neighbours_differ_in_one_bit() {
        for a in 0u8..16 {
            for b in 0u8..16 {
                let d = (qam16_symbol(a).unwrap() - qam16_symbol(b).unwrap()).norm();
                if (d - 2.0 / 10f64.sqrt()).abs() < 1e-12 {
                    assert_eq!((a ^ b).count_ones(), 1, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn reference_frame_is_deterministic() {
        let c = default_config().with_grid(64, 40);
        assert_eq!(generate_reference_frame(&c, 7), generate_reference_frame(&c, 7));
        assert_ne!(generate_reference_frame(&c, 7), generate_reference_frame(&c, 8));
    }

    #[test]
    fn reference_frame_magnitudes() {
        let c = default_config().with_grid(50, 33);
        let grid = generate_reference_frame(&c, 3);
        let moduli = [0.2f64.sqrt(), 1.0, 1.8f64.sqrt()];
        for (d, &m) in grid.data().iter().zip(grid.mask().iter()) {
            if m {
                assert!(moduli.iter().any(|r| (d.norm() - r).abs() < 1e-12));
            } else {
                assert_eq!(*d, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn full_mask_unit_power() {
        let c = FrameConfig {
            tdd_dl: 1,
            tdd_ul: 0,
            ..default_config().with_grid(37, 11)
        };
        let grid = generate_reference_frame(&c, 11);
        assert!(grid.mask().iter().all(|&m| m));
        assert!((grid.mean_active_power() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_new_zeroes_inactive() {
        let data = Array2::from_elem((2, 2), Complex64::new(1.0, 1.0));
        let mask = ndarray::array![[true, false], [false, true]];
        let g = ResourceGrid::new(data, mask).unwrap();
        assert_eq!(g.data()[[0, 1]], Complex64::new(0.0, 0.0));
        assert_eq!(g.data()[[1, 1]], Complex64::new(1.0, 1.0));
        assert!(ResourceGrid::new(Array2::zeros((2, 3)), Array2::from_elem((2, 2), true)).is_err());
    }

    proptest! {
        #[test]
        fn tdd_mask_periodic(dl in 1usize..=8, ul in 0usize..=8, n in 1usize..6, m in 1usize..=64) {
            let c = FrameConfig { tdd_dl: dl, tdd_ul: ul, ..default_config().with_grid(n, m) };
            let mask = tdd_mask(&c);
            let period = dl + ul;
            for s in 0..m {
                for k in 0..n {
                    prop_assert_eq!(mask[[k, s]], mask[[0, s]]);
                }
                if s + period < m {
                    prop_assert_eq!(mask[[0, s]], mask[[0, s + period]]);
                }
                prop_assert_eq!(mask[[0, s]], s % period < dl);
            }
        }

        #[test]
        fn reference_grid_invariants(seed in any::<u64>(), n in 1usize..40, m in 1usize..40, dl in 1usize..5, ul in 0usize..3) {
            let c = FrameConfig { tdd_dl: dl, tdd_ul: ul, ..default_config().with_grid(n, m) };
            let grid = generate_reference_frame(&c, seed);
            prop_assert_eq!(grid.mask(), &tdd_mask(&c));
            for (d, &a) in grid.data().iter().zip(grid.mask().iter()) {
                if !a { prop_assert_eq!(*d, Complex64::new(0.0, 0.0)); }
            }
            if grid.active_count() > 0 {
                prop_assert!((grid.mean_active_power() - 1.0).abs() < 1e-9);
            }
        }
    }
}
