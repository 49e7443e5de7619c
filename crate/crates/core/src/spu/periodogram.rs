use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::ChannelMatrix;
use crate::error::{Error, Result};
use crate::frame::FrameConfig;
use crate::SPEED_OF_LIGHT;

/// Separable taper applied before the transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    /// `w[k] = sin²(π(k+1)/(L+1))`, symmetric with no zero end points.
    Hann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|k| (PI * (k + 1) as f64 / (len + 1) as f64).sin().powi(2))
                .collect(),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
        })
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" | "none" => Ok(Window::Rectangular),
            "hann" | "hanning" => Ok(Window::Hann),
            other => Err(Error::invalid("window", format!("unknown window `{other}`"))),
        }
    }
}

/// How a periodogram was produced. Not stored in the binary export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Processing {
    pub window: Window,
    pub pad_range: usize,
    pub pad_doppler: usize,
}

/// Range/Doppler power map.
///
/// Rows are range bins `k·c/(2·N'·Δf)`; columns are Doppler bins centered so
/// that column `M'/2` is zero velocity and column `j` corresponds to
/// `(j − M'/2)·λ/(2·M'·T_sym)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    values: Array2<f64>,
    range_axis: Vec<f64>,
    velocity_axis: Vec<f64>,
    subcarrier_spacing: f64,
    symbol_duration: f64,
    wavelength: f64,
    processing: Option<Processing>,
}

impl Periodogram {
    pub fn from_values(values: Array2<f64>, subcarrier_spacing: f64, symbol_duration: f64, wavelength: f64) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid("values", format!("periodogram values must be non-negative, found {v}")));
        }
        for (field, v) in [
            ("subcarrier_spacing", subcarrier_spacing),
            ("symbol_duration", symbol_duration),
            ("wavelength", wavelength),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        let (n, m) = values.dim();
        let range_step = SPEED_OF_LIGHT / (2.0 * n as f64 * subcarrier_spacing);
        let velocity_step = wavelength / (2.0 * m as f64 * symbol_duration);
        let half = (m / 2) as f64;
        Ok(Self {
            range_axis: (0..n).map(|k| k as f64 * range_step).collect(),
            velocity_axis: (0..m).map(|j| (j as f64 - half) * velocity_step).collect(),
            values,
            subcarrier_spacing,
            symbol_duration,
            wavelength,
            processing: None,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn range_axis(&self) -> &[f64] {
        &self.range_axis
    }

    pub fn velocity_axis(&self) -> &[f64] {
        &self.velocity_axis
    }

    /// `(N', M')`.
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.subcarrier_spacing
    }

    pub fn symbol_duration(&self) -> f64 {
        self.symbol_duration
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn processing(&self) -> Option<Processing> {
        self.processing
    }

    /// Range bin width in metres.
    pub fn range_step(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.shape().0 as f64 * self.subcarrier_spacing)
    }

    /// Doppler bin width in m/s.
    pub fn velocity_step(&self) -> f64 {
        self.wavelength / (2.0 * self.shape().1 as f64 * self.symbol_duration)
    }

    /// Column holding zero velocity.
    pub fn zero_doppler_column(&self) -> usize {
        self.shape().1 / 2
    }

    /// `(i, j)` of the largest value; the first one in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let m = self.shape().1;
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (idx / m, idx % m)
    }

    pub fn total_power(&self) -> f64 {
        self.values.sum()
    }
}

/// Range/Doppler periodogram of a channel matrix.
///
/// Invalid elements enter as zeros. Each of the `N` subcarrier rows gets a
/// forward DFT of length `M' = M·pad_doppler` (`Σ x[m]·e^{−j2πmk/M'}`),
/// then each of the `M'` Doppler columns an unnormalized inverse DFT of
/// length `N' = N·pad_range` (`Σ x[n]·e^{+j2πnk/N'}`). The squared
/// magnitude is stored with the Doppler axis rotated so that zero velocity
/// sits in column `M'/2`.
pub fn compute_periodogram(
    channel: &ChannelMatrix,
    config: &FrameConfig,
    pad_range: usize,
    pad_doppler: usize,
    window: Window,
) -> Result<Periodogram> {
    if pad_range == 0 {
        return Err(Error::invalid("pad_range", "padding factor must be at least 1"));
    }
    if pad_doppler == 0 {
        return Err(Error::invalid("pad_doppler", "padding factor must be at least 1"));
    }
    let (n, m) = channel.shape();
    if n == 0 || m == 0 {
        return Err(Error::Empty("channel matrix"));
    }
    let n_range = n * pad_range;
    let n_doppler = m * pad_doppler;
    let w_sc = window.coefficients(n);
    let w_sym = window.coefficients(m);

    let mut planner = FftPlanner::<f64>::new();
    let doppler_fft = planner.plan_fft_forward(n_doppler);
    let range_ifft = planner.plan_fft_inverse(n_range);

    // Doppler transform, one row per subcarrier.
    let mut rows = vec![Complex64::new(0.0, 0.0); n * n_doppler];
    for ((row_out, row_in), &ws) in rows
        .chunks_exact_mut(n_doppler)
        .zip(channel.data().rows())
        .zip(&w_sc)
    {
        for ((dst, &src), &wm) in row_out.iter_mut().zip(row_in.iter()).zip(&w_sym) {
            *dst = src * (ws * wm);
        }
        doppler_fft.process(row_out);
    }

    // Range transform, one column per Doppler bin.
    let half = n_doppler / 2;
    let mut values = Array2::<f64>::zeros((n_range, n_doppler));
    let mut column = vec![Complex64::new(0.0, 0.0); n_range];
    for k in 0..n_doppler {
        column.fill(Complex64::new(0.0, 0.0));
        for (dst, row) in column.iter_mut().zip(rows.chunks_exact(n_doppler)) {
            *dst = row[k];
        }
        range_ifft.process(&mut column);
        let col = (k + half) % n_doppler;
        for (i, v) in column.iter().enumerate() {
            values[[i, col]] = v.norm_sqr();
        }
    }

    let mut p = Periodogram::from_values(
        values,
        config.subcarrier_spacing_hz,
        config.symbol_duration(),
        config.wavelength(),
    )?;
    p.processing = Some(Processing {
        window,
        pad_range,
        pad_doppler,
    });
    Ok(p)
}

/// Physical `(range m, velocity m/s)` of a possibly fractional bin.
pub fn bins_to_physical(bin: (usize, usize), frac: (f64, f64), periodogram: &Periodogram) -> Result<(f64, f64)> {
    let (n, m) = periodogram.shape();
    if bin.0 >= n || bin.1 >= m {
        return Err(Error::BinOutOfRange(bin.0, bin.1));
    }
    let centered = bin.1 as f64 - periodogram.zero_doppler_column() as f64;
    Ok((
        (bin.0 as f64 + frac.0) * periodogram.range_step(),
        (centered + frac.1) * periodogram.velocity_step(),
    ))
}
