//! SNR-versus-range scaling from a measured reference point, and the
//! resolution limits of a frame configuration.

use crate::error::{Error, Result};
use crate::frame::FrameConfig;
use crate::SPEED_OF_LIGHT;

/// A measured SNR `gamma_ref` at `r_ref`, a path-loss exponent and the
/// minimum SNR required for estimation. All quantities are linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    gamma_ref: f64,
    r_ref: f64,
    eta: f64,
    gamma_min: f64,
}

impl LinkBudget {
    pub fn new(gamma_ref: f64, r_ref: f64, eta: f64, gamma_min: f64) -> Result<Self> {
        for (field, v) in [
            ("gamma_ref", gamma_ref),
            ("r_ref", r_ref),
            ("eta", eta),
            ("gamma_min", gamma_min),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(Self {
            gamma_ref,
            r_ref,
            eta,
            gamma_min,
        })
    }

    pub fn gamma_ref(&self) -> f64 {
        self.gamma_ref
    }

    pub fn r_ref(&self) -> f64 {
        self.r_ref
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    /// `γ(r) = γ_ref · (r_ref / r)^(2η)`; the round trip doubles the exponent.
    pub fn snr_at_range(&self, r: f64) -> Result<f64> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid("r", format!("range must be positive, got {r}")));
        }
        Ok(self.gamma_ref * (self.r_ref / r).powf(2.0 * self.eta))
    }

    /// Range at which the SNR falls to `gamma_min`,
    /// `r* = (γ_ref/γ_min)^(1/(2η)) · r_ref`. Below `r_ref` when the
    /// reference SNR is already short of the minimum.
    pub fn max_range(&self) -> f64 {
        (self.gamma_ref / self.gamma_min).powf(1.0 / (2.0 * self.eta)) * self.r_ref
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolutions {
    /// `c / (2·N·Δf)`.
    pub range_res: f64,
    /// `λ / (2·M·T_sym)`.
    pub velocity_res: f64,
    /// `c / (2·Δf)`.
    pub unambiguous_range: f64,
    /// Magnitude of the velocity limit, `λ / (4·T_sym)`; the span is ±.
    pub unambiguous_velocity: f64,
}

pub fn resolutions(config: &FrameConfig) -> Resolutions {
    let df = config.subcarrier_spacing_hz;
    let t_sym = config.symbol_duration();
    let lambda = config.wavelength();
    Resolutions {
        range_res: SPEED_OF_LIGHT / (2.0 * config.n_subcarriers as f64 * df),
        velocity_res: lambda / (2.0 * config.n_symbols as f64 * t_sym),
        unambiguous_range: SPEED_OF_LIGHT / (2.0 * df),
        unambiguous_velocity: lambda / (4.0 * t_sym),
    }
}
