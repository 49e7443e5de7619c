//! Mono-static OFDM radar sensing on 5G NR resource grids.
//!
//! The processing chain takes a transmitted reference grid and the grid
//! received by a co-located sensing receiver and turns them into a
//! range/Doppler periodogram, a list of detected reflectors and, optionally,
//! Kalman-filtered tracks:
//!
//! 1. [`spu::compute_channel`]: element-wise division reflected / reference.
//! 2. [`spu::remove_clutter`]: subtraction of a calibrated static-scene channel.
//! 3. [`spu::compute_periodogram`]: Doppler DFT per subcarrier, range IDFT per
//!    Doppler bin, squared magnitude.
//! 4. [`spu::extract_peaks`]: thresholding, local maxima and parabolic
//!    interpolation.
//! 5. [`track::Tracker`]: constant-velocity Kalman tracking across frames.
//!
//! [`scene`] synthesizes the reflected grids for point targets and static
//! clutter; [`budget`] holds the SNR-vs-range relations.

pub mod budget;
pub mod cli;
pub mod error;
pub mod frame;
pub mod io;
pub mod scene;
pub mod spu;
pub mod track;

pub use error::{Error, Result};
pub use frame::{default_config, FrameConfig, ResourceGrid};
pub use scene::{PointTarget, Scene};
pub use spu::{ChannelMatrix, Detection, Periodogram, Window};
pub use track::{TrackState, Tracker, TrackerConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Independent random stream for one purpose (reference symbols, noise,
/// jitter) derived from a user seed.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `10^(db/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `10·log10(x)`.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
