use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frame::ResourceGrid;

/// Reference magnitudes at or below this are not divided by.
pub const DIVISION_EPSILON: f64 = 1e-12;

/// Per resource element channel estimate with its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    data: Array2<Complex64>,
    mask: Array2<bool>,
}

impl ChannelMatrix {
    /// Forces `data` to zero wherever `mask` is false.
    pub fn new(mut data: Array2<Complex64>, mask: Array2<bool>) -> Result<Self> {
        if data.dim() != mask.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                actual: mask.dim(),
            });
        }
        Zip::from(&mut data).and(&mask).for_each(|d, &m| {
            if !m {
                *d = Complex64::new(0.0, 0.0);
            }
        });
        Ok(Self { data, mask })
    }

    /// Every element valid.
    pub fn full(data: Array2<Complex64>) -> Self {
        let mask = Array2::from_elem(data.dim(), true);
        Self { data, mask }
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Self::full(Array2::zeros(shape))
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

    /// `Σ|H|²` over valid elements.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn into_parts(self) -> (Array2<Complex64>, Array2<bool>) {
        (self.data, self.mask)
    }
}

fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Element-wise `reflected / reference` where the reference is active and
/// nonzero.
pub fn compute_channel(reflected: &ResourceGrid, reference: &ResourceGrid) -> Result<ChannelMatrix> {
    check_shape(reference.shape(), reflected.shape())?;
    let mut data = Array2::<Complex64>::zeros(reference.shape());
    let mut mask = Array2::from_elem(reference.shape(), false);
    Zip::from(&mut data)
        .and(&mut mask)
        .and(reflected.data())
        .and(reference.data())
        .and(reference.mask())
        .for_each(|h, valid, &y, &x, &active| {
            if active && x.norm() > DIVISION_EPSILON {
                *h = y / x;
                *valid = true;
            }
        });
    Ok(ChannelMatrix { data, mask })
}

/// Averages calibration captures of the static scene.
pub fn capture_clutter_reference(channels: &[ChannelMatrix]) -> Result<ChannelMatrix> {
    let (first, rest) = channels.split_first().ok_or(Error::Empty("no calibration channels"))?;
    let mut sum = first.data.clone();
    for ch in rest {
        check_shape(first.shape(), ch.shape())?;
        if ch.mask != first.mask {
            return Err(Error::MaskMismatch);
        }
        sum += &ch.data;
    }
    if rest.is_empty() {
        return Ok(first.clone());
    }
    let k = channels.len() as f64;
    sum.mapv_inplace(|x| x / k);
    ChannelMatrix::new(sum, first.mask.clone())
}

/// `H − H_ref` on the elements valid in both.
pub fn remove_clutter(channel: &ChannelMatrix, clutter: &ChannelMatrix) -> Result<ChannelMatrix> {
    check_shape(channel.shape(), clutter.shape())?;
    let mask = Zip::from(&channel.mask).and(&clutter.mask).map_collect(|&a, &b| a && b);
    let data = Zip::from(&channel.data)
        .and(&clutter.data)
        .and(&mask)
        .map_collect(|&h, &c, &m| if m { h - c } else { Complex64::new(0.0, 0.0) });
    Ok(ChannelMatrix { data, mask })
}
