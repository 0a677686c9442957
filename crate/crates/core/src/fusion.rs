//! Channel-mask fusion of global and local feature maps.
//!
//! With `h = ⌊C/2⌋`, the global mask `M_G` is zero on channels `< h` and one
//! on channels `≥ h`; the local mask `M_L` is its complement.
//!
//! * [`FusionMode::Glamor`]: `F = M_G ⊙ F_G + M_L ⊙ F_L`
//! * [`FusionMode::Counter`]: `F = M_L ⊙ F_G + M_G ⊙ F_L`
//!
//! Each mode keeps exactly half the channels of each input, so the two modes
//! together carry every input channel once.

use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::matrix::Matrix;

/// `H×W×C` values stored channel-fastest (`(y·W + x)·C + c`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ReidError::ShapeMismatch(format!(
                "feature map dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(ReidError::ShapeMismatch(format!(
                "{height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(ReidError::NonFiniteValue {
                row: idx / channels,
                col: idx % channels,
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    values.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, values)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows are spatial positions (`H·W`), columns are channels.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(self.height * self.width, self.channels, self.values.clone())
            .expect("shape checked at construction")
    }

    pub fn from_matrix(m: &Matrix, height: usize, width: usize) -> Result<Self> {
        if m.rows() != height * width {
            return Err(ReidError::ShapeMismatch(format!(
                "matrix has {} rows, {height}x{width} map needs {}",
                m.rows(),
                height * width
            )));
        }
        Self::new(height, width, m.cols(), m.as_slice().to_vec())
    }

    /// Elementwise sum.
    pub fn add(&self, other: &FeatureMap) -> Result<FeatureMap> {
        check_shapes(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(FeatureMap {
            values,
            ..self.clone()
        })
    }

    pub fn bitwise_eq(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMask {
    bits: Vec<bool>,
}

impl ChannelMask {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn complement(&self) -> ChannelMask {
        ChannelMask {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

/// `(M_G, M_L)` for `channels` channels.
pub fn make_masks(channels: usize) -> (ChannelMask, ChannelMask) {
    let half = channels / 2;
    let global = ChannelMask {
        bits: (0..channels).map(|i| i >= half).collect(),
    };
    let local = global.complement();
    (global, local)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Glamor,
    Counter,
}

fn check_shapes(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(ReidError::ShapeMismatch(format!(
            "feature maps {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Masked channel combination of a global and a local feature map.
///
/// Masks are exact 0/1 selections, so `m ⊙ a + (1 − m) ⊙ b` is evaluated as a
/// per-channel pick and every output value is bitwise one of the inputs.
pub fn fuse(global: &FeatureMap, local: &FeatureMap, mode: FusionMode) -> Result<FeatureMap> {
    check_shapes(global, local)?;
    let (m_g, m_l) = make_masks(global.channels);
    let take_global = match mode {
        FusionMode::Glamor => m_g,
        FusionMode::Counter => m_l,
    };
    let c = global.channels;
    let values = global
        .values
        .iter()
        .zip(&local.values)
        .enumerate()
        .map(|(idx, (&g, &l))| if take_global.bits[idx % c] { g } else { l })
        .collect();
    Ok(FeatureMap {
        values,
        ..global.clone()
    })
}
