//! RAW and RGB image containers.
//!
//! Pixel values are kept as real numbers through the whole pipeline. Nothing is
//! rounded until [`clamp_quantize`] or file output, so averaging and noise
//! statistics are computed on continuous signals.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Color of a single CFA site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    /// Position of the channel in interleaved RGB storage.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// 2×2 Bayer phase, named by the top-left row then the second row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CfaPattern {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    pub const ALL: [CfaPattern; 4] = [
        CfaPattern::Rggb,
        CfaPattern::Bggr,
        CfaPattern::Grbg,
        CfaPattern::Gbrg,
    ];

    /// Tile colors as `[(0,0), (1,0), (0,1), (1,1)]` in `(x, y)` order.
    pub fn tile(self) -> [Channel; 4] {
        use Channel::*;
        match self {
            CfaPattern::Rggb => [R, G, G, B],
            CfaPattern::Bggr => [B, G, G, R],
            CfaPattern::Grbg => [G, R, B, G],
            CfaPattern::Gbrg => [G, B, R, G],
        }
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        };
        f.write_str(s)
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            "BGGR" => Ok(CfaPattern::Bggr),
            "GRBG" => Ok(CfaPattern::Grbg),
            "GBRG" => Ok(CfaPattern::Gbrg),
            other => Err(Error::InvalidParameter(format!(
                "unknown CFA pattern {other:?}"
            ))),
        }
    }
}

/// Color of the CFA site at column `x`, row `y`.
#[inline]
pub fn cfa_channel_of(pattern: CfaPattern, x: usize, y: usize) -> Channel {
    pattern.tile()[(x & 1) | ((y & 1) << 1)]
}

/// Geometry and sensor levels shared by every frame of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGeometry {
    pub width: usize,
    pub height: usize,
    pub cfa_pattern: CfaPattern,
    pub black_level: f64,
    pub white_level: f64,
    pub bit_depth: u8,
}

impl RawGeometry {
    /// Geometry with black level 0 and white level `2^bit_depth - 1`.
    pub fn new(
        width: usize,
        height: usize,
        cfa_pattern: CfaPattern,
        bit_depth: u8,
    ) -> Result<Self> {
        let geometry = RawGeometry {
            width,
            height,
            cfa_pattern,
            black_level: 0.0,
            white_level: max_code(bit_depth),
            bit_depth,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn with_levels(mut self, black_level: f64, white_level: f64) -> Result<Self> {
        self.black_level = black_level;
        self.white_level = white_level;
        self.validate()?;
        Ok(self)
    }

    pub fn max_code(&self) -> f64 {
        max_code(self.bit_depth)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if !(8..=16).contains(&self.bit_depth) {
            return Err(Error::Geometry(format!(
                "bit depth {} outside 8..=16",
                self.bit_depth
            )));
        }
        if self.width == 0
            || self.height == 0
            || !self.width.is_multiple_of(2)
            || !self.height.is_multiple_of(2)
        {
            return Err(Error::Geometry(format!(
                "{}x{} is not a positive even size",
                self.width, self.height
            )));
        }
        if !(self.black_level >= 0.0
            && self.black_level < self.white_level
            && self.white_level <= self.max_code())
        {
            return Err(Error::Geometry(format!(
                "levels must satisfy 0 <= black ({}) < white ({}) <= {}",
                self.black_level,
                self.white_level,
                self.max_code()
            )));
        }
        Ok(())
    }
}

pub(crate) fn max_code(bit_depth: u8) -> f64 {
    ((1u32 << bit_depth) - 1) as f64
}

/// Single-channel mosaiced linear sensor image.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    geometry: RawGeometry,
    data: Vec<f32>,
}

impl RawFrame {
    pub fn new(geometry: RawGeometry, data: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.pixel_count() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", geometry.pixel_count()),
                actual: format!("{} samples", data.len()),
            });
        }
        Ok(RawFrame { geometry, data })
    }

    pub fn filled(geometry: RawGeometry, value: f32) -> Result<Self> {
        Self::new(geometry, vec![value; geometry.pixel_count()])
    }

    pub fn geometry(&self) -> &RawGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn cfa_pattern(&self) -> CfaPattern {
        self.geometry.cfa_pattern
    }

    pub fn black_level(&self) -> f64 {
        self.geometry.black_level
    }

    pub fn white_level(&self) -> f64 {
        self.geometry.white_level
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.geometry.width + x]
    }

    pub fn channel_at(&self, x: usize, y: usize) -> Channel {
        cfa_channel_of(self.geometry.cfa_pattern, x, y)
    }

    pub(crate) fn with_data(&self, data: Vec<f32>) -> RawFrame {
        debug_assert_eq!(data.len(), self.data.len());
        RawFrame {
            geometry: self.geometry,
            data,
        }
    }
}

/// Clamp every sample to `[0, white_level]` and round half-up to an integer.
pub fn clamp_quantize(frame: &RawFrame) -> RawFrame {
    let white = frame.white_level() as f32;
    let data = frame
        .data
        .iter()
        .map(|&v| (v.max(0.0).min(white) + 0.5).floor())
        .collect();
    frame.with_data(data)
}

/// What the numbers in an [`RgbImage`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueDomain {
    /// Scene-referred linear values, nominally `[0, 1]` but unclamped.
    Linear,
    /// Display-referred values in `[0, 1]`, after the CRF.
    Display,
    /// Integer codes `0..=255`.
    Quantized8,
}

/// Interleaved three-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    domain: ValueDomain,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, domain: ValueDomain, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", width * height * 3),
                actual: format!("{} samples", data.len()),
            });
        }
        Ok(RgbImage {
            width,
            height,
            domain,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, domain: ValueDomain, rgb: [f32; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        RgbImage {
            width,
            height,
            domain,
            data,
        }
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            ValueDomain::Quantized8,
            bytes.iter().map(|&b| b as f32).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Byte view of a quantized image. Values are clamped to `0..=255`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.expect_domain(ValueDomain::Quantized8)?;
        Ok(self
            .data
            .iter()
            .map(|&v| v.clamp(0.0, 255.0) as u8)
            .collect())
    }

    pub fn expect_domain(&self, domain: ValueDomain) -> Result<()> {
        if self.domain != domain {
            return Err(Error::DomainMismatch {
                expected: domain,
                actual: self.domain,
            });
        }
        Ok(())
    }

    pub(crate) fn same_shape(&self, other: &RgbImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", other.width, other.height),
            });
        }
        Ok(())
    }

    pub(crate) fn with_domain(mut self, domain: ValueDomain) -> Self {
        self.domain = domain;
        self
    }
}

/// Timed run of sharp RAW frames captured at a high frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpRawSequence {
    frames: Vec<RawFrame>,
    sharp_fps: f64,
    per_frame_exposure_ms: f64,
    pub meta: BTreeMap<String, String>,
}

impl SharpRawSequence {
    pub fn new(frames: Vec<RawFrame>, sharp_fps: f64, per_frame_exposure_ms: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or(Error::Empty("sequence has no frames"))?;
        if let Some((i, _)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.geometry() != first.geometry())
        {
            return Err(Error::IncompatibleFrames(format!(
                "frame {i} geometry differs from frame 0"
            )));
        }
        if !(sharp_fps.is_finite() && sharp_fps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sharp_fps must be positive, got {sharp_fps}"
            )));
        }
        let period_ms = 1000.0 / sharp_fps;
        if !(per_frame_exposure_ms > 0.0 && per_frame_exposure_ms <= period_ms * (1.0 + 1e-9)) {
            return Err(Error::InvalidParameter(format!(
                "per-frame exposure {per_frame_exposure_ms} ms exceeds frame period {period_ms} ms"
            )));
        }
        Ok(SharpRawSequence {
            frames,
            sharp_fps,
            per_frame_exposure_ms,
            meta: BTreeMap::new(),
        })
    }

    pub fn frames(&self) -> &[RawFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn geometry(&self) -> &RawGeometry {
        self.frames[0].geometry()
    }

    pub fn sharp_fps(&self) -> f64 {
        self.sharp_fps
    }

    pub fn per_frame_exposure_ms(&self) -> f64 {
        self.per_frame_exposure_ms
    }
}
