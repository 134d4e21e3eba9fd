//! Procedural high-frame-rate scenes with analytically known motion.
//!
//! Sprites move on straight lines at constant velocity and are drawn with hard
//! edges. Each sharp frame samples the scene at a single instant; the smoothing
//! that makes motion blur comes only from the blur synthesis under test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{inject_noise, NoiseParams};
use crate::raw::{
    cfa_channel_of, CfaPattern, RawFrame, RawGeometry, RgbImage, SharpRawSequence, ValueDomain,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Rectangle,
    Disk,
}

/// Position at `t = 0` (pixels) and velocity (pixels per second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
}

impl Trajectory {
    pub fn position(&self, t: f64) -> (f64, f64) {
        (self.x0 + self.vx * t, self.y0 + self.vy * t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sprite {
    pub shape: Shape,
    /// Linear RGB.
    pub color: [f64; 3],
    /// Side length of a rectangle or diameter of a disk.
    pub size: f64,
    /// Rectangle height; defaults to `size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    pub trajectory: Trajectory,
}

impl Sprite {
    /// Whether the sample point of pixel `(px, py)` lies inside the sprite
    /// centered at `(cx, cy)`. Pixels sample at their integer coordinates.
    #[inline]
    fn covers(&self, cx: f64, cy: f64, px: f64, py: f64) -> bool {
        match self.shape {
            Shape::Disk => {
                let r = self.size / 2.0;
                (px - cx).powi(2) + (py - cy).powi(2) < r * r
            }
            Shape::Rectangle => {
                let hw = self.size / 2.0;
                let hh = self.height.unwrap_or(self.size) / 2.0;
                px >= cx - hw && px < cx + hw && py >= cy - hh && py < cy + hh
            }
        }
    }
}

/// Static background modulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Texture {
    /// Squares of `cell` pixels; odd cells are darkened by `contrast`.
    Checker { cell: u32, contrast: f64 },
    /// Vertical bars of `period` pixels, half of them darkened by `contrast`.
    Stripes { period: u32, contrast: f64 },
    /// Per-pixel hashed pattern in `[0, contrast]` darkening, fixed over time.
    Hash { contrast: f64 },
}

impl Texture {
    /// Multiplicative factor in `[1 − contrast, 1]`.
    fn factor(&self, x: usize, y: usize) -> f64 {
        match *self {
            Texture::Checker { cell, contrast } => {
                let c = cell.max(1) as usize;
                if (x / c + y / c) % 2 == 1 {
                    1.0 - contrast
                } else {
                    1.0
                }
            }
            Texture::Stripes { period, contrast } => {
                let p = period.max(2) as usize;
                if x % p >= p / 2 {
                    1.0 - contrast
                } else {
                    1.0
                }
            }
            Texture::Hash { contrast } => {
                let u =
                    (rng::mix64(((y as u64) << 32) ^ x as u64) >> 11) as f64 / (1u64 << 53) as f64;
                1.0 - contrast * u
            }
        }
    }

    fn contrast(&self) -> f64 {
        match *self {
            Texture::Checker { contrast, .. }
            | Texture::Stripes { contrast, .. }
            | Texture::Hash { contrast } => contrast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Linear RGB.
    pub background: [f64; 3],
    #[serde(default)]
    pub sprites: Vec<Sprite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<Texture>,
}

fn check_color(what: &str, c: &[f64; 3]) -> Result<()> {
    if c.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{what} color {c:?} outside [0, 1]"
        )))
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Geometry(format!(
                "scene size {}x{}",
                self.width, self.height
            )));
        }
        check_color("background", &self.background)?;
        for (i, s) in self.sprites.iter().enumerate() {
            check_color(&format!("sprite {i}"), &s.color)?;
            let h = s.height.unwrap_or(s.size);
            if !(s.size > 0.0 && h > 0.0 && s.size.is_finite() && h.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "sprite {i} size must be positive"
                )));
            }
            let t = &s.trajectory;
            if ![t.x0, t.y0, t.vx, t.vy].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "sprite {i} trajectory is not finite"
                )));
            }
        }
        if let Some(tex) = &self.texture {
            if !(0.0..=1.0).contains(&tex.contrast()) {
                return Err(Error::InvalidParameter(
                    "texture contrast outside [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Renders the scene's linear irradiance at time `t` seconds.
pub fn render_irradiance(scene: &SceneConfig, t: f64) -> Result<RgbImage> {
    scene.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "render time must be >= 0, got {t}"
        )));
    }
    let centers: Vec<(f64, f64)> = scene
        .sprites
        .iter()
        .map(|s| s.trajectory.position(t))
        .collect();
    let w = scene.width;
    let mut data = vec![0.0f32; w * scene.height * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let mut color = scene.background;
            if let Some(tex) = &scene.texture {
                let f = tex.factor(x, y);
                color = color.map(|c| c * f);
            }
            // Later sprites paint over earlier ones.
            for (s, &(cx, cy)) in scene.sprites.iter().zip(&centers).rev() {
                if s.covers(cx, cy, x as f64, y as f64) {
                    color = s.color;
                    break;
                }
            }
            for c in 0..3 {
                row[x * 3 + c] = color[c] as f32;
            }
        }
    });
    RgbImage::new(w, scene.height, ValueDomain::Linear, data)
}

/// Sensor response: `raw = gain · irradiance + black_level`, plus noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    /// Counts per unit of normalized irradiance.
    pub gain: f64,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub black_level: f64,
    /// Defaults to `2^bit_depth − 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub white_level: Option<f64>,
    pub bit_depth: u8,
    #[serde(default)]
    pub cfa_pattern: CfaPattern,
}

impl SensorModel {
    pub fn new(gain: f64, noise: NoiseParams, bit_depth: u8) -> Self {
        SensorModel {
            gain,
            noise,
            black_level: 0.0,
            white_level: None,
            bit_depth,
            cfa_pattern: CfaPattern::Rggb,
        }
    }

    pub fn geometry(&self, width: usize, height: usize) -> Result<RawGeometry> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sensor gain must be positive, got {}",
                self.gain
            )));
        }
        self.noise.validate()?;
        let g = RawGeometry::new(width, height, self.cfa_pattern, self.bit_depth)?;
        let white = self.white_level.unwrap_or(g.white_level);
        g.with_levels(self.black_level, white)
    }
}

/// Samples the CFA: each site keeps `gain · (its channel) + black_level`.
/// No noise, no clamping.
pub fn mosaic(image: &RgbImage, pattern: CfaPattern, sensor: &SensorModel) -> Result<RawFrame> {
    image.expect_domain(ValueDomain::Linear)?;
    let geometry = SensorModel {
        cfa_pattern: pattern,
        ..sensor.clone()
    }
    .geometry(image.width(), image.height())?;
    let (w, gain, black) = (image.width(), sensor.gain, sensor.black_level);
    let src = image.data();
    let mut data = vec![0.0f32; geometry.pixel_count()];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let c = cfa_channel_of(pattern, x, y).index();
            *v = (gain * src[(y * w + x) * 3 + c] as f64 + black) as f32;
        }
    });
    RawFrame::new(geometry, data)
}

/// Renders `n_frames` instants `i / sharp_fps`, mosaics them with the sensor's
/// CFA and adds full-variance sensor noise keyed by `derive_seed(seed, i)`.
pub fn gen_sequence(
    scene: &SceneConfig,
    sensor: &SensorModel,
    sharp_fps: f64,
    n_frames: usize,
    seed: u64,
) -> Result<SharpRawSequence> {
    if n_frames == 0 {
        return Err(Error::InvalidParameter("n_frames must be >= 1".into()));
    }
    if !(sharp_fps.is_finite() && sharp_fps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sharp_fps must be positive, got {sharp_fps}"
        )));
    }
    scene.validate()?;
    sensor.geometry(scene.width, scene.height)?;
    let frames = (0..n_frames)
        .into_par_iter()
        .map(|i| {
            let irradiance = render_irradiance(scene, i as f64 / sharp_fps)?;
            let clean = mosaic(&irradiance, sensor.cfa_pattern, sensor)?;
            inject_noise(&clean, &sensor.noise, 1.0, rng::derive_seed(seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seq = SharpRawSequence::new(frames, sharp_fps, 1000.0 / sharp_fps)?;
    seq.meta.insert("generator".into(), "scene-synth".into());
    seq.meta.insert("seed".into(), seed.to_string());
    Ok(seq)
}
