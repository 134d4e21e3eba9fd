//! Affine (Poisson-Gaussian) sensor noise.
//!
//! Noise variance at ideal signal level `I` (counts above black) is `a·I + b`.
//! The shot-noise part is drawn from a Gaussian with variance `a·I`, so the
//! whole model is parameterized by variance. Averaging `n` independent frames
//! divides that variance by `n`; blur synthesis puts the missing part back.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raw::RawFrame;
use crate::rng;

/// Coefficients of `Var(N) = a·I + b`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Signal-dependent coefficient (variance counts per signal count).
    pub a: f64,
    /// Signal-independent variance in counts².
    pub b: f64,
}

impl NoiseParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = NoiseParams { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.a >= 0.0 && self.b >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise coefficients must be finite and nonnegative, got a={} b={}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }
}

impl fmt::Display for NoiseParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.a, self.b)
    }
}

/// Parses `"a,b"`.
impl FromStr for NoiseParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("expected noise as \"a,b\", got {s:?}"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let a = a.trim().parse::<f64>().map_err(|_| bad())?;
        let b = b.trim().parse::<f64>().map_err(|_| bad())?;
        NoiseParams::new(a, b)
    }
}

/// How much variance blur synthesis injects into an `n`-frame average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionMode {
    /// Only what averaging removed, `(a·I + b)(1 − 1/n)`; total returns to `a·I + b`.
    #[default]
    Residual,
    /// The full single-frame variance `a·I + b`, on top of the averaged residual.
    Full,
}

impl InjectionMode {
    /// Variance multiplier applied to `a·I + b` for an `n`-frame average.
    pub fn scale(self, n: usize) -> f64 {
        match self {
            InjectionMode::Residual => 1.0 - 1.0 / n as f64,
            InjectionMode::Full => 1.0,
        }
    }
}

impl FromStr for InjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(InjectionMode::Residual),
            "full" => Ok(InjectionMode::Full),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise mode {other:?}"
            ))),
        }
    }
}

fn check_signal(signal_level: f64) -> Result<()> {
    if signal_level >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "signal level must be >= 0, got {signal_level}"
        )))
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("frame count must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// `a·I + b`.
pub fn noise_variance(signal_level: f64, params: &NoiseParams) -> Result<f64> {
    check_signal(signal_level)?;
    Ok(params.a * signal_level + params.b)
}

/// Variance left in the mean of `n` independently noised frames: `(a·I + b)/n`.
pub fn averaged_noise_variance(signal_level: f64, params: &NoiseParams, n: usize) -> Result<f64> {
    check_count(n)?;
    Ok(noise_variance(signal_level, params)? / n as f64)
}

/// Variance to add to an `n`-frame mean so its total matches one real capture.
pub fn residual_injection_variance(
    signal_level: f64,
    params: &NoiseParams,
    n: usize,
) -> Result<f64> {
    check_count(n)?;
    let full = noise_variance(signal_level, params)?;
    Ok(full - full / n as f64)
}

/// Adds zero-mean Gaussian noise with variance `scale·(a·(v − black)⁺ + b)` to
/// every sample. Pixel `i` uses draw `i` of the stream keyed by `seed`, so the
/// result does not depend on how the work is split across threads. The output
/// is not clamped.
pub fn inject_noise(
    frame: &RawFrame,
    params: &NoiseParams,
    scale: f64,
    seed: u64,
) -> Result<RawFrame> {
    params.validate()?;
    if !(0.0..=1.0).contains(&scale) {
        return Err(Error::InvalidParameter(format!(
            "noise scale {scale} outside [0, 1]"
        )));
    }
    if params.is_zero() || scale == 0.0 {
        return Ok(frame.clone());
    }
    let black = frame.black_level();
    let (a, b) = (params.a * scale, params.b * scale);
    let width = frame.width();
    let mut data = frame.data().to_vec();
    data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let base = (y * width) as u64;
        for (x, v) in row.iter_mut().enumerate() {
            let value = *v as f64;
            let var = a * (value - black).max(0.0) + b;
            *v = (value + var.sqrt() * rng::normal_at(seed, base + x as u64)) as f32;
        }
    });
    Ok(frame.with_data(data))
}

/// Mean signal and noise variance measured at one illumination level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStat {
    /// Mean signal above black level.
    pub signal: f64,
    /// Unbiased noise variance estimate.
    pub variance: f64,
    pub samples: usize,
}

/// Result of fitting the affine model to measured levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFit {
    pub params: NoiseParams,
    /// Root-mean-square of `v_k − (a·I_k + b)` over the levels.
    pub residual_rms: f64,
    pub levels: Vec<LevelStat>,
}

/// Minimum pixel count for estimating variance from a single flat frame.
pub const MIN_SINGLE_FRAME_PIXELS: usize = 10_000;

/// Measures one illumination level.
///
/// With two or more frames the variance is the per-pixel temporal variance
/// averaged over pixels, which cancels any fixed spatial pattern. A single
/// frame of at least [`MIN_SINGLE_FRAME_PIXELS`] uniform pixels falls back to
/// the spatial variance.
pub fn measure_level(frames: &[RawFrame]) -> Result<LevelStat> {
    let first = frames
        .first()
        .ok_or(Error::Empty("illumination level has no frames"))?;
    if frames.iter().any(|f| f.geometry() != first.geometry()) {
        return Err(Error::IncompatibleFrames(
            "flat frames within a level differ in geometry".into(),
        ));
    }
    let black = first.black_level();
    let npix = first.data().len();
    let k = frames.len();
    if k == 1 {
        if npix < MIN_SINGLE_FRAME_PIXELS {
            return Err(Error::InvalidParameter(format!(
                "a single flat frame needs at least {MIN_SINGLE_FRAME_PIXELS} pixels, got {npix}"
            )));
        }
        let (mean, var) = mean_var(first.data().iter().map(|&v| v as f64));
        return Ok(LevelStat {
            signal: (mean - black).max(0.0),
            variance: var,
            samples: npix,
        });
    }
    let (sum_mean, sum_var) = (0..npix)
        .into_par_iter()
        .map(|i| mean_var(frames.iter().map(|f| f.data()[i] as f64)))
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(LevelStat {
        signal: (sum_mean / npix as f64 - black).max(0.0),
        variance: sum_var / npix as f64,
        samples: npix * k,
    })
}

/// Mean and unbiased variance, two-pass for stability.
fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, if n > 1 { ss / (n - 1) as f64 } else { 0.0 })
}

/// Nonnegative least-squares fit of `v = a·I + b` to measured levels.
///
/// The unconstrained solution is used when both coefficients come out
/// nonnegative; otherwise the best of the boundary refits (`a = 0`, `b = 0`,
/// or both zero) is returned.
pub fn fit_affine_variance(levels: &[LevelStat]) -> Result<NoiseFit> {
    if levels.len() < 3 {
        return Err(Error::TooFewLevels(levels.len()));
    }
    let n = levels.len() as f64;
    let mean_i = levels.iter().map(|l| l.signal).sum::<f64>() / n;
    let mean_v = levels.iter().map(|l| l.variance).sum::<f64>() / n;
    let sxx: f64 = levels.iter().map(|l| (l.signal - mean_i).powi(2)).sum();
    let sxy: f64 = levels
        .iter()
        .map(|l| (l.signal - mean_i) * (l.variance - mean_v))
        .sum();
    // Levels closer than 0.1% of the brightest one only differ by measurement
    // noise and cannot pin down the slope.
    let max_i = levels.iter().map(|l| l.signal).fold(f64::MIN, f64::max);
    let min_i = levels.iter().map(|l| l.signal).fold(f64::MAX, f64::min);
    if max_i - min_i <= 1e-3 * max_i.abs().max(1.0) {
        return Err(Error::RankDeficient(format!(
            "all illumination levels are equal (mean signal {mean_i:.3})"
        )));
    }

    let sse = |p: &NoiseParams| -> f64 {
        levels
            .iter()
            .map(|l| (l.variance - p.a * l.signal - p.b).powi(2))
            .sum()
    };

    let a = sxy / sxx;
    let b = mean_v - a * mean_i;
    let params = if a >= 0.0 && b >= 0.0 {
        NoiseParams { a, b }
    } else {
        let sii: f64 = levels.iter().map(|l| l.signal * l.signal).sum();
        let siv: f64 = levels.iter().map(|l| l.signal * l.variance).sum();
        let candidates = [
            NoiseParams {
                a: 0.0,
                b: mean_v.max(0.0),
            },
            NoiseParams {
                a: (siv / sii).max(0.0),
                b: 0.0,
            },
            NoiseParams::default(),
        ];
        candidates
            .into_iter()
            .min_by(|p, q| sse(p).total_cmp(&sse(q)))
            .expect("nonempty")
    };
    Ok(NoiseFit {
        residual_rms: (sse(&params) / n).sqrt(),
        params,
        levels: levels.to_vec(),
    })
}

/// Estimates `(a, b)` from flat-field captures, one entry per illumination level.
pub fn estimate_noise_params(flat_levels: &[Vec<RawFrame>]) -> Result<NoiseFit> {
    if flat_levels.len() < 3 {
        return Err(Error::TooFewLevels(flat_levels.len()));
    }
    let stats = flat_levels
        .iter()
        .map(|frames| measure_level(frames))
        .collect::<Result<Vec<_>>>()?;
    fit_affine_variance(&stats)
}
