//! Exposure windows and blur synthesis.
//!
//! A blurry video with frame period `T` and exposure `tau` (both counted in
//! sharp frames) is made by averaging `tau` consecutive sharp frames at the
//! start of every period. Four formation spaces are supported:
//!
//! | space       | averaging domain                                |
//! |-------------|-------------------------------------------------|
//! | `rgb`       | rendered display RGB                            |
//! | `rgb-crf`   | display RGB linearized with an inverse CRF       |
//! | `raw`       | linear RAW, then rendered                       |
//! | `raw-noise` | linear RAW plus restored sensor noise, rendered |

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isp::{self, CrfModel, IspConfig};
use crate::noise::{inject_noise, InjectionMode, NoiseParams};
use crate::raw::{RawFrame, RgbImage, SharpRawSequence, ValueDomain};
use crate::rng;

/// Frame period and exposure of the synthesized video, in sharp frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurVideoParams {
    /// Blurry frame period `T`.
    pub period: usize,
    /// Exposure `tau`, the number of sharp frames averaged.
    pub exposure: usize,
}

impl BlurVideoParams {
    pub fn new(period: usize, exposure: usize) -> Result<Self> {
        let p = BlurVideoParams { period, exposure };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.exposure == 0 || self.exposure > self.period {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= tau <= T, got T={} tau={}",
                self.period, self.exposure
            )));
        }
        Ok(())
    }

    pub fn duty_cycle(&self) -> f64 {
        self.exposure as f64 / self.period as f64
    }
}

/// `length` sharp frames starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureWindow {
    pub start: usize,
    pub length: usize,
}

impl ExposureWindow {
    /// Index of the sharp frame paired with this window.
    pub fn center(&self) -> usize {
        self.start + self.length / 2
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.length
    }
}

/// Complete exposure windows starting at `0, T, 2T, …`.
pub fn exposure_windows(
    params: &BlurVideoParams,
    n_sharp_frames: usize,
) -> Result<Vec<ExposureWindow>> {
    exposure_windows_with_offset(params, n_sharp_frames, 0)
}

/// Like [`exposure_windows`] with every window shifted by `offset` frames.
/// Trailing windows that would run past the sequence are dropped.
pub fn exposure_windows_with_offset(
    params: &BlurVideoParams,
    n_sharp_frames: usize,
    offset: usize,
) -> Result<Vec<ExposureWindow>> {
    params.validate()?;
    if n_sharp_frames < offset + params.exposure {
        return Err(Error::NoCompleteWindow {
            n_frames: n_sharp_frames,
            exposure: params.exposure,
        });
    }
    Ok((offset..=n_sharp_frames - params.exposure)
        .step_by(params.period)
        .map(|start| ExposureWindow {
            start,
            length: params.exposure,
        })
        .collect())
}

/// Frame rate, exposure time and duty cycle of the synthesized video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub blurry_fps: f64,
    pub exposure_ms: f64,
    pub duty_cycle: f64,
}

impl fmt::Display for VideoSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.2} fps, {:.2} ms, duty cycle {:.3}",
            self.blurry_fps, self.exposure_ms, self.duty_cycle
        )
    }
}

pub fn video_params_summary(params: &BlurVideoParams, sharp_fps: f64) -> Result<VideoSummary> {
    params.validate()?;
    if !(sharp_fps.is_finite() && sharp_fps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sharp_fps must be positive, got {sharp_fps}"
        )));
    }
    Ok(VideoSummary {
        blurry_fps: sharp_fps / params.period as f64,
        exposure_ms: 1000.0 * params.exposure as f64 / sharp_fps,
        duty_cycle: params.duty_cycle(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormationSpace {
    #[serde(rename = "rgb")]
    Rgb,
    #[serde(rename = "rgb-crf")]
    RgbCrf,
    #[serde(rename = "raw")]
    Raw,
    #[serde(rename = "raw-noise")]
    RawNoise,
}

impl FormationSpace {
    pub const ALL: [FormationSpace; 4] = [
        FormationSpace::Rgb,
        FormationSpace::RgbCrf,
        FormationSpace::Raw,
        FormationSpace::RawNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FormationSpace::Rgb => "rgb",
            FormationSpace::RgbCrf => "rgb-crf",
            FormationSpace::Raw => "raw",
            FormationSpace::RawNoise => "raw-noise",
        }
    }
}

impl fmt::Display for FormationSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormationSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FormationSpace::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown formation space {s:?} (expected raw, raw-noise, rgb or rgb-crf)"
                ))
            })
    }
}

/// Pixelwise mean of RAW frames. Levels and CFA are taken from the first frame.
pub fn average_raw(frames: &[RawFrame]) -> Result<RawFrame> {
    let first = frames.first().ok_or(Error::Empty("no frames to average"))?;
    if let Some(i) = frames.iter().position(|f| f.geometry() != first.geometry()) {
        return Err(Error::IncompatibleFrames(format!(
            "frame {i} geometry differs from frame 0"
        )));
    }
    let sources: Vec<&[f32]> = frames.iter().map(|f| f.data()).collect();
    Ok(first.with_data(mean_of(&sources, first.width())))
}

fn mean_of(sources: &[&[f32]], row_len: usize) -> Vec<f32> {
    let n = sources.len() as f64;
    let mut out = vec![0.0f32; sources[0].len()];
    out.par_chunks_mut(row_len.max(1))
        .enumerate()
        .for_each(|(r, row)| {
            let base = r * row_len;
            for (i, v) in row.iter_mut().enumerate() {
                let sum: f64 = sources.iter().map(|s| s[base + i] as f64).sum();
                *v = (sum / n) as f32;
            }
        });
    out
}

/// RAW-space blur with the default residual noise restoration.
pub fn synthesize_blur_raw(
    window: &[RawFrame],
    noise: Option<&NoiseParams>,
    seed: u64,
) -> Result<RawFrame> {
    synthesize_blur_raw_with(window, noise, InjectionMode::Residual, seed)
}

/// Averages the window in RAW, then adds Gaussian noise with variance
/// `mode.scale(n) · (a·B + b)`. Values are left unclamped.
pub fn synthesize_blur_raw_with(
    window: &[RawFrame],
    noise: Option<&NoiseParams>,
    mode: InjectionMode,
    seed: u64,
) -> Result<RawFrame> {
    let mean = average_raw(window)?;
    match noise {
        Some(params) => inject_noise(&mean, params, mode.scale(window.len()), seed),
        None => Ok(mean),
    }
}

fn check_display_window(window: &[RgbImage]) -> Result<&RgbImage> {
    let first = window.first().ok_or(Error::Empty("no frames to average"))?;
    for img in window {
        img.expect_domain(ValueDomain::Display)?;
        first.same_shape(img)?;
    }
    Ok(first)
}

/// Pixelwise mean of display-referred frames.
pub fn synthesize_blur_rgb(window: &[RgbImage]) -> Result<RgbImage> {
    let first = check_display_window(window)?;
    let sources: Vec<&[f32]> = window.iter().map(|f| f.data()).collect();
    RgbImage::new(
        first.width(),
        first.height(),
        ValueDomain::Display,
        mean_of(&sources, first.width() * 3),
    )
}

/// `g(mean(g⁻¹(frames)))`.
pub fn synthesize_blur_crf(window: &[RgbImage], crf: &CrfModel) -> Result<RgbImage> {
    check_display_window(window)?;
    crf.validate()?;
    if *crf == CrfModel::Identity {
        return synthesize_blur_rgb(window);
    }
    let linear = window
        .iter()
        .map(|img| isp::inverse_crf(img, crf))
        .collect::<Result<Vec<_>>>()?;
    let first = &linear[0];
    let sources: Vec<&[f32]> = linear.iter().map(|f| f.data()).collect();
    let mean = RgbImage::new(
        first.width(),
        first.height(),
        ValueDomain::Linear,
        mean_of(&sources, first.width() * 3),
    )?;
    isp::apply_crf(&mean, crf)
}

/// A rendered blurry frame with the sharp frame at its window center.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurPair {
    pub blurry: RgbImage,
    pub sharp: RgbImage,
    pub window: ExposureWindow,
    pub params: BlurVideoParams,
    pub space: FormationSpace,
}

/// Everything [`synthesize_dataset`] needs besides the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub params: BlurVideoParams,
    pub space: FormationSpace,
    pub isp: IspConfig,
    /// Required for `raw-noise`, ignored by the other spaces.
    pub noise: Option<NoiseParams>,
    pub injection: InjectionMode,
    /// CRF inverted by `rgb-crf`; defaults to the ISP's own.
    pub crf: Option<CrfModel>,
    /// First window start, in sharp frames.
    pub offset: usize,
    pub seed: u64,
}

impl SynthesisOptions {
    pub fn new(params: BlurVideoParams, space: FormationSpace, isp: IspConfig) -> Self {
        SynthesisOptions {
            params,
            space,
            isp,
            noise: None,
            injection: InjectionMode::Residual,
            crf: None,
            offset: 0,
            seed: 0,
        }
    }

    pub fn effective_crf(&self) -> CrfModel {
        self.crf.unwrap_or(self.isp.crf)
    }
}

/// Synthesizes one blur pair per complete exposure window. Window `k` draws
/// its noise from `derive_seed(seed, k)`, so output does not depend on thread
/// count or scheduling.
pub fn synthesize_dataset(
    seq: &SharpRawSequence,
    opts: &SynthesisOptions,
) -> Result<Vec<BlurPair>> {
    opts.isp.validate()?;
    let noise = match opts.space {
        FormationSpace::RawNoise => Some(opts.noise.ok_or_else(|| {
            Error::InvalidParameter("raw-noise synthesis needs noise parameters".into())
        })?),
        _ => None,
    };
    let crf = opts.effective_crf();
    crf.validate()?;
    let windows = exposure_windows_with_offset(&opts.params, seq.len(), opts.offset)?;
    windows
        .par_iter()
        .enumerate()
        .map(|(k, &window)| {
            let frames = &seq.frames()[window.range()];
            let blurry = match opts.space {
                FormationSpace::Raw | FormationSpace::RawNoise => {
                    let seed = rng::derive_seed(opts.seed, k as u64);
                    let raw =
                        synthesize_blur_raw_with(frames, noise.as_ref(), opts.injection, seed)?;
                    isp::render(&raw, &opts.isp)?
                }
                FormationSpace::Rgb | FormationSpace::RgbCrf => {
                    let rendered = frames
                        .iter()
                        .map(|f| isp::render_display(f, &opts.isp))
                        .collect::<Result<Vec<_>>>()?;
                    let display = if opts.space == FormationSpace::Rgb {
                        synthesize_blur_rgb(&rendered)?
                    } else {
                        synthesize_blur_crf(&rendered, &crf)?
                    };
                    isp::quantize8(&display)?
                }
            };
            let sharp = isp::render(&seq.frames()[window.center()], &opts.isp)?;
            Ok(BlurPair {
                blurry,
                sharp,
                window,
                params: opts.params,
                space: opts.space,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::{CfaPattern, RawGeometry};
    use proptest::prelude::*;

    fn geom() -> RawGeometry {
        RawGeometry::new(4, 4, CfaPattern::Rggb, 16).unwrap()
    }

    fn windows(t: usize, tau: usize, n: usize) -> Vec<(usize, usize)> {
        exposure_windows(&BlurVideoParams::new(t, tau).unwrap(), n)
            .unwrap()
            .iter()
            .map(|w| (w.start, w.length))
            .collect()
    }

    /// Independent enumeration: every start that is a multiple of T and whose
    /// window fits.
    fn brute_force_windows(t: usize, tau: usize, n: usize) -> Vec<(usize, usize)> {
        (0..n)
            .filter(|s| s % t == 0 && s + tau <= n)
            .map(|s| (s, tau))
            .collect()
    }

    #[test]
    fn window_examples() {
        assert_eq!(windows(33, 11, 100), vec![(0, 11), (33, 11), (66, 11)]);
        assert_eq!(windows(33, 11, 100), brute_force_windows(33, 11, 100));
        assert_eq!(windows(1, 1, 3), vec![(0, 1), (1, 1), (2, 1)]);
        assert_eq!(windows(10, 10, 25), vec![(0, 10), (10, 10)]);
    }

    #[test]
    fn window_errors() {
        let p = BlurVideoParams::new(10, 5).unwrap();
        assert!(matches!(
            exposure_windows(&p, 4),
            Err(Error::NoCompleteWindow { .. })
        ));
        assert!(BlurVideoParams::new(5, 6).is_err());
        assert!(BlurVideoParams::new(5, 0).is_err());
    }

    #[test]
    fn window_offset() {
        let p = BlurVideoParams::new(33, 11).unwrap();
        let w = exposure_windows_with_offset(&p, 100, 11).unwrap();
        assert_eq!(
            w.iter().map(|w| w.start).collect::<Vec<_>>(),
            vec![11, 44, 77]
        );
        assert_eq!(w[0].center(), 16);
    }

    #[test]
    fn summaries() {
        let s = video_params_summary(&BlurVideoParams::new(33, 11).unwrap(), 940.0).unwrap();
        assert!((s.blurry_fps - 28.4848).abs() < 1e-3);
        assert!((s.exposure_ms - 11.7021).abs() < 1e-3);
        assert!((s.duty_cycle - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.to_string(), "28.48 fps, 11.70 ms, duty cycle 0.333");

        let s = video_params_summary(&BlurVideoParams::new(63, 15).unwrap(), 940.0).unwrap();
        assert!((s.blurry_fps - 14.92).abs() < 0.01);
        assert!((s.exposure_ms - 15.96).abs() < 0.01);
        assert!((s.duty_cycle - 0.238).abs() < 0.001);

        let s = video_params_summary(&BlurVideoParams::new(1, 1).unwrap(), 500.0).unwrap();
        assert_eq!(
            (s.blurry_fps, s.exposure_ms, s.duty_cycle),
            (500.0, 2.0, 1.0)
        );
        assert!(video_params_summary(&BlurVideoParams::new(1, 1).unwrap(), 0.0).is_err());
    }

    #[test]
    fn space_names() {
        for sp in FormationSpace::ALL {
            assert_eq!(sp.as_str().parse::<FormationSpace>().unwrap(), sp);
            assert_eq!(serde_json::to_string(&sp).unwrap(), format!("\"{sp}\""));
        }
        assert!("linear".parse::<FormationSpace>().is_err());
    }

    #[test]
    fn average_basics() {
        let a = RawFrame::filled(geom(), 100.0).unwrap();
        let b = RawFrame::filled(geom(), 200.0).unwrap();
        assert_eq!(
            average_raw(&[a.clone(), b]).unwrap(),
            RawFrame::filled(geom(), 150.0).unwrap()
        );
        let odd = RawFrame::new(geom(), (0..16).map(|v| v as f32 * 1.37).collect()).unwrap();
        assert_eq!(average_raw(&vec![odd.clone(); 7]).unwrap(), odd);
        assert!(average_raw(&[]).is_err());
        let other =
            RawFrame::filled(RawGeometry::new(4, 4, CfaPattern::Bggr, 16).unwrap(), 1.0).unwrap();
        assert!(average_raw(&[a, other]).is_err());
    }

    #[test]
    fn raw_blur_noise_rules() {
        let a = RawFrame::filled(geom(), 100.0).unwrap();
        let b = RawFrame::filled(geom(), 300.0).unwrap();
        let w = [a.clone(), b];
        assert_eq!(
            synthesize_blur_raw(&w, None, 1).unwrap(),
            average_raw(&w).unwrap()
        );
        let p = NoiseParams { a: 0.01, b: 2.0 };
        assert_eq!(
            synthesize_blur_raw(std::slice::from_ref(&a), Some(&p), 1).unwrap(),
            a
        );
        let full =
            synthesize_blur_raw_with(std::slice::from_ref(&a), Some(&p), InjectionMode::Full, 1)
                .unwrap();
        assert_ne!(full, a);
    }

    #[test]
    fn rgb_means() {
        let black = RgbImage::filled(2, 2, ValueDomain::Display, [0.0; 3]);
        let white = RgbImage::filled(2, 2, ValueDomain::Display, [1.0; 3]);
        let m = synthesize_blur_rgb(&[black.clone(), white.clone()]).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.5));
        assert_eq!(
            synthesize_blur_rgb(&[white.clone(), white.clone()]).unwrap(),
            white
        );

        let g = CrfModel::Power { gamma: 2.2 };
        let c = synthesize_blur_crf(&[black.clone(), white.clone()], &g).unwrap();
        let want = 0.5f64.powf(1.0 / 2.2);
        assert!(c.data().iter().all(|&v| (v as f64 - want).abs() < 1e-6));
        assert!((want - 0.7297).abs() < 1e-4);

        assert_eq!(
            synthesize_blur_crf(&[black.clone(), white.clone()], &CrfModel::Identity).unwrap(),
            m
        );
        assert!(synthesize_blur_rgb(&[]).is_err());
        let lin = RgbImage::filled(2, 2, ValueDomain::Linear, [0.0; 3]);
        assert!(matches!(
            synthesize_blur_rgb(&[black.clone(), lin]),
            Err(Error::DomainMismatch { .. })
        ));
        let big = RgbImage::filled(4, 2, ValueDomain::Display, [0.0; 3]);
        assert!(synthesize_blur_rgb(&[black, big]).is_err());
    }

    proptest! {
        #[test]
        fn window_count_formula(t in 1usize..50, tau_frac in 0.0f64..1.0, n in 1usize..400) {
            let tau = 1 + ((t - 1) as f64 * tau_frac) as usize;
            prop_assume!(n >= tau);
            let w = windows(t, tau, n);
            prop_assert_eq!(w.len(), (n - tau) / t + 1);
            prop_assert_eq!(w, brute_force_windows(t, tau, n));
        }

        #[test]
        fn identity_crf_collapses_to_rgb(vals in proptest::collection::vec(0.0f32..=1.0, 36)) {
            let imgs: Vec<RgbImage> = vals.chunks(12)
                .map(|c| RgbImage::new(2, 2, ValueDomain::Display, c.to_vec()).unwrap())
                .collect();
            prop_assert_eq!(
                synthesize_blur_crf(&imgs, &CrfModel::Identity).unwrap(),
                synthesize_blur_rgb(&imgs).unwrap()
            );
        }

        #[test]
        fn jensen_gap_for_concave_crf(lin in proptest::collection::vec(0.0f64..=1.0, 2..12), gamma in 1.0f64..3.0) {
            // concave g: g(mean(x)) >= mean(g(x)), equality iff constant window
            let g = CrfModel::Power { gamma };
            let frames: Vec<RgbImage> = lin.iter()
                .map(|&v| RgbImage::filled(2, 2, ValueDomain::Display, [g.forward(v) as f32; 3]))
                .collect();
            let rgb = synthesize_blur_rgb(&frames).unwrap();
            let crf = synthesize_blur_crf(&frames, &g).unwrap();
            for (r, c) in rgb.data().iter().zip(crf.data()) {
                prop_assert!(*c >= *r - 1e-6);
            }
        }
    }
}
