//! Synthesis of motion-blurred / sharp training pairs from ultra-high-frame-rate
//! RAW sequences.
//!
//! The pipeline averages consecutive linear RAW frames over an exposure window,
//! optionally restores the sensor noise that averaging removes, and renders the
//! result through a small configurable ISP. The RGB-space and inverse-CRF
//! formation spaces used by older datasets are implemented alongside for
//! comparison.
//!
//! Module map:
//! - [`raw`]: RAW/RGB image types, CFA geometry, quantization.
//! - [`scene`]: procedural moving-sprite scenes and sensor simulation.
//! - [`noise`]: affine (Poisson-Gaussian) noise model, injection and estimation.
//! - [`blur`]: exposure windows and blur synthesis in each formation space.
//! - [`isp`]: black level, white balance, demosaic, color matrix, CRF.
//! - [`metrics`]: PSNR and SSIM.
//! - [`io`]: PGM/PPM frames and JSON manifests.

pub mod blur;
pub mod error;
pub mod io;
pub mod isp;
pub mod metrics;
pub mod noise;
pub mod raw;
pub mod rng;
pub mod scene;

pub use blur::{
    average_raw, exposure_windows, synthesize_blur_crf, synthesize_blur_raw, synthesize_blur_rgb,
    synthesize_dataset, video_params_summary, BlurPair, BlurVideoParams, ExposureWindow,
    FormationSpace, SynthesisOptions, VideoSummary,
};
pub use error::{Error, Result};
pub use isp::{CrfModel, IspConfig};
pub use metrics::{psnr, ssim, MetricReport};
pub use noise::{estimate_noise_params, InjectionMode, NoiseParams};
pub use raw::{
    cfa_channel_of, clamp_quantize, CfaPattern, Channel, RawFrame, RgbImage, SharpRawSequence,
    ValueDomain,
};
pub use scene::{gen_sequence, mosaic, render_irradiance, SceneConfig, SensorModel};
