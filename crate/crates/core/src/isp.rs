//! Software ISP: black level → white balance → bilinear demosaic → color
//! matrix → clamp → CRF → 8-bit.
//!
//! Every stage before the CRF is linear in the sample values, so it commutes
//! with frame averaging. The single clamp sits right before the CRF.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raw::{cfa_channel_of, CfaPattern, RawFrame, RgbImage, ValueDomain};

/// Camera response function `g`, mapping linear `[0, 1]` to display `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CrfModel {
    Identity,
    /// `g(x) = x^(1/gamma)`.
    Power {
        gamma: f64,
    },
    /// IEC 61966-2-1 piecewise curve.
    Srgb,
}

const SRGB_LINEAR_CUTOFF: f64 = 0.003_130_8;
const SRGB_SLOPE: f64 = 12.92;
// Display-side cutoff taken from the forward curve so g and g⁻¹ agree exactly
// at the seam.
const SRGB_DISPLAY_CUTOFF: f64 = SRGB_LINEAR_CUTOFF * SRGB_SLOPE;

impl CrfModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CrfModel::Power { gamma } if !(gamma.is_finite() && gamma > 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "power CRF needs a positive finite gamma, got {gamma}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// `g(x)` for `x` in `[0, 1]`.
    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            CrfModel::Identity => x,
            CrfModel::Power { gamma } => x.powf(1.0 / gamma),
            CrfModel::Srgb => {
                if x <= SRGB_LINEAR_CUTOFF {
                    x * SRGB_SLOPE
                } else {
                    1.055 * x.powf(1.0 / 2.4) - 0.055
                }
            }
        }
    }

    /// `g⁻¹(y)` for `y` in `[0, 1]`.
    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        match *self {
            CrfModel::Identity => y,
            CrfModel::Power { gamma } => y.powf(gamma),
            CrfModel::Srgb => {
                if y <= SRGB_DISPLAY_CUTOFF {
                    y / SRGB_SLOPE
                } else {
                    ((y + 0.055) / 1.055).powf(2.4)
                }
            }
        }
    }
}

impl fmt::Display for CrfModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrfModel::Identity => f.write_str("identity"),
            CrfModel::Power { gamma } => write!(f, "power:{gamma}"),
            CrfModel::Srgb => f.write_str("srgb"),
        }
    }
}

/// Parses `identity`, `srgb` or `power:<gamma>`.
impl FromStr for CrfModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let crf = match s {
            "identity" => CrfModel::Identity,
            "srgb" => CrfModel::Srgb,
            _ => {
                let gamma = s
                    .strip_prefix("power:")
                    .and_then(|g| g.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "unknown CRF {s:?} (expected identity, srgb or power:<gamma>)"
                        ))
                    })?;
                CrfModel::Power { gamma }
            }
        };
        crf.validate()?;
        Ok(crf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemosaicMethod {
    #[default]
    Bilinear,
}

/// ISP stage parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IspConfig {
    /// Overrides the frame's own black level when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub black_level: Option<f64>,
    pub wb_gains: [f64; 3],
    #[serde(default)]
    pub demosaic: DemosaicMethod,
    /// Row-major color matrix; every row sums to 1.
    pub ccm: [[f64; 3]; 3],
    pub crf: CrfModel,
    #[serde(default = "default_output_bits")]
    pub output_bit_depth: u8,
}

fn default_output_bits() -> u8 {
    8
}

pub const IDENTITY_CCM: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl IspConfig {
    /// γ = 2.2 power curve, unit white balance, identity matrix.
    pub fn preset_a() -> Self {
        IspConfig {
            black_level: None,
            wb_gains: [1.0, 1.0, 1.0],
            demosaic: DemosaicMethod::Bilinear,
            ccm: IDENTITY_CCM,
            crf: CrfModel::Power { gamma: 2.2 },
            output_bit_depth: 8,
        }
    }

    /// sRGB curve, warm white balance and a saturating color matrix.
    pub fn preset_b() -> Self {
        IspConfig {
            black_level: None,
            wb_gains: [1.8, 1.0, 1.6],
            demosaic: DemosaicMethod::Bilinear,
            ccm: [
                [1.55, -0.35, -0.20],
                [-0.25, 1.45, -0.20],
                [-0.05, -0.45, 1.50],
            ],
            crf: CrfModel::Srgb,
            output_bit_depth: 8,
        }
    }

    /// Looks up `preset-a` / `preset-b`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "preset-a" => Some(Self::preset_a()),
            "preset-b" => Some(Self::preset_b()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_gains(&self.wb_gains)?;
        check_ccm(&self.ccm)?;
        self.crf.validate()?;
        if self.output_bit_depth != 8 {
            return Err(Error::InvalidParameter(format!(
                "only 8-bit output is supported, got {}",
                self.output_bit_depth
            )));
        }
        if let Some(bl) = self.black_level {
            if !(bl.is_finite() && bl >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "black level override {bl} is invalid"
                )));
            }
        }
        Ok(())
    }
}

fn check_gains(gains: &[f64; 3]) -> Result<()> {
    if gains.iter().all(|g| g.is_finite() && *g > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "white balance gains must be positive, got {gains:?}"
        )))
    }
}

fn check_ccm(ccm: &[[f64; 3]; 3]) -> Result<()> {
    for (i, row) in ccm.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "color matrix row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Black-level-subtracted RAW mosaic scaled so white maps to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRaw {
    pub width: usize,
    pub height: usize,
    pub cfa_pattern: CfaPattern,
    pub data: Vec<f32>,
}

/// `max(v − black, 0) / (white − black)` using the frame's own levels.
pub fn black_level_correct(frame: &RawFrame) -> Result<NormalizedRaw> {
    black_level_correct_with(frame, frame.black_level())
}

pub fn black_level_correct_with(frame: &RawFrame, black_level: f64) -> Result<NormalizedRaw> {
    let white = frame.white_level();
    if white <= black_level {
        return Err(Error::InvalidParameter(format!(
            "white level {white} must exceed black level {black_level}"
        )));
    }
    let scale = 1.0 / (white - black_level);
    let data = frame
        .data()
        .par_iter()
        .map(|&v| ((v as f64 - black_level).max(0.0) * scale) as f32)
        .collect();
    Ok(NormalizedRaw {
        width: frame.width(),
        height: frame.height(),
        cfa_pattern: frame.cfa_pattern(),
        data,
    })
}

/// Multiplies each CFA site by its channel's gain.
pub fn white_balance(raw: &NormalizedRaw, gains: [f64; 3]) -> Result<NormalizedRaw> {
    check_gains(&gains)?;
    let g = gains.map(|g| g as f32);
    let (w, pattern) = (raw.width, raw.cfa_pattern);
    let mut data = raw.data.clone();
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            *v *= g[cfa_channel_of(pattern, x, y).index()];
        }
    });
    Ok(NormalizedRaw {
        data,
        ..raw.clone()
    })
}

/// Mirror an index that is at most one step outside `0..n`, keeping CFA parity.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

/// Same-channel taps in the 3×3 neighborhood, indexed by `[phase][channel]`.
type TapTable = [[Vec<(isize, isize)>; 3]; 4];

fn tap_table(pattern: CfaPattern) -> TapTable {
    std::array::from_fn(|phase| {
        let (px, py) = (phase & 1, phase >> 1);
        std::array::from_fn(|c| {
            let at = |dx: isize, dy: isize| {
                cfa_channel_of(
                    pattern,
                    (px as isize + dx + 2) as usize,
                    (py as isize + dy + 2) as usize,
                )
                .index()
            };
            if at(0, 0) == c {
                return vec![(0, 0)];
            }
            let mut taps = Vec::new();
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if at(dx, dy) == c {
                        taps.push((dx, dy));
                    }
                }
            }
            taps
        })
    })
}

/// Bilinear demosaic: each missing channel is the mean of its nearest
/// same-channel sites (2 or 4 taps). Borders mirror about the edge pixel so the
/// CFA phase is preserved.
pub fn demosaic_bilinear(raw: &NormalizedRaw) -> RgbImage {
    let (w, h) = (raw.width, raw.height);
    let table = tap_table(raw.cfa_pattern);
    let src = &raw.data;
    let mut out = vec![0.0f32; w * h * 3];
    out.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let phase = (x & 1) | ((y & 1) << 1);
            for (c, taps) in table[phase].iter().enumerate() {
                let sum: f32 = taps
                    .iter()
                    .map(|&(dx, dy)| {
                        let sx = reflect(x as isize + dx, w);
                        let sy = reflect(y as isize + dy, h);
                        src[sy * w + sx]
                    })
                    .sum();
                row[x * 3 + c] = sum / taps.len() as f32;
            }
        }
    });
    RgbImage::new(w, h, ValueDomain::Linear, out).expect("shape")
}

/// Per-pixel 3×3 matrix multiply on a linear image.
pub fn color_correct(image: &RgbImage, ccm: &[[f64; 3]; 3]) -> Result<RgbImage> {
    image.expect_domain(ValueDomain::Linear)?;
    check_ccm(ccm)?;
    if *ccm == IDENTITY_CCM {
        return Ok(image.clone());
    }
    let m = ccm.map(|row| row.map(|v| v as f32));
    let mut out = image.clone();
    out.data_mut().par_chunks_mut(3).for_each(|px| {
        let [r, g, b] = [px[0], px[1], px[2]];
        for (o, row) in px.iter_mut().zip(&m) {
            *o = row[0] * r + row[1] * g + row[2] * b;
        }
    });
    Ok(out)
}

/// Clamps to `[0, 1]` and applies `g` per channel.
pub fn apply_crf(image: &RgbImage, crf: &CrfModel) -> Result<RgbImage> {
    image.expect_domain(ValueDomain::Linear)?;
    crf.validate()?;
    Ok(map_values(image, |v| crf.forward(v.clamp(0.0, 1.0))).with_domain(ValueDomain::Display))
}

/// Applies `g⁻¹` per channel. Values clipped by [`apply_crf`] stay clipped.
pub fn inverse_crf(image: &RgbImage, crf: &CrfModel) -> Result<RgbImage> {
    image.expect_domain(ValueDomain::Display)?;
    crf.validate()?;
    Ok(map_values(image, |v| crf.inverse(v.clamp(0.0, 1.0))).with_domain(ValueDomain::Linear))
}

fn map_values(image: &RgbImage, f: impl Fn(f64) -> f64 + Sync) -> RgbImage {
    let mut out = image.clone();
    out.data_mut()
        .par_iter_mut()
        .for_each(|v| *v = f(*v as f64) as f32);
    out
}

/// Display `[0, 1]` to 8-bit codes, rounding half up.
pub fn quantize8(image: &RgbImage) -> Result<RgbImage> {
    image.expect_domain(ValueDomain::Display)?;
    Ok(
        map_values(image, |v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor())
            .with_domain(ValueDomain::Quantized8),
    )
}

/// Runs every stage up to and including the CRF, without quantizing.
pub fn render_display(frame: &RawFrame, config: &IspConfig) -> Result<RgbImage> {
    config.validate()?;
    let black = config.black_level.unwrap_or(frame.black_level());
    let normalized = black_level_correct_with(frame, black)?;
    let balanced = white_balance(&normalized, config.wb_gains)?;
    let linear = match config.demosaic {
        DemosaicMethod::Bilinear => demosaic_bilinear(&balanced),
    };
    let corrected = color_correct(&linear, &config.ccm)?;
    apply_crf(&corrected, &config.crf)
}

/// Full render to 8-bit RGB.
pub fn render(frame: &RawFrame, config: &IspConfig) -> Result<RgbImage> {
    quantize8(&render_display(frame, config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::RawGeometry;
    use proptest::prelude::*;

    fn geom(w: usize, h: usize) -> RawGeometry {
        RawGeometry::new(w, h, CfaPattern::Rggb, 16).unwrap()
    }

    fn norm(
        w: usize,
        h: usize,
        pattern: CfaPattern,
        f: impl Fn(usize, usize) -> f32,
    ) -> NormalizedRaw {
        let data = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        NormalizedRaw {
            width: w,
            height: h,
            cfa_pattern: pattern,
            data,
        }
    }

    #[test]
    fn black_level_endpoints() {
        let g = geom(2, 2).with_levels(64.0, 1023.0).unwrap();
        let f = RawFrame::new(g, vec![64.0, 1023.0, 10.0, 543.5]).unwrap();
        let n = black_level_correct(&f).unwrap();
        assert_eq!(n.data[0], 0.0);
        assert_eq!(n.data[1], 1.0);
        assert_eq!(n.data[2], 0.0);
        assert!((n.data[3] - 0.5).abs() < 1e-6);

        let f0 = RawFrame::new(geom(2, 2), vec![65535.0, 0.0, 655.35, 1.0]).unwrap();
        let n0 = black_level_correct(&f0).unwrap();
        assert_eq!(n0.data[0], 1.0);
        assert!((n0.data[2] - 0.01).abs() < 1e-7);
        assert!(black_level_correct_with(&f0, 70000.0).is_err());
    }

    #[test]
    fn white_balance_per_site() {
        let raw = norm(2, 2, CfaPattern::Rggb, |_, _| 0.5);
        assert_eq!(white_balance(&raw, [1.0, 1.0, 1.0]).unwrap(), raw);
        let wb = white_balance(&raw, [2.0, 1.0, 1.5]).unwrap();
        assert_eq!(wb.data, vec![1.0, 0.5, 0.5, 0.75]);
        assert!(white_balance(&raw, [0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn gray_world_gains_after_demosaic() {
        let raw = norm(8, 8, CfaPattern::Rggb, |_, _| 0.2);
        let rgb = demosaic_bilinear(&white_balance(&raw, [2.0, 1.0, 1.5]).unwrap());
        for px in rgb.data().chunks(3) {
            assert!(
                (px[0] - 0.4).abs() < 1e-6
                    && (px[1] - 0.2).abs() < 1e-6
                    && (px[2] - 0.3).abs() < 1e-6
            );
        }
    }

    #[test]
    fn demosaic_constant_everywhere() {
        for p in CfaPattern::ALL {
            let rgb = demosaic_bilinear(&norm(6, 4, p, |_, _| 0.37));
            assert!(rgb.data().iter().all(|&v| v == 0.37), "{p}");
        }
    }

    #[test]
    fn demosaic_pure_red_tile() {
        // R sites hold v, everything else 0. At the interior G site (1, 2) of
        // RGGB the two horizontal neighbors (0, 2) and (2, 2) are R sites.
        let v = 0.8;
        let raw = norm(4, 4, CfaPattern::Rggb, |x, y| {
            if x % 2 == 0 && y % 2 == 0 {
                v
            } else {
                0.0
            }
        });
        let rgb = demosaic_bilinear(&raw);
        assert_eq!(rgb.pixel(1, 2), [v, 0.0, 0.0]);
        // B site (1, 1): four diagonal R neighbors.
        assert_eq!(rgb.pixel(1, 1), [v, 0.0, 0.0]);
        // R site passes through.
        assert_eq!(rgb.pixel(2, 2), [v, 0.0, 0.0]);
    }

    #[test]
    fn demosaic_reproduces_ramps_in_interior() {
        for p in CfaPattern::ALL {
            let raw = norm(10, 8, p, |x, y| 0.01 * x as f32 + 0.02 * y as f32);
            let rgb = demosaic_bilinear(&raw);
            for y in 1..7 {
                for x in 1..9 {
                    let want = 0.01 * x as f32 + 0.02 * y as f32;
                    for c in rgb.pixel(x, y) {
                        assert!((c - want).abs() < 1e-6, "{p} ({x},{y}) {c} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn color_matrix() {
        let img = RgbImage::filled(2, 2, ValueDomain::Linear, [1.0, 0.0, 0.0]);
        assert_eq!(color_correct(&img, &IDENTITY_CCM).unwrap(), img);
        let ccm = [[1.5, -0.3, -0.2], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let out = color_correct(&img, &ccm).unwrap();
        assert!((out.data()[0] - 1.5).abs() < 1e-6);
        let gray = RgbImage::filled(2, 2, ValueDomain::Linear, [0.3, 0.3, 0.3]);
        let out = color_correct(&gray, &IspConfig::preset_b().ccm).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        assert!(color_correct(&img, &[[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn crf_closed_forms() {
        let g = CrfModel::Power { gamma: 2.2 };
        assert!((g.forward(0.5) - 0.5f64.powf(1.0 / 2.2)).abs() < 1e-15);
        assert!((g.forward(0.5) - 0.7297).abs() < 1e-4);
        for crf in [CrfModel::Identity, g, CrfModel::Srgb] {
            assert_eq!(crf.forward(0.0), 0.0);
            assert!((crf.forward(1.0) - 1.0).abs() < 1e-12);
            assert_eq!(crf.inverse(0.0), 0.0);
            for x in [0.25, 0.5, 0.75] {
                assert!((crf.inverse(crf.forward(x)) - x).abs() < 1e-12, "{crf}");
            }
        }
        assert!(CrfModel::Power { gamma: 0.0 }.validate().is_err());
    }

    #[test]
    fn crf_parse() {
        assert_eq!(
            "power:2.2".parse::<CrfModel>().unwrap(),
            CrfModel::Power { gamma: 2.2 }
        );
        assert_eq!("srgb".parse::<CrfModel>().unwrap(), CrfModel::Srgb);
        assert!("power:-1".parse::<CrfModel>().is_err());
        assert!("log".parse::<CrfModel>().is_err());
    }

    #[test]
    fn apply_crf_clamps() {
        let img = RgbImage::filled(2, 2, ValueDomain::Linear, [-0.5, 0.5, 1.5]);
        let out = apply_crf(&img, &CrfModel::Identity).unwrap();
        assert_eq!(out.pixel(0, 0), [0.0, 0.5, 1.0]);
        assert_eq!(out.domain(), ValueDomain::Display);
        assert!(apply_crf(&out, &CrfModel::Identity).is_err());
    }

    #[test]
    fn render_endpoints() {
        let identity = IspConfig {
            crf: CrfModel::Identity,
            ..IspConfig::preset_a()
        };
        let white = RawFrame::filled(geom(4, 4), 65535.0).unwrap();
        assert!(render(&white, &identity)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 255.0));
        let g = geom(4, 4).with_levels(512.0, 65535.0).unwrap();
        let black = RawFrame::filled(g, 512.0).unwrap();
        assert!(render(&black, &IspConfig::preset_b())
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn gray_raw_renders_gray_with_unit_gains() {
        let cfg = IspConfig {
            wb_gains: [1.0, 1.0, 1.0],
            ..IspConfig::preset_b()
        };
        let f = RawFrame::filled(geom(8, 8), 20000.0).unwrap();
        for px in render(&f, &cfg).unwrap().data().chunks(3) {
            assert!(px[0] == px[1] && px[1] == px[2]);
        }
    }

    #[test]
    fn render_monotone_on_gray_ramp() {
        for cfg in [IspConfig::preset_a(), IspConfig::preset_b()] {
            let mut last = [-1.0f32; 3];
            for k in 0..=64 {
                let f = RawFrame::filled(geom(4, 4), k as f32 * 1000.0).unwrap();
                let px = render(&f, &cfg).unwrap().pixel(1, 1);
                for c in 0..3 {
                    assert!(px[c] >= last[c]);
                }
                last = px;
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = IspConfig::preset_a();
        cfg.output_bit_depth = 16;
        assert!(cfg.validate().is_err());
        let mut cfg = IspConfig::preset_a();
        cfg.wb_gains[2] = -1.0;
        assert!(cfg.validate().is_err());
        assert!(IspConfig::preset("preset-c").is_none());
        assert!(IspConfig::preset_b().validate().is_ok());
    }

    #[test]
    fn config_json_rejects_unknown_fields() {
        let json = serde_json::to_string(&IspConfig::preset_b()).unwrap();
        let back: IspConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, IspConfig::preset_b());
        let extra = json.replacen('{', "{\"sharpen\":1,", 1);
        assert!(serde_json::from_str::<IspConfig>(&extra).is_err());
    }

    proptest! {
        #[test]
        fn linear_stages_commute_with_averaging(
            a in proptest::collection::vec(0.0f32..1.0, 64),
            b in proptest::collection::vec(0.0f32..1.0, 64),
            p in 0usize..4,
        ) {
            let pattern = CfaPattern::ALL[p];
            let mk = |d: &Vec<f32>| NormalizedRaw { width: 8, height: 8, cfa_pattern: pattern, data: d.clone() };
            let mean: Vec<f32> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
            let cfg = IspConfig::preset_b();
            let stage = |r: &NormalizedRaw| {
                let wb = white_balance(r, cfg.wb_gains).unwrap();
                color_correct(&demosaic_bilinear(&wb), &cfg.ccm).unwrap()
            };
            let of_mean = stage(&mk(&mean));
            let (sa, sb) = (stage(&mk(&a)), stage(&mk(&b)));
            for i in 0..of_mean.data().len() {
                let m = (sa.data()[i] + sb.data()[i]) / 2.0;
                prop_assert!((of_mean.data()[i] - m).abs() < 1e-5);
            }
        }
    }
}
