//! On-disk formats.
//!
//! A sequence directory holds `meta.json` and `frame_%06d.pgm`; a dataset
//! directory holds `dataset.json`, `blur_%06d.ppm` and `sharp_%06d.ppm`. RAW
//! frames are binary PGM (P5) with `maxval = 2^bit_depth − 1`, stored big-endian
//! with two bytes per sample when `maxval > 255`. Rendered images are binary
//! PPM (P6) with `maxval = 255`. Manifests are strict JSON: unknown fields and
//! other schema versions are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::blur::{
    synthesize_dataset, BlurPair, BlurVideoParams, FormationSpace, SynthesisOptions,
};
use crate::error::{Error, Result};
use crate::isp::{CrfModel, IspConfig};
use crate::noise::{InjectionMode, NoiseParams};
use crate::raw::{clamp_quantize, RawFrame, RawGeometry, RgbImage, SharpRawSequence};
use crate::scene::{SceneConfig, SensorModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEQUENCE_MANIFEST: &str = "meta.json";
pub const DATASET_MANIFEST: &str = "dataset.json";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

pub fn blur_file_name(index: usize) -> String {
    format!("blur_{index:06}.ppm")
}

pub fn sharp_file_name(index: usize) -> String {
    format!("sharp_{index:06}.ppm")
}

// ---------------------------------------------------------------------------
// Netpbm
// ---------------------------------------------------------------------------

/// Decoded Netpbm header plus the offset of the first sample byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnmHeader {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub data_offset: usize,
}

impl PnmHeader {
    pub fn bytes_per_sample(&self) -> usize {
        if self.maxval > 255 {
            2
        } else {
            1
        }
    }

    pub fn data_len(&self) -> usize {
        self.width * self.height * self.channels * self.bytes_per_sample()
    }
}

pub fn parse_pnm_header(bytes: &[u8]) -> std::result::Result<PnmHeader, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("not a binary PGM (P5) or PPM (P6) file".into()),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // whitespace and comments before each token
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n') | Some(b'\r')) {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("truncated or malformed header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "header value out of range".to_string())?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after maxval".into()),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!(
            "invalid header values {width}x{height} maxval {maxval}"
        ));
    }
    Ok(PnmHeader {
        channels,
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: pos,
    })
}

fn encode_pnm(
    magic: &str,
    width: usize,
    height: usize,
    maxval: u32,
    samples: impl Iterator<Item = u16>,
) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(samples.map(|s| s as u8));
    }
    out
}

/// Decodes the samples of a P5/P6 file.
pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<(PnmHeader, Vec<u16>), String> {
    let header = parse_pnm_header(bytes)?;
    let body = &bytes[header.data_offset..];
    if body.len() < header.data_len() {
        return Err(format!(
            "truncated sample data: expected {} bytes, found {}",
            header.data_len(),
            body.len()
        ));
    }
    let body = &body[..header.data_len()];
    let samples: Vec<u16> = if header.bytes_per_sample() == 2 {
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        body.iter().map(|&b| b as u16).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s as u32 > header.maxval) {
        return Err(format!("sample {s} exceeds maxval {}", header.maxval));
    }
    Ok((header, samples))
}

/// Quantizes the frame and encodes it as P5.
pub fn encode_pgm(frame: &RawFrame) -> Vec<u8> {
    let q = clamp_quantize(frame);
    let maxval = frame.geometry().max_code() as u32;
    encode_pnm(
        "P5",
        frame.width(),
        frame.height(),
        maxval,
        q.data().iter().map(|&v| v as u16),
    )
}

pub fn encode_ppm(image: &RgbImage) -> Result<Vec<u8>> {
    let bytes = image.to_bytes()?;
    Ok(encode_pnm(
        "P6",
        image.width(),
        image.height(),
        255,
        bytes.into_iter().map(u16::from),
    ))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, frame: &RawFrame) -> Result<()> {
    write_bytes(path, &encode_pgm(frame))
}

/// Reads a P5 frame and checks it against the expected geometry.
pub fn read_pgm(path: &Path, geometry: &RawGeometry) -> Result<RawFrame> {
    let bytes = read_bytes(path)?;
    let (h, samples) = decode_pnm(&bytes).map_err(|m| Error::format(path, m))?;
    if h.channels != 1 {
        return Err(Error::format(path, "expected a PGM (P5) frame"));
    }
    if h.width != geometry.width || h.height != geometry.height {
        return Err(Error::format(
            path,
            format!(
                "frame is {}x{}, manifest says {}x{}",
                h.width, h.height, geometry.width, geometry.height
            ),
        ));
    }
    if h.maxval as f64 != geometry.max_code() {
        return Err(Error::format(
            path,
            format!(
                "maxval {} does not match bit depth {}",
                h.maxval, geometry.bit_depth
            ),
        ));
    }
    RawFrame::new(*geometry, samples.into_iter().map(f32::from).collect())
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_ppm(image)?)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = read_bytes(path)?;
    let (h, samples) = decode_pnm(&bytes).map_err(|m| Error::format(path, m))?;
    if h.channels != 3 || h.maxval != 255 {
        return Err(Error::format(path, "expected an 8-bit PPM (P6) image"));
    }
    let bytes: Vec<u8> = samples.into_iter().map(|s| s as u8).collect();
    RgbImage::from_bytes(h.width, h.height, &bytes)
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn check_schema(path: &Path, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

/// Scene generator input: what to render and how the sensor records it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub scene: SceneConfig,
    pub sensor: SensorModel,
}

pub fn read_scene_file(path: &Path) -> Result<SceneFile> {
    let file: SceneFile = read_json(path)?;
    file.scene.validate()?;
    file.sensor.geometry(file.scene.width, file.scene.height)?;
    Ok(file)
}

/// Provenance recorded alongside a sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceProvenance {
    pub noise: Option<NoiseParams>,
    pub scene: Option<SceneConfig>,
    pub sensor: Option<SensorModel>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub schema_version: u32,
    pub geometry: RawGeometry,
    pub sharp_fps: f64,
    pub per_frame_exposure_ms: f64,
    pub frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl SequenceManifest {
    fn validate(&self, path: &Path) -> Result<()> {
        check_schema(path, self.schema_version)?;
        self.geometry.validate()?;
        if self.frames.is_empty() {
            return Err(Error::format(path, "frame list is empty"));
        }
        for (i, name) in self.frames.iter().enumerate() {
            if *name != frame_file_name(i) {
                return Err(Error::format(
                    path,
                    format!("frame {i} is {name:?}, expected {:?}", frame_file_name(i)),
                ));
            }
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }
}

/// Writes quantized frames and `meta.json`.
pub fn write_sequence(
    dir: &Path,
    seq: &SharpRawSequence,
    provenance: &SequenceProvenance,
) -> Result<SequenceManifest> {
    create_dir(dir)?;
    seq.frames()
        .par_iter()
        .enumerate()
        .try_for_each(|(i, f)| write_pgm(&dir.join(frame_file_name(i)), f))?;
    let manifest = SequenceManifest {
        schema_version: SCHEMA_VERSION,
        geometry: *seq.geometry(),
        sharp_fps: seq.sharp_fps(),
        per_frame_exposure_ms: seq.per_frame_exposure_ms(),
        frames: (0..seq.len()).map(frame_file_name).collect(),
        noise: provenance.noise,
        scene: provenance.scene.clone(),
        sensor: provenance.sensor.clone(),
        seed: provenance.seed,
        meta: seq.meta.clone(),
    };
    write_json(&dir.join(SEQUENCE_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_sequence_manifest(dir: &Path) -> Result<SequenceManifest> {
    let path = dir.join(SEQUENCE_MANIFEST);
    let manifest: SequenceManifest = read_json(&path)?;
    manifest.validate(&path)?;
    Ok(manifest)
}

/// Reads the manifest and every frame it lists.
pub fn load_sequence(dir: &Path) -> Result<(SequenceManifest, SharpRawSequence)> {
    let manifest = read_sequence_manifest(dir)?;
    let frames = manifest
        .frames
        .par_iter()
        .map(|name| read_pgm(&dir.join(name), &manifest.geometry))
        .collect::<Result<Vec<_>>>()?;
    let mut seq =
        SharpRawSequence::new(frames, manifest.sharp_fps, manifest.per_frame_exposure_ms)?;
    seq.meta = manifest.meta.clone();
    Ok((manifest, seq))
}

pub fn read_sequence(dir: &Path) -> Result<SharpRawSequence> {
    load_sequence(dir).map(|(_, seq)| seq)
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub blurry: String,
    pub sharp: String,
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    /// Source sequence directory as given at synthesis time.
    pub source: String,
    pub params: BlurVideoParams,
    pub space: FormationSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isp_name: Option<String>,
    pub isp: IspConfig,
    pub noise: Option<NoiseParams>,
    pub injection: InjectionMode,
    /// CRF inverted by `rgb-crf` synthesis.
    pub crf: CrfModel,
    pub offset: usize,
    pub seed: u64,
    pub pairs: Vec<PairRecord>,
}

impl DatasetManifest {
    /// Header for a dataset synthesized from `source` with `opts`; no pairs yet.
    pub fn new(
        source: impl Into<String>,
        opts: &SynthesisOptions,
        isp_name: Option<String>,
    ) -> Self {
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            source: source.into(),
            params: opts.params,
            space: opts.space,
            isp_name,
            isp: opts.isp.clone(),
            noise: opts.noise,
            injection: opts.injection,
            crf: opts.effective_crf(),
            offset: opts.offset,
            seed: opts.seed,
            pairs: Vec::new(),
        }
    }

    /// Options that reproduce this dataset.
    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            params: self.params,
            space: self.space,
            isp: self.isp.clone(),
            noise: self.noise,
            injection: self.injection,
            crf: Some(self.crf),
            offset: self.offset,
            seed: self.seed,
        }
    }

    fn validate(&self, path: &Path) -> Result<()> {
        check_schema(path, self.schema_version)?;
        self.params.validate()?;
        self.isp.validate()?;
        for (k, row) in self.pairs.iter().enumerate() {
            let start = self.offset + k * self.params.period;
            if row.start != start || row.length != self.params.exposure {
                return Err(Error::format(
                    path,
                    format!(
                        "pair {k} window ({}, {}) does not match T={} tau={} offset={}",
                        row.start,
                        row.length,
                        self.params.period,
                        self.params.exposure,
                        self.offset
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Writes one pair as `blur_%06d.ppm` / `sharp_%06d.ppm`, numbered by the
/// current row count, and appends its row to `manifest`.
pub fn write_pair(
    pair: &BlurPair,
    dir: &Path,
    manifest: &mut DatasetManifest,
) -> Result<(PathBuf, PathBuf)> {
    let index = manifest.pairs.len();
    let blurry = dir.join(blur_file_name(index));
    let sharp = dir.join(sharp_file_name(index));
    write_ppm(&blurry, &pair.blurry)?;
    write_ppm(&sharp, &pair.sharp)?;
    manifest.pairs.push(PairRecord {
        blurry: blur_file_name(index),
        sharp: sharp_file_name(index),
        start: pair.window.start,
        length: pair.window.length,
    });
    Ok((blurry, sharp))
}

/// Writes every pair and then `dataset.json`.
pub fn write_dataset(
    dir: &Path,
    mut manifest: DatasetManifest,
    pairs: &[BlurPair],
) -> Result<DatasetManifest> {
    create_dir(dir)?;
    manifest.pairs.clear();
    for pair in pairs {
        write_pair(pair, dir, &mut manifest)?;
    }
    write_json(&dir.join(DATASET_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(DATASET_MANIFEST);
    let manifest: DatasetManifest = read_json(&path)?;
    manifest.validate(&path)?;
    Ok(manifest)
}

/// Reads the manifest and every `(blurry, sharp)` image pair.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<(RgbImage, RgbImage)>)> {
    let manifest = read_dataset_manifest(dir)?;
    let images = manifest
        .pairs
        .iter()
        .map(|row| {
            Ok((
                read_ppm(&dir.join(&row.blurry))?,
                read_ppm(&dir.join(&row.sharp))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, images))
}

/// Re-runs synthesis from a dataset's manifest and its source sequence.
/// A relative source path is tried as given, then relative to `dir`.
pub fn resynthesize(dir: &Path) -> Result<Vec<BlurPair>> {
    let manifest = read_dataset_manifest(dir)?;
    let given = PathBuf::from(&manifest.source);
    let source = if given.is_relative() && !given.join(SEQUENCE_MANIFEST).exists() {
        dir.join(&given)
    } else {
        given
    };
    let seq = read_sequence(&source)?;
    synthesize_dataset(&seq, &manifest.options())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::{CfaPattern, ValueDomain};

    #[test]
    fn pgm_16_bit_layout() {
        let g = RawGeometry::new(4, 2, CfaPattern::Rggb, 16).unwrap();
        let f =
            RawFrame::new(g, vec![0.0, 1.0, 256.0, 65535.0, 70000.0, -5.0, 100.5, 7.0]).unwrap();
        let bytes = encode_pgm(&f);
        let header = b"P5\n4 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 4 * 2 * 2);
        assert_eq!(
            &bytes[header.len()..header.len() + 8],
            &[0, 0, 0, 1, 1, 0, 0xFF, 0xFF]
        );
        let (h, samples) = decode_pnm(&bytes).unwrap();
        assert_eq!(h.maxval, 65535);
        assert_eq!(samples, vec![0, 1, 256, 65535, 65535, 0, 101, 7]);
    }

    #[test]
    fn pgm_8_bit_uses_one_byte() {
        let g = RawGeometry::new(2, 2, CfaPattern::Rggb, 8).unwrap();
        let f = RawFrame::new(g, vec![0.0, 10.0, 200.0, 255.0]).unwrap();
        let bytes = encode_pgm(&f);
        assert_eq!(bytes, b"P5\n2 2\n255\n\x00\x0a\xc8\xff");
    }

    #[test]
    fn header_comments_and_errors() {
        let bytes = b"P6 # comment\n2 1\n# another\n255\n\x01\x02\x03\x04\x05\x06";
        let (h, s) = decode_pnm(bytes).unwrap();
        assert_eq!((h.channels, h.width, h.height), (3, 2, 1));
        assert_eq!(s, vec![1, 2, 3, 4, 5, 6]);
        assert!(decode_pnm(b"P6\n2 1\n255\n\x01\x02")
            .unwrap_err()
            .contains("truncated"));
        assert!(decode_pnm(b"P3\n2 1\n255\n").is_err());
        assert!(decode_pnm(b"P5\n2 1\n").is_err());
        assert!(decode_pnm(b"P5\n1 1\n1000\n\x04\x00")
            .unwrap_err()
            .contains("exceeds"));
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f32).collect();
        let img = RgbImage::new(4, 3, ValueDomain::Quantized8, data).unwrap();
        let p = dir.path().join("x.ppm");
        write_ppm(&p, &img).unwrap();
        assert_eq!(read_ppm(&p).unwrap(), img);
        let display = RgbImage::filled(2, 2, ValueDomain::Display, [0.5; 3]);
        assert!(write_ppm(&p, &display).is_err());
    }

    #[test]
    fn read_pgm_checks_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let g = RawGeometry::new(4, 2, CfaPattern::Rggb, 12).unwrap();
        let f = RawFrame::filled(g, 1000.0).unwrap();
        let p = dir.path().join("f.pgm");
        write_pgm(&p, &f).unwrap();
        assert_eq!(read_pgm(&p, &g).unwrap(), f);
        let g16 = RawGeometry::new(4, 2, CfaPattern::Rggb, 16).unwrap();
        assert!(read_pgm(&p, &g16).is_err());
        let g_big = RawGeometry::new(4, 4, CfaPattern::Rggb, 12).unwrap();
        assert!(read_pgm(&p, &g_big).is_err());
        assert!(matches!(
            read_pgm(&dir.path().join("nope.pgm"), &g),
            Err(Error::MissingFile(_))
        ));
    }
}
