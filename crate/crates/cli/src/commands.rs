use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use rawblur::blur::{
    synthesize_dataset, video_params_summary, BlurVideoParams, FormationSpace, SynthesisOptions,
};
use rawblur::io::{self, DatasetManifest, SequenceProvenance};
use rawblur::isp::{CrfModel, IspConfig};
use rawblur::metrics::{compare, MetricReport};
use rawblur::noise::{fit_affine_variance, measure_level, InjectionMode, NoiseParams};
use rawblur::scene::gen_sequence;

use crate::{
    EstimateNoiseArgs, GenSceneArgs, Global, InspectArgs, MetricsArgs, SynthesizeArgs, UsageError,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn provenance<T: Serialize>(global: &Global, command: &str, config: &T) -> anyhow::Result<()> {
    if !global.quiet {
        println!("{command} config: {}", serde_json::to_string(config)?);
    }
    Ok(())
}

pub fn gen_scene(global: &Global, args: GenSceneArgs) -> anyhow::Result<()> {
    if !(args.fps.is_finite() && args.fps > 0.0) {
        return Err(usage(format!("--fps must be positive, got {}", args.fps)));
    }
    let file = io::read_scene_file(&args.config)?;
    provenance(
        global,
        "gen-scene",
        &serde_json::json!({
            "config": file,
            "frames": args.frames,
            "fps": args.fps,
            "seed": global.seed,
            "out": args.out,
        }),
    )?;
    let seq = gen_sequence(
        &file.scene,
        &file.sensor,
        args.fps,
        args.frames as usize,
        global.seed,
    )?;
    let extras = SequenceProvenance {
        noise: Some(file.sensor.noise),
        scene: Some(file.scene),
        sensor: Some(file.sensor),
        seed: Some(global.seed),
    };
    io::write_sequence(&args.out, &seq, &extras)?;
    if !global.quiet {
        println!("wrote {} frames to {}", seq.len(), args.out.display());
    }
    Ok(())
}

fn resolve_isp(spec: &str) -> anyhow::Result<(IspConfig, Option<String>)> {
    if let Some(cfg) = IspConfig::preset(spec) {
        return Ok((cfg, Some(spec.to_string())));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(usage(format!(
            "--isp must be preset-a, preset-b or an existing config file, got {spec:?}"
        )));
    }
    let cfg: IspConfig = io::read_json(path)?;
    cfg.validate()
        .with_context(|| format!("ISP config {}", path.display()))?;
    Ok((cfg, None))
}

pub fn synthesize(global: &Global, args: SynthesizeArgs) -> anyhow::Result<()> {
    let params = BlurVideoParams::new(args.period, args.tau).map_err(|e| usage(e.to_string()))?;
    let space: FormationSpace = args
        .space
        .parse()
        .map_err(|e: rawblur::Error| usage(e.to_string()))?;
    let injection: InjectionMode = args
        .noise_mode
        .parse()
        .map_err(|e: rawblur::Error| usage(e.to_string()))?;
    let crf = args
        .crf_model
        .as_deref()
        .map(str::parse::<CrfModel>)
        .transpose()
        .map_err(|e| usage(e.to_string()))?;
    let explicit_noise = match args.noise.as_deref() {
        None | Some("from-meta") => None,
        Some(text) => Some(
            text.parse::<NoiseParams>()
                .map_err(|e| usage(e.to_string()))?,
        ),
    };
    let (isp, isp_name) = resolve_isp(&args.isp)?;

    let (manifest, seq) = io::load_sequence(&args.input)?;
    let noise = match (space, explicit_noise) {
        (FormationSpace::RawNoise, Some(n)) => Some(n),
        (FormationSpace::RawNoise, None) => Some(manifest.noise.ok_or_else(|| {
            anyhow!(
                "{} has no recorded noise parameters; pass --noise a,b",
                args.input.display()
            )
        })?),
        _ => None,
    };

    let opts = SynthesisOptions {
        params,
        space,
        isp,
        noise,
        injection,
        crf,
        offset: args.offset,
        seed: global.seed,
    };
    let header = DatasetManifest::new(args.input.to_string_lossy(), &opts, isp_name);
    provenance(global, "synthesize", &header)?;

    let pairs = synthesize_dataset(&seq, &opts)?;
    let written = io::write_dataset(&args.out, header, &pairs)?;
    let summary = video_params_summary(&params, seq.sharp_fps())?;
    if !global.quiet {
        println!(
            "synthesized {} pairs in {} space: {}",
            written.pairs.len(),
            space,
            summary
        );
    }
    Ok(())
}

pub fn estimate_noise(global: &Global, args: EstimateNoiseArgs) -> anyhow::Result<()> {
    if args.inputs.len() < 3 {
        return Err(usage(format!(
            "need flat sequences at 3 or more illumination levels, got {}",
            args.inputs.len()
        )));
    }
    provenance(
        global,
        "estimate-noise",
        &serde_json::json!({ "inputs": args.inputs, "out": args.out }),
    )?;
    let levels = args
        .inputs
        .iter()
        .map(|dir| {
            let seq = io::read_sequence(dir)?;
            measure_level(seq.frames()).with_context(|| format!("measuring {}", dir.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let fit = fit_affine_variance(&levels)?;
    if !global.quiet {
        println!("{:>12} {:>12} {:>10}", "signal", "variance", "samples");
        for l in &fit.levels {
            println!("{:>12.3} {:>12.4} {:>10}", l.signal, l.variance, l.samples);
        }
        println!(
            "a = {:.6e}, b = {:.6}, residual rms = {:.4e}",
            fit.params.a, fit.params.b, fit.residual_rms
        );
    }
    if let Some(out) = &args.out {
        io::write_json(out, &fit)?;
    }
    Ok(())
}

fn ppm_files(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ppm"))
        .collect();
    names.sort();
    Ok(names)
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn metrics(global: &Global, args: MetricsArgs) -> anyhow::Result<()> {
    provenance(
        global,
        "metrics",
        &serde_json::json!({ "ref": args.reference, "test": args.test, "out": args.out }),
    )?;
    let ref_names = ppm_files(&args.reference)?;
    let test_names = ppm_files(&args.test)?;
    if ref_names != test_names {
        bail!(
            "file lists differ: {} has {} images, {} has {}",
            args.reference.display(),
            ref_names.len(),
            args.test.display(),
            test_names.len()
        );
    }
    if ref_names.is_empty() {
        bail!("no .ppm files in {}", args.reference.display());
    }
    let pairs = ref_names
        .iter()
        .map(|name| {
            let a = io::read_ppm(&args.reference.join(name))?;
            let b = io::read_ppm(&args.test.join(name))?;
            Ok(compare(name.clone(), &a, &b)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = MetricReport::from_pairs(pairs);
    println!("{:<24} {:>10} {:>8}", "image", "psnr_db", "ssim");
    for p in &report.pairs {
        println!("{:<24} {:>10} {:>8.5}", p.name, fmt_db(p.psnr), p.ssim);
    }
    println!(
        "{:<24} {:>10} {:>8.5}",
        "mean",
        fmt_db(report.mean_psnr),
        report.mean_ssim
    );
    if let Some(out) = &args.out {
        io::write_json(out, &report)?;
    }
    Ok(())
}

pub fn inspect(_global: &Global, args: InspectArgs) -> anyhow::Result<()> {
    let path: PathBuf = args.input;
    if path.join(io::SEQUENCE_MANIFEST).exists() {
        let (m, seq) = io::load_sequence(&path)?;
        let g = m.geometry;
        println!("sequence {}", path.display());
        println!(
            "  {}x{} {} {}-bit, black {} white {}",
            g.width, g.height, g.cfa_pattern, g.bit_depth, g.black_level, g.white_level
        );
        println!(
            "  {} frames at {} fps, {:.3} ms per frame",
            seq.len(),
            m.sharp_fps,
            m.per_frame_exposure_ms
        );
        if let Some(n) = m.noise {
            println!("  noise a={} b={}", n.a, n.b);
        }
        if let Some(seed) = m.seed {
            println!("  seed {seed}");
        }
        let first = seq.frames()[0].data();
        let mean = first.iter().map(|&v| v as f64).sum::<f64>() / first.len() as f64;
        let max = first.iter().copied().fold(f32::MIN, f32::max);
        println!("  frame 0 mean {mean:.2}, max {max}");
    } else if path.join(io::DATASET_MANIFEST).exists() {
        let m = io::read_dataset_manifest(&path)?;
        println!("dataset {}", path.display());
        println!("  source {}", m.source);
        println!(
            "  space {}, T={} tau={} offset={}, {} pairs",
            m.space,
            m.params.period,
            m.params.exposure,
            m.offset,
            m.pairs.len()
        );
        println!(
            "  isp {}, crf {}",
            m.isp_name.as_deref().unwrap_or("custom"),
            m.isp.crf
        );
        if let Ok(src) = io::read_sequence_manifest(Path::new(&m.source)) {
            println!("  {}", video_params_summary(&m.params, src.sharp_fps)?);
        }
    } else if path.is_file() {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let h = io::parse_pnm_header(&bytes).map_err(|m| anyhow!("{}: {m}", path.display()))?;
        println!(
            "{}: {}x{} {} channel(s), maxval {}, {} data bytes",
            path.display(),
            h.width,
            h.height,
            h.channels,
            h.maxval,
            h.data_len()
        );
    } else {
        bail!(
            "{} is neither a sequence, a dataset nor an image file",
            path.display()
        );
    }
    Ok(())
}
