use rawblur::noise::{
    averaged_noise_variance, inject_noise, noise_variance, InjectionMode, NoiseParams,
};
use rawblur::raw::RawGeometry;
use rawblur::rng::derive_seed;
use rawblur::{average_raw, estimate_noise_params, CfaPattern, RawFrame};

const LEVEL: f32 = 500.0;

fn flat(size: usize, level: f32) -> RawFrame {
    let g = RawGeometry::new(size, size, CfaPattern::Rggb, 14).unwrap();
    RawFrame::filled(g, level).unwrap()
}

fn captures(params: &NoiseParams, n: usize, seed: u64, size: usize, level: f32) -> Vec<RawFrame> {
    let clean = flat(size, level);
    (0..n)
        .map(|i| inject_noise(&clean, params, 1.0, derive_seed(seed, i as u64)).unwrap())
        .collect()
}

fn spatial_variance(frame: &RawFrame) -> (f64, f64) {
    let n = frame.data().len() as f64;
    let mean = frame.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = frame
        .data()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var)
}

#[test]
fn averaging_divides_variance_by_frame_count() {
    let params = NoiseParams::new(0.01, 2.0).unwrap();
    for (k, n) in [8usize, 11, 16, 33].into_iter().enumerate() {
        let frames = captures(&params, n, 1000 + k as u64, 128, LEVEL);
        let (mean, var) = spatial_variance(&average_raw(&frames).unwrap());
        let expected = averaged_noise_variance(LEVEL as f64, &params, n).unwrap();
        assert!(
            (var / expected - 1.0).abs() < 0.1,
            "n={n}: {var} vs {expected}"
        );
        assert!((mean - LEVEL as f64).abs() < 5.0 * (expected / 16384.0).sqrt());
    }
}

#[test]
fn residual_injection_restores_single_capture_variance() {
    let params = NoiseParams::new(0.01, 2.0).unwrap();
    let total = noise_variance(LEVEL as f64, &params).unwrap();
    assert!((total - 7.0).abs() < 1e-12);
    for n in [8usize, 11, 33] {
        let frames = captures(&params, n, 77 + n as u64, 128, LEVEL);
        let blurred = rawblur::blur::synthesize_blur_raw(&frames, Some(&params), 5).unwrap();
        let (_, var) = spatial_variance(&blurred);
        assert!((var / total - 1.0).abs() < 0.1, "n={n}: {var}");

        let full =
            rawblur::blur::synthesize_blur_raw_with(&frames, Some(&params), InjectionMode::Full, 5)
                .unwrap();
        let (_, var_full) = spatial_variance(&full);
        let expected_full = total * (1.0 + 1.0 / n as f64);
        assert!(
            (var_full / expected_full - 1.0).abs() < 0.1,
            "n={n}: {var_full}"
        );
    }
}

#[test]
fn recovers_parameters_from_four_levels() {
    for (seed, a, b) in [(1u64, 0.5, 4.0), (2, 1.0, 50.0), (3, 0.05, 1.0)] {
        let params = NoiseParams::new(a, b).unwrap();
        let levels: Vec<Vec<RawFrame>> = [100.0f32, 500.0, 1000.0, 4000.0]
            .iter()
            .enumerate()
            .map(|(k, &level)| captures(&params, 8, derive_seed(seed, k as u64), 256, level))
            .collect();
        let fit = estimate_noise_params(&levels).unwrap();
        assert!(
            (fit.params.a / a - 1.0).abs() < 0.05,
            "a: {} vs {a}",
            fit.params.a
        );
        assert!(
            (fit.params.b / b - 1.0).abs() < 0.15,
            "b: {} vs {b}",
            fit.params.b
        );
        assert_eq!(fit.levels.len(), 4);
    }
}

#[test]
fn noise_free_flats_fit_zero() {
    let params = NoiseParams::default();
    let levels: Vec<Vec<RawFrame>> = [100.0f32, 800.0, 2000.0]
        .iter()
        .map(|&level| captures(&params, 4, 0, 64, level))
        .collect();
    let fit = estimate_noise_params(&levels).unwrap();
    assert_eq!((fit.params.a, fit.params.b), (0.0, 0.0));
}
