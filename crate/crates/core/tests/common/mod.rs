#![allow(dead_code)]

use rawblur::noise::NoiseParams;
use rawblur::scene::{Shape, Sprite, Trajectory};
use rawblur::{gen_sequence, SceneConfig, SensorModel, SharpRawSequence};

pub fn moving_edge_scene(width: usize, height: usize, color: [f64; 3], speed: f64) -> SceneConfig {
    SceneConfig {
        width,
        height,
        background: [color[0] * 0.1, color[1] * 0.1, color[2] * 0.1],
        sprites: vec![Sprite {
            shape: Shape::Rectangle,
            color,
            size: width as f64 / 3.0,
            height: Some(height as f64 * 2.0),
            trajectory: Trajectory {
                x0: width as f64 / 4.0,
                y0: height as f64 / 2.0,
                vx: speed,
                vy: 0.0,
            },
        }],
        texture: None,
    }
}

pub fn static_scene(width: usize, height: usize) -> SceneConfig {
    SceneConfig {
        width,
        height,
        background: [0.4, 0.5, 0.3],
        sprites: vec![],
        texture: Some(rawblur::scene::Texture::Checker {
            cell: 6,
            contrast: 0.5,
        }),
    }
}

pub fn sensor(noise: NoiseParams) -> SensorModel {
    SensorModel::new(3000.0, noise, 12)
}

pub fn sequence(scene: &SceneConfig, noise: NoiseParams, n: usize, seed: u64) -> SharpRawSequence {
    gen_sequence(scene, &sensor(noise), 940.0, n, seed).unwrap()
}
