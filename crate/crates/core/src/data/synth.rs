use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{add_rain, ClipRole, RainParams, VideoClip};
use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::sicm::DOWNSCALE;

struct Wave {
    direction: f64,
    cycles: f64,
    phase: f64,
    drift: f64,
    color: [f64; 3],
}

struct Shape {
    disc: bool,
    position: [f64; 2],
    velocity: [f64; 2],
    radius: f64,
    color: [f64; 3],
}

/// Deterministic moving-texture clip: three drifting sinusoidal gradients
/// under five discs and squares that move with constant velocity and wrap
/// around the frame edges.
pub fn synth_clean_clip(seed: u64, n_frames: usize, height: usize, width: usize) -> Result<VideoClip> {
    if height == 0 || width == 0 || !height.is_multiple_of(DOWNSCALE) || !width.is_multiple_of(DOWNSCALE) {
        return Err(shape_err!(
            "clip size {}×{} must be a positive multiple of {}",
            height,
            width,
            DOWNSCALE
        ));
    }
    if n_frames == 0 {
        return Err(Error::Contract("a clip needs at least one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.5));
    let waves: Vec<Wave> = (0..3)
        .map(|_| Wave {
            direction: rng.random_range(0.0..TAU),
            cycles: rng.random_range(0.5..2.5),
            phase: rng.random_range(0.0..TAU),
            drift: rng.random_range(0.05..0.2),
            color: std::array::from_fn(|_| rng.random_range(0.0..0.2)),
        })
        .collect();
    let size = height.min(width) as f64;
    let shapes: Vec<Shape> = (0..5)
        .map(|_| Shape {
            disc: rng.random_bool(0.5),
            position: [
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
            ],
            velocity: [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
            radius: rng.random_range(size / 16.0..size / 5.0),
            color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        })
        .collect();

    let plane = height * width;
    let frames = (0..n_frames)
        .map(|t| {
            let t = t as f64;
            let mut frame = vec![0.0f32; 3 * plane];
            for y in 0..height {
                for x in 0..width {
                    let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
                    let mut rgb = base;
                    for w in &waves {
                        let s =
                            (TAU * w.cycles * (u * w.direction.cos() + v * w.direction.sin()) + w.phase + w.drift * t)
                                .sin();
                        for (v, c) in rgb.iter_mut().zip(w.color) {
                            *v += c * s;
                        }
                    }
                    for s in &shapes {
                        let cx = (s.position[0] + s.velocity[0] * t).rem_euclid(width as f64);
                        let cy = (s.position[1] + s.velocity[1] * t).rem_euclid(height as f64);
                        let dx = wrapped_distance(x as f64, cx, width as f64);
                        let dy = wrapped_distance(y as f64, cy, height as f64);
                        let d = if s.disc { dx.hypot(dy) } else { dx.max(dy) };
                        let alpha = (s.radius - d + 0.5).clamp(0.0, 1.0);
                        for (v, c) in rgb.iter_mut().zip(s.color) {
                            *v = (1.0 - alpha) * *v + alpha * c;
                        }
                    }
                    for c in 0..3 {
                        frame[c * plane + y * width + x] = rgb[c].clamp(0.0, 1.0) as f32;
                    }
                }
            }
            Tensor::from_vec([3, height, width], frame)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(frames, ClipRole::Clean)
}

fn wrapped_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).abs();
    d.min(period - d)
}

/// A clean clip and its rainy counterpart.
pub fn synth_pair(
    seed: u64,
    n_frames: usize,
    height: usize,
    width: usize,
    rain: &RainParams,
) -> Result<(VideoClip, VideoClip)> {
    let clean = synth_clean_clip(seed, n_frames, height, width)?;
    let rainy = add_rain(&clean, rain)?;
    Ok((clean, rainy))
}
