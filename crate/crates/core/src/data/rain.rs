use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClipRole, VideoClip};
use crate::engine::Tensor;
use crate::error::{Error, Result};

/// Additive rain-streak model.
///
/// Each streak is a straight bright segment with its own length, angle
/// from vertical and intensity. The whole set translates by `velocity`
/// every frame, wrapping around the frame edges, and the rasterized layer
/// is smoothed by a Gaussian of width `blur_sigma` before being added to
/// every color channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RainParams {
    pub streak_count: usize,
    /// Pixels.
    pub length: (f64, f64),
    /// Degrees from vertical, positive leaning right.
    pub angle_deg: (f64, f64),
    pub intensity: (f64, f64),
    /// `[x, y]` pixels per frame.
    pub velocity: [f64; 2],
    pub blur_sigma: f64,
    pub seed: u64,
}

impl Default for RainParams {
    fn default() -> Self {
        Self {
            streak_count: 24,
            length: (6.0, 14.0),
            angle_deg: (5.0, 15.0),
            intensity: (0.3, 0.7),
            velocity: [1.5, 5.0],
            blur_sigma: 0.6,
            seed: 0,
        }
    }
}

/// Streak counts of the named presets are per 64×64 pixels.
const REFERENCE_AREA: f64 = 64.0 * 64.0;

impl RainParams {
    pub const PRESETS: [&'static str; 4] = ["none", "light", "default", "heavy"];

    /// Named preset with the streak count scaled to a `height × width` frame.
    pub fn preset(name: &str, height: usize, width: usize) -> Result<Self> {
        let base = Self::default();
        let (count, intensity) = match name {
            "none" => (0.0, base.intensity),
            "light" => (12.0, (0.2, 0.5)),
            "default" => (24.0, base.intensity),
            "heavy" => (48.0, (0.4, 0.8)),
            other => return Err(Error::Config(format!("unknown rain preset `{other}`"))),
        };
        let scale = (height * width) as f64 / REFERENCE_AREA;
        Ok(Self {
            streak_count: (count * scale).round() as usize,
            intensity,
            ..base
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("length", self.length),
            ("angle_deg", self.angle_deg),
            ("intensity", self.intensity),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("rain {name} range ({lo}, {hi}) is empty")));
            }
        }
        if self.length.0 < 0.0 {
            return Err(Error::Config("rain streak length must be ≥ 0".into()));
        }
        if !(self.intensity.0 > 0.0 && self.intensity.1 <= 1.0) {
            return Err(Error::Config(format!(
                "rain intensity {:?} must lie in (0, 1]",
                self.intensity
            )));
        }
        if !(self.blur_sigma >= 0.0 && self.velocity.iter().all(|v| v.is_finite())) {
            return Err(Error::Config("rain blur must be ≥ 0 and velocity finite".into()));
        }
        Ok(())
    }
}

struct Streak {
    origin: [f64; 2],
    direction: [f64; 2],
    length: f64,
    intensity: f64,
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Rasterized streak layers, one `height × width` plane per frame.
pub fn streak_layer(rain: &RainParams, frames: usize, height: usize, width: usize) -> Result<Vec<Vec<f32>>> {
    rain.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rain.seed);
    let streaks: Vec<Streak> = (0..rain.streak_count)
        .map(|_| {
            let angle = sample(&mut rng, rain.angle_deg).to_radians();
            Streak {
                origin: [
                    rng.random_range(0.0..width as f64),
                    rng.random_range(0.0..height as f64),
                ],
                direction: [angle.sin(), angle.cos()],
                length: sample(&mut rng, rain.length),
                intensity: sample(&mut rng, rain.intensity),
            }
        })
        .collect();
    let kernel = gaussian(rain.blur_sigma);
    Ok((0..frames)
        .map(|t| {
            let mut layer = vec![0.0f64; height * width];
            for s in &streaks {
                let x0 = s.origin[0] + rain.velocity[0] * t as f64;
                let y0 = s.origin[1] + rain.velocity[1] * t as f64;
                let steps = (s.length * 4.0).ceil() as usize;
                for k in 0..=steps {
                    let u = s.length * k as f64 / steps.max(1) as f64;
                    let x = (x0 + s.direction[0] * u).floor().rem_euclid(width as f64) as usize;
                    let y = (y0 + s.direction[1] * u).floor().rem_euclid(height as f64) as usize;
                    let p = &mut layer[y * width + x];
                    *p = p.max(s.intensity);
                }
            }
            if kernel.len() > 1 {
                layer = blur_wrapped(&layer, height, width, &kernel);
            }
            layer.into_iter().map(|v| v as f32).collect()
        })
        .collect())
}

fn gaussian(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn blur_wrapped(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * plane[y * w + (x as isize + j as isize - r).rem_euclid(w as isize) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * rows[(y as isize + j as isize - r).rem_euclid(h as isize) as usize * w + x])
                .sum();
        }
    }
    out
}

/// `rainy_t = clamp(clean_t + layer_t, 0, 1)`.
pub fn add_rain(clip: &VideoClip, rain: &RainParams) -> Result<VideoClip> {
    let (h, w) = (clip.height(), clip.width());
    let layers = streak_layer(rain, clip.len(), h, w)?;
    let frames = clip
        .frames()
        .iter()
        .zip(&layers)
        .map(|(frame, layer)| {
            let data = frame
                .data()
                .chunks_exact(h * w)
                .flat_map(|plane| plane.iter().zip(layer).map(|(&c, &r)| (c + r).clamp(0.0, 1.0)))
                .collect();
            Tensor::from_vec(frame.shape(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoClip::new(frames, ClipRole::Rainy)?.with_fps(clip.fps()))
}
