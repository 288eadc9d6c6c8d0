use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::sicm::DOWNSCALE;

/// Clean and rainy frames of one window.
pub type FramePair = (Vec<Tensor<f32>>, Vec<Tensor<f32>>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FlipMode {
    /// Flip with probability one half.
    #[default]
    Random,
    Never,
    Always,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AugmentConfig {
    /// Side of the square crop; `None` keeps whole frames.
    pub crop: Option<usize>,
    pub flip: FlipMode,
}

/// `size × size` patch of a `[C,H,W]` frame with its top-left corner at `(top, left)`.
pub fn crop_frame(frame: &Tensor<f32>, top: usize, left: usize, size: usize) -> Result<Tensor<f32>> {
    let s = frame.shape();
    if s.len() != 3 || top + size > s[1] || left + size > s[2] {
        return Err(shape_err!(
            "crop {}×{} at ({}, {}) outside frame {:?}",
            size,
            size,
            top,
            left,
            s
        ));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let d = frame.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in top..top + size {
            let row = ch * h * w + y * w;
            out.extend_from_slice(&d[row + left..row + left + size]);
        }
    }
    Tensor::from_vec([c, size, size], out)
}

/// Mirrors a `[C,H,W]` frame left to right.
pub fn flip_horizontal(frame: &Tensor<f32>) -> Tensor<f32> {
    let w = *frame.shape().last().expect("frames have a width axis");
    let mut out = frame.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    out
}

/// Applies one random crop offset and one flip decision to every frame of
/// both windows.
pub fn augment(clean: &[Tensor<f32>], rainy: &[Tensor<f32>], config: AugmentConfig, seed: u64) -> Result<FramePair> {
    let Some(first) = clean.first() else {
        return Err(Error::Contract("augment needs at least one frame".into()));
    };
    let shape = first.shape().to_vec();
    if clean.len() != rainy.len() || clean.iter().chain(rainy).any(|f| f.shape() != shape.as_slice()) {
        return Err(shape_err!("clean and rainy windows must hold equally shaped frames"));
    }
    let (h, w) = (shape[1], shape[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let crop = match config.crop {
        Some(size) => {
            if size == 0 || size % DOWNSCALE != 0 || size > h || size > w {
                return Err(Error::Config(format!(
                    "crop {size} must be a positive multiple of {DOWNSCALE} no larger than {h}×{w}"
                )));
            }
            Some((rng.random_range(0..=h - size), rng.random_range(0..=w - size), size))
        }
        None => None,
    };
    let flip = match config.flip {
        FlipMode::Random => rng.random_bool(0.5),
        FlipMode::Never => false,
        FlipMode::Always => true,
    };
    let transform = |f: &Tensor<f32>| -> Result<Tensor<f32>> {
        let f = match crop {
            Some((top, left, size)) => crop_frame(f, top, left, size)?,
            None => f.clone(),
        };
        Ok(if flip { flip_horizontal(&f) } else { f })
    };
    let clean = clean.iter().map(transform).collect::<Result<_>>()?;
    let rainy = rainy.iter().map(transform).collect::<Result<_>>()?;
    Ok((clean, rainy))
}
