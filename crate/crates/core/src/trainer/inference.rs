use super::Checkpoint;
use crate::data::{reflect, ClipRole, VideoClip};
use crate::engine::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::model::Estinet;
use crate::sicm::DOWNSCALE;

/// Pads `[3,H,W]` at the bottom and right by reflection up to `[3,ph,pw]`.
fn pad_reflect(frame: &Tensor<f32>, ph: usize, pw: usize) -> Result<Tensor<f32>> {
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let d = frame.data();
    let mut out = Vec::with_capacity(3 * ph * pw);
    for c in 0..3 {
        for y in 0..ph {
            let sy = reflect(y as isize, h);
            for x in 0..pw {
                out.push(d[c * h * w + sy * w + reflect(x as isize, w)]);
            }
        }
    }
    Tensor::from_vec([1, 3, ph, pw], out)
}

/// Top-left `[3,h,w]` of a `[1,3,H,W]` tensor.
fn crop_top_left(t: &Tensor<f32>, h: usize, w: usize) -> Result<Tensor<f32>> {
    let (ph, pw) = (t.shape()[2], t.shape()[3]);
    let d = t.data();
    let mut out = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        for y in 0..h {
            let row = c * ph * pw + y * pw;
            out.extend_from_slice(&d[row..row + w]);
        }
    }
    Tensor::from_vec([3, h, w], out)
}

/// Derains every frame of a clip.
///
/// Frames are padded by reflection to a multiple of 16 and cropped back
/// afterwards. Every frame is the center of one window whose out-of-range
/// neighbours are reflected at the clip ends; spatial features are computed
/// once per frame and shared by all windows containing it.
pub fn derain_video(checkpoint: &Checkpoint, rainy: &VideoClip) -> Result<VideoClip> {
    if rainy.len() < 2 {
        return Err(Error::Contract(format!(
            "deraining needs at least 2 frames, got {}",
            rainy.len()
        )));
    }
    let model = Estinet::new(checkpoint.model)?;
    let store = &checkpoint.params;
    let (h, w) = (rainy.height(), rainy.width());
    let (ph, pw) = (h.div_ceil(DOWNSCALE) * DOWNSCALE, w.div_ceil(DOWNSCALE) * DOWNSCALE);
    let padded = rainy
        .frames()
        .iter()
        .map(|f| pad_reflect(f, ph, pw))
        .collect::<Result<Vec<_>>>()?;
    let features = padded
        .iter()
        .map(|f| {
            let mut g = Graph::new();
            let x = g.constant(f.clone());
            let y = model.sicm().forward(&mut g, store, x)?;
            Ok(g.value(y).clone())
        })
        .collect::<Result<Vec<_>>>()?;

    let (n, offset) = (model.window(), model.center());
    let len = rainy.len();
    let mut output = Vec::with_capacity(len);
    for center in 0..len {
        let indices: Vec<usize> = (0..n)
            .map(|j| reflect(center as isize - offset as isize + j as isize, len))
            .collect();
        let mut g = Graph::new();
        let feats: Vec<_> = indices.iter().map(|&i| g.constant(features[i].clone())).collect();
        let frames: Vec<_> = indices.iter().map(|&i| g.constant(padded[i].clone())).collect();
        let (coarse, _) = model.coarse_from_features(&mut g, store, &feats)?;
        let refined = model.refine(&mut g, store, &coarse, &frames)?;
        output.push(crop_top_left(g.value(refined), h, w)?);
    }
    Ok(VideoClip::new(output, ClipRole::Derained)?.with_fps(rainy.fps()))
}
