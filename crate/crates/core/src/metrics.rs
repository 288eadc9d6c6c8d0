//! Image quality metrics on frames with values in `[0, 1]`.
//!
//! Both metrics are computed on ITU-R BT.601 luma. PSNR uses peak 1 and
//! reports [`PSNR_CAP`] for identical frames. SSIM uses an 11×11 Gaussian
//! window (σ = 1.5), `K1 = 0.01`, `K2 = 0.03`, `L = 1`, and averages the
//! map over all positions where the window fits entirely.

use std::fmt::Write as _;

use crate::engine::{Element, Tensor};
use crate::error::{shape_err, Error, Result};

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Luma plane of a `[3,H,W]` or `[1,H,W]` frame, row-major, with its size.
#[derive(Clone, Debug, PartialEq)]
pub struct Luma {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Luma {
    pub fn from_frame<E: Element>(frame: &Tensor<E>) -> Result<Self> {
        let s = frame.shape();
        if s.len() != 3 || !(s[0] == 3 || s[0] == 1) {
            return Err(shape_err!("metrics expect [3,H,W] or [1,H,W] frames, got {:?}", s));
        }
        let (c, height, width) = (s[0], s[1], s[2]);
        let d = frame.data();
        if let Some(v) = d.iter().map(|v| v.as_f64()).find(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range(format!("pixel value {v} outside [0, 1]")));
        }
        let plane = height * width;
        let data = if c == 1 {
            d.iter().map(|v| v.as_f64()).collect()
        } else {
            (0..plane)
                .map(|i| 0.299 * d[i].as_f64() + 0.587 * d[plane + i].as_f64() + 0.114 * d[2 * plane + i].as_f64())
                .collect()
        };
        Ok(Self { height, width, data })
    }
}

fn luma_pair<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<(Luma, Luma)> {
    a.expect_same_shape(b)?;
    Ok((Luma::from_frame(a)?, Luma::from_frame(b)?))
}

/// Peak signal-to-noise ratio in dB.
pub fn psnr<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<f64> {
    let (a, b) = luma_pair(a, b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - mid;
        *t = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Valid separable filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (j, t) in taps.iter().enumerate() {
            let src = &rows[(y + j) * ow..(y + j + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += t * v;
            }
        }
    }
    out
}

/// Mean structural similarity.
pub fn ssim<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<f64> {
    let (a, b) = luma_pair(a, b)?;
    let (h, w) = (a.height, a.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Contract(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {h}×{w}"
        )));
    }
    let taps = gaussian_taps();
    let product = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(&a.data, h, w, &taps);
    let mu_b = filter_valid(&b.data, h, w, &taps);
    let aa = filter_valid(&product(&a.data, &a.data), h, w, &taps);
    let bb = filter_valid(&product(&b.data, &b.data), h, w, &taps);
    let ab = filter_valid(&product(&a.data, &b.data), h, w, &taps);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = aa[i] - ma * ma;
            let var_b = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-frame metrics of a predicted sequence against a reference.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
}

impl MetricReport {
    pub fn evaluate<E: Element>(pred: &[Tensor<E>], reference: &[Tensor<E>]) -> Result<Self> {
        if pred.len() != reference.len() {
            return Err(Error::Contract(format!(
                "{} predicted frames against {} reference frames",
                pred.len(),
                reference.len()
            )));
        }
        let frames = pred
            .iter()
            .zip(reference)
            .enumerate()
            .map(|(frame_index, (p, r))| {
                Ok(FrameMetrics {
                    frame_index,
                    psnr_db: psnr(p, r)?,
                    ssim: ssim(p, r)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { frames })
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.psnr_db))
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.ssim))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "frames={} mean_psnr_db={:.6} mean_ssim={:.6}",
            self.frames.len(),
            self.mean_psnr(),
            self.mean_ssim()
        )
    }

    /// `frame_index,psnr_db,ssim` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_index,psnr_db,ssim\n");
        for f in &self.frames {
            let _ = writeln!(out, "{},{:.6},{:.6}", f.frame_index, f.psnr_db, f.ssim);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>6}  {:>10}  {:>8}\n", "frame", "PSNR (dB)", "SSIM");
        for f in &self.frames {
            let _ = writeln!(out, "{:>6}  {:>10.3}  {:>8.4}", f.frame_index, f.psnr_db, f.ssim);
        }
        let _ = writeln!(
            out,
            "{:>6}  {:>10.3}  {:>8.4}",
            "mean",
            self.mean_psnr(),
            self.mean_ssim()
        );
        out
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sum::<f64>() / n as f64
}
