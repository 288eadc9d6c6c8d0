//! Convolution kernels.
//!
//! Every convolution is lowered to a 3D cross-correlation over
//! `[N, C, T, H, W]` volumes; 2D convolution is the `T = 1` case. The fast
//! path unfolds each batch item into a `[C·kt·kh·kw, To·Ho·Wo]` column
//! matrix and calls GEMM. [`reference`](mod@reference) holds direct-loop versions used as
//! the oracle for the fast path.

use super::{Element, Tensor};
use crate::error::{shape_err, Result};

/// Fully resolved convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    /// Validates a 5-d input `[N,C,T,H,W]` against a kernel `[O,C,kt,kh,kw]`.
    pub fn new(input: &[usize], kernel: &[usize], stride: [usize; 3], padding: [usize; 3]) -> Result<Self> {
        if input.len() != 5 || kernel.len() != 5 {
            return Err(shape_err!(
                "conv expects rank-5 input and kernel, got {:?} and {:?}",
                input,
                kernel
            ));
        }
        if input[1] != kernel[1] {
            return Err(shape_err!(
                "input has {} channels but kernel {:?} expects {}",
                input[1],
                kernel,
                kernel[1]
            ));
        }
        let mut output = [0; 3];
        for axis in 0..3 {
            let (extent, k, s, p) = (input[2 + axis], kernel[2 + axis], stride[axis], padding[axis]);
            if s == 0 {
                return Err(shape_err!("stride must be positive"));
            }
            let padded = extent + 2 * p;
            if k > padded {
                return Err(shape_err!(
                    "kernel extent {} exceeds padded input extent {} on axis {}",
                    k,
                    padded,
                    axis
                ));
            }
            if (padded - k) % s != 0 {
                return Err(shape_err!(
                    "non-integral output extent: ({} + 2·{} − {}) / {} on axis {}",
                    extent,
                    p,
                    k,
                    s,
                    axis
                ));
            }
            output[axis] = (padded - k) / s + 1;
        }
        Ok(Self {
            batch: input[0],
            in_channels: input[1],
            out_channels: kernel[0],
            input: [input[2], input[3], input[4]],
            kernel: [kernel[2], kernel[3], kernel[4]],
            stride,
            padding,
            output,
        })
    }

    /// Rows of the column matrix: `C·kt·kh·kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Columns of the column matrix: `To·Ho·Wo`.
    pub fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    pub fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    /// Multiply-adds counted as two FLOPs, bias ignored.
    pub fn flops(&self) -> u64 {
        2 * (self.batch * self.out_channels * self.patch_len() * self.out_positions()) as u64
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.padding == [0, 0, 0]
    }
}

/// Unfolds one batch item `[C, T, H, W]` into `cols[C·kt·kh·kw][To·Ho·Wo]`.
fn vol2col<E: Element>(g: &ConvGeom, x: &[E], cols: &mut [E]) {
    let [ti, hi, wi] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let [to, ho, wo] = g.output;
    let p = g.out_positions();
    let mut row = 0;
    for c in 0..g.in_channels {
        let xc = &x[c * ti * hi * wi..(c + 1) * ti * hi * wi];
        for dt in 0..kt {
            for dy in 0..kh {
                for dx in 0..kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for ot in 0..to {
                        let t = (ot * st + dt) as isize - pt as isize;
                        for oy in 0..ho {
                            let y = (oy * sh + dy) as isize - ph as isize;
                            let line = &mut dst[idx..idx + wo];
                            idx += wo;
                            if t < 0 || t >= ti as isize || y < 0 || y >= hi as isize {
                                line.fill(E::zero());
                                continue;
                            }
                            let src = &xc[(t as usize * hi + y as usize) * wi..][..wi];
                            fill_line(line, src, dx, sw, pw);
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `line[ox] = src[ox·stride + dx − pad]`, zero outside `src`.
#[inline]
fn fill_line<E: Element>(line: &mut [E], src: &[E], dx: usize, stride: usize, pad: usize) {
    let wi = src.len() as isize;
    if stride == 1 {
        let offset = dx as isize - pad as isize;
        let lo = (-offset).clamp(0, line.len() as isize) as usize;
        let hi = (wi - offset).clamp(lo as isize, line.len() as isize) as usize;
        line[..lo].fill(E::zero());
        line[hi..].fill(E::zero());
        if hi > lo {
            let start = (lo as isize + offset) as usize;
            line[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
        }
    } else {
        for (ox, v) in line.iter_mut().enumerate() {
            let x = (ox * stride + dx) as isize - pad as isize;
            *v = if x >= 0 && x < wi { src[x as usize] } else { E::zero() };
        }
    }
}

/// Adjoint of [`vol2col`]: accumulates `cols` back into `dx`.
fn col2vol<E: Element>(g: &ConvGeom, cols: &[E], dx: &mut [E]) {
    let [ti, hi, wi] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let [to, ho, wo] = g.output;
    let p = g.out_positions();
    let mut row = 0;
    for c in 0..g.in_channels {
        let xc = &mut dx[c * ti * hi * wi..(c + 1) * ti * hi * wi];
        for dt in 0..kt {
            for dy in 0..kh {
                for kx in 0..kw {
                    let src = &cols[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for ot in 0..to {
                        let t = (ot * st + dt) as isize - pt as isize;
                        for oy in 0..ho {
                            let y = (oy * sh + dy) as isize - ph as isize;
                            let line = &src[idx..idx + wo];
                            idx += wo;
                            if t < 0 || t >= ti as isize || y < 0 || y >= hi as isize {
                                continue;
                            }
                            let dst = &mut xc[(t as usize * hi + y as usize) * wi..][..wi];
                            for (ox, &v) in line.iter().enumerate() {
                                let x = (ox * sw + kx) as isize - pw as isize;
                                if x >= 0 && x < wi as isize {
                                    dst[x as usize] = dst[x as usize] + v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Forward cross-correlation on `[N,C,T,H,W]`; returns `[N,O,To,Ho,Wo]`.
pub fn conv_forward<E: Element>(
    g: &ConvGeom,
    input: &Tensor<E>,
    kernel: &Tensor<E>,
    bias: Option<&Tensor<E>>,
) -> Result<Tensor<E>> {
    if let Some(b) = bias {
        if b.shape() != [g.out_channels] {
            return Err(shape_err!(
                "bias shape {:?} does not match {} output channels",
                b.shape(),
                g.out_channels
            ));
        }
    }
    let (k, p, o) = (g.patch_len(), g.out_positions(), g.out_channels);
    let in_item = g.in_channels * g.in_volume();
    let mut out = vec![E::zero(); g.batch * o * p];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![E::zero(); k * p]
    };
    let w = kernel.data();
    for n in 0..g.batch {
        let x = &input.data()[n * in_item..(n + 1) * in_item];
        let cols_ref: &[E] = if g.is_pointwise() {
            x
        } else {
            vol2col(g, x, &mut cols);
            &cols
        };
        let dst = &mut out[n * o * p..(n + 1) * o * p];
        if let Some(b) = bias {
            for (row, &bv) in dst.chunks_exact_mut(p).zip(b.data()) {
                row.fill(bv);
            }
        }
        let beta = if bias.is_some() { E::one() } else { E::zero() };
        E::gemm(
            o,
            k,
            p,
            E::one(),
            w,
            (k as isize, 1),
            cols_ref,
            (p as isize, 1),
            beta,
            dst,
            (p as isize, 1),
        );
    }
    let [to, ho, wo] = g.output;
    Tensor::from_vec([g.batch, o, to, ho, wo], out)
}

/// Gradients of a convolution with respect to its operands.
pub struct ConvGrads<E> {
    pub input: Option<Tensor<E>>,
    pub kernel: Option<Tensor<E>>,
    pub bias: Option<Tensor<E>>,
}

pub fn conv_backward<E: Element>(
    g: &ConvGeom,
    input: &Tensor<E>,
    kernel: &Tensor<E>,
    grad_out: &Tensor<E>,
    want: [bool; 3],
) -> Result<ConvGrads<E>> {
    let (k, p, o) = (g.patch_len(), g.out_positions(), g.out_channels);
    let in_item = g.in_channels * g.in_volume();
    let [want_input, want_kernel, want_bias] = want;
    let mut dx = want_input.then(|| vec![E::zero(); g.batch * in_item]);
    let mut dw = want_kernel.then(|| vec![E::zero(); o * k]);
    let mut db = want_bias.then(|| vec![E::zero(); o]);
    let pointwise = g.is_pointwise();
    let mut cols = if want_kernel && !pointwise {
        vec![E::zero(); k * p]
    } else {
        Vec::new()
    };
    let mut dcols = if want_input && !pointwise {
        vec![E::zero(); k * p]
    } else {
        Vec::new()
    };
    let w = kernel.data();
    for n in 0..g.batch {
        let gout = &grad_out.data()[n * o * p..(n + 1) * o * p];
        if let Some(db) = db.as_mut() {
            for (acc, row) in db.iter_mut().zip(gout.chunks_exact(p)) {
                *acc = *acc + row.iter().copied().sum::<E>();
            }
        }
        let x = &input.data()[n * in_item..(n + 1) * in_item];
        if let Some(dw) = dw.as_mut() {
            let cols_ref: &[E] = if pointwise {
                x
            } else {
                vol2col(g, x, &mut cols);
                &cols
            };
            // dW[O,K] += gout[O,P] · colsᵀ[P,K]
            E::gemm(
                o,
                p,
                k,
                E::one(),
                gout,
                (p as isize, 1),
                cols_ref,
                (1, p as isize),
                E::one(),
                dw,
                (k as isize, 1),
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dx_item = &mut dx[n * in_item..(n + 1) * in_item];
            // dcols[K,P] = Wᵀ[K,O] · gout[O,P]
            if pointwise {
                E::gemm(
                    k,
                    o,
                    p,
                    E::one(),
                    w,
                    (1, k as isize),
                    gout,
                    (p as isize, 1),
                    E::zero(),
                    dx_item,
                    (p as isize, 1),
                );
            } else {
                E::gemm(
                    k,
                    o,
                    p,
                    E::one(),
                    w,
                    (1, k as isize),
                    gout,
                    (p as isize, 1),
                    E::zero(),
                    &mut dcols,
                    (p as isize, 1),
                );
                col2vol(g, &dcols, dx_item);
            }
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_vec(input.shape(), d)).transpose()?,
        kernel: dw.map(|d| Tensor::from_vec(kernel.shape(), d)).transpose()?,
        bias: db.map(|d| Tensor::from_vec([o], d)).transpose()?,
    })
}

/// Direct-loop convolutions. Slow; they exist to check the GEMM path.
pub mod reference {
    use super::*;

    fn in_bounds(v: isize, extent: usize) -> Option<usize> {
        (v >= 0 && (v as usize) < extent).then_some(v as usize)
    }

    pub fn conv_forward<E: Element>(
        g: &ConvGeom,
        input: &Tensor<E>,
        kernel: &Tensor<E>,
        bias: Option<&Tensor<E>>,
    ) -> Tensor<E> {
        let [ti, hi, wi] = g.input;
        let [kt, kh, kw] = g.kernel;
        let [to, ho, wo] = g.output;
        let (x, w) = (input.data(), kernel.data());
        let mut out = Vec::with_capacity(g.batch * g.out_channels * to * ho * wo);
        for n in 0..g.batch {
            for oc in 0..g.out_channels {
                for ot in 0..to {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = bias.map_or(E::zero(), |b| b.data()[oc]);
                            for c in 0..g.in_channels {
                                for dt in 0..kt {
                                    let t = (ot * g.stride[0] + dt) as isize - g.padding[0] as isize;
                                    let Some(t) = in_bounds(t, ti) else { continue };
                                    for dy in 0..kh {
                                        let y = (oy * g.stride[1] + dy) as isize - g.padding[1] as isize;
                                        let Some(y) = in_bounds(y, hi) else { continue };
                                        for dx in 0..kw {
                                            let xx = (ox * g.stride[2] + dx) as isize - g.padding[2] as isize;
                                            let Some(xx) = in_bounds(xx, wi) else { continue };
                                            let xv = x[(((n * g.in_channels + c) * ti + t) * hi + y) * wi + xx];
                                            let wv = w[(((oc * g.in_channels + c) * kt + dt) * kh + dy) * kw + dx];
                                            acc = acc + xv * wv;
                                        }
                                    }
                                }
                            }
                            out.push(acc);
                        }
                    }
                }
            }
        }
        Tensor::from_vec([g.batch, g.out_channels, to, ho, wo], out).expect("reference conv shape")
    }
}
