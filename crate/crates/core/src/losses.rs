//! Training objectives. All three are mean squared errors, averaged over
//! pixels, channels, frames and batch items.

use crate::engine::{Element, Graph, Tensor, Var};
use crate::error::{shape_err, Error, Result};

/// Weight of the refinement loss in the combined objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and ≥ 0, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// `sti + alpha · est` on plain numbers.
    pub fn combine(&self, sti: f64, est: f64) -> f64 {
        sti + self.alpha * est
    }
}

/// Loss on the coarse frames of a window.
pub fn loss_sti<E: Element>(g: &mut Graph<E>, clean: &[Var], coarse: &[Var]) -> Result<Var> {
    if clean.len() != coarse.len() || clean.is_empty() {
        return Err(shape_err!(
            "loss over {} clean and {} coarse frames",
            clean.len(),
            coarse.len()
        ));
    }
    let mut total = g.mse(coarse[0], clean[0])?;
    for (&c, &p) in clean.iter().zip(coarse).skip(1) {
        let term = g.mse(p, c)?;
        total = g.add(total, term)?;
    }
    if clean.len() == 1 {
        Ok(total)
    } else {
        g.scale(total, 1.0 / clean.len() as f64)
    }
}

/// Loss on the refined center frame.
pub fn loss_est<E: Element>(g: &mut Graph<E>, clean_center: Var, refined: Var) -> Result<Var> {
    g.mse(refined, clean_center)
}

/// `sti + alpha · est`.
pub fn loss_final<E: Element>(g: &mut Graph<E>, sti: Var, est: Var, weights: LossWeights) -> Result<Var> {
    if weights.alpha == 1.0 {
        return g.add(sti, est);
    }
    let weighted = g.scale(est, weights.alpha)?;
    g.add(sti, weighted)
}

/// Mean squared difference of two tensors, accumulated in `f64`.
pub fn mse<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<f64> {
    a.expect_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.numel() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).item().unwrap()
    }

    #[test]
    fn two_pixel_frame() {
        let mut g = Graph::<f64>::new();
        let clean = g.constant(Tensor::from_vec([1, 1, 1, 2], vec![0.0, 0.0]).unwrap());
        let coarse = g.constant(Tensor::from_vec([1, 1, 1, 2], vec![1.0, 3.0]).unwrap());
        let l = loss_sti(&mut g, &[clean], &[coarse]).unwrap();
        assert_eq!(value(&g, l), 5.0);
    }

    #[test]
    fn sequence_loss_is_mean_of_frame_losses() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::zeros([1, 1, 2, 2]));
        let a = g.constant(Tensor::full([1, 1, 2, 2], 1.0));
        let b = g.constant(Tensor::full([1, 1, 2, 2], 3.0));
        let l = loss_sti(&mut g, &[z, z], &[a, b]).unwrap();
        assert_eq!(value(&g, l), 5.0);
    }

    #[test]
    fn scaling_inputs_scales_loss_quadratically() {
        let mut g = Graph::<f64>::new();
        let x = Tensor::from_fn([1, 3, 4, 4], |i| (i as f64 * 0.7).sin());
        let y = Tensor::from_fn([1, 3, 4, 4], |i| (i as f64 * 0.3).cos());
        let (vx, vy) = (g.constant(x.clone()), g.constant(y.clone()));
        let base = loss_sti(&mut g, &[vx], &[vy]).unwrap();
        let (sx, sy) = (g.constant(x.map(|v| 3.0 * v)), g.constant(y.map(|v| 3.0 * v)));
        let scaled = loss_sti(&mut g, &[sx], &[sy]).unwrap();
        assert!((value(&g, scaled) - 9.0 * value(&g, base)).abs() < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::full([1, 3, 2, 2], 0.25));
        let b = g.constant(Tensor::full([1, 3, 2, 2], 0.75));
        let l = loss_est(&mut g, a, b).unwrap();
        assert_eq!(value(&g, l), 0.25);
    }

    #[test]
    fn combined_loss() {
        let w = LossWeights::default();
        assert!((w.combine(0.2, 0.3) - 0.5).abs() < 1e-15);
        assert_eq!(LossWeights::new(0.0).unwrap().combine(0.2, 0.3), 0.2);
        assert!(LossWeights::new(-1.0).is_err());

        let mut g = Graph::<f64>::new();
        let sti = g.constant(Tensor::scalar(0.2));
        let est = g.constant(Tensor::scalar(0.3));
        let l = loss_final(&mut g, sti, est, LossWeights::new(2.0).unwrap()).unwrap();
        assert!((value(&g, l) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn mismatched_sequences() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros([1, 3, 2, 2]));
        let b = g.constant(Tensor::zeros([1, 3, 2, 4]));
        assert!(matches!(loss_sti(&mut g, &[a], &[a, a]), Err(Error::Shape(_))));
        assert!(matches!(loss_sti(&mut g, &[a], &[b]), Err(Error::Shape(_))));
    }
}
