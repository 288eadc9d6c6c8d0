use std::collections::HashMap;

use super::{Element, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Optimizer family and its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    /// Plain gradient descent: `p ← p − lr·g`.
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Moments<E> {
    m: Tensor<E>,
    v: Tensor<E>,
}

/// Stateful optimizer. Moment estimates are kept per parameter name.
pub struct Optimizer<E: Element = f32> {
    config: OptimizerConfig,
    step_count: u64,
    moments: HashMap<String, Moments<E>>,
}

impl<E: Element> Optimizer<E> {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step_count: 0,
            moments: HashMap::new(),
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.step_count
    }

    /// Updates every parameter for which `select(name)` holds, then zeroes
    /// all gradients.
    pub fn step(&mut self, store: &mut ParamStore<E>, lr: f64, select: impl Fn(&str) -> bool) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        for (name, entry) in store.iter_mut() {
            if !select(name) {
                continue;
            }
            match self.config {
                OptimizerConfig::Sgd => {
                    let lr = E::from_f64(lr);
                    for (p, g) in entry.value.data_mut().iter_mut().zip(entry.grad.data()) {
                        *p = *p - lr * *g;
                    }
                }
                OptimizerConfig::Adam { beta1, beta2, eps } => {
                    let mom = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                        m: Tensor::zeros(entry.value.shape()),
                        v: Tensor::zeros(entry.value.shape()),
                    });
                    let (b1, b2) = (E::from_f64(beta1), E::from_f64(beta2));
                    let c1 = E::from_f64(1.0 - beta1.powi(t));
                    let c2 = E::from_f64(1.0 - beta2.powi(t));
                    let (lr, eps) = (E::from_f64(lr), E::from_f64(eps));
                    let one = E::one();
                    let values = entry.value.data_mut();
                    let grads = entry.grad.data();
                    let (ms, vs) = (mom.m.data_mut(), mom.v.data_mut());
                    for i in 0..values.len() {
                        let g = grads[i];
                        ms[i] = b1 * ms[i] + (one - b1) * g;
                        vs[i] = b2 * vs[i] + (one - b2) * g * g;
                        let m_hat = ms[i] / c1;
                        let v_hat = vs[i] / c2;
                        values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        store.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(value: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new(0);
        s.insert("p", Tensor::full([1], value)).unwrap();
        s.accumulate_grad(0, &Tensor::full([1], grad)).unwrap();
        s
    }

    #[test]
    fn sgd_step() {
        let mut s = store(1.0, 2.0);
        Optimizer::new(OptimizerConfig::Sgd)
            .step(&mut s, 0.1, |_| true)
            .unwrap();
        assert!((s.value("p").unwrap().data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.grad("p").unwrap().data()[0], 0.0);
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut s = store(1.5, 0.0);
        Optimizer::new(OptimizerConfig::Sgd)
            .step(&mut s, 0.1, |_| true)
            .unwrap();
        assert_eq!(s.value("p").unwrap().data()[0], 1.5);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // t = 1: m̂ = g, v̂ = g², update = lr·g/(|g| + ε).
        for g in [1e-3, 0.5, 40.0, -7.0] {
            let mut s = store(0.0, g);
            Optimizer::new(OptimizerConfig::default())
                .step(&mut s, 1e-4, |_| true)
                .unwrap();
            let moved = s.value("p").unwrap().data()[0];
            let expected = -1e-4 * g / (g.abs() + 1e-8);
            assert!((moved - expected).abs() < 1e-15, "g={g}");
            assert!((moved.abs() - 1e-4).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut s = store(1.0, 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::Sgd);
        assert!(matches!(opt.step(&mut s, 0.0, |_| true), Err(Error::Config(_))));
        assert!(matches!(opt.step(&mut s, -1.0, |_| true), Err(Error::Config(_))));
    }

    #[test]
    fn unselected_parameters_do_not_move() {
        let mut s = store(1.0, 3.0);
        Optimizer::new(OptimizerConfig::default())
            .step(&mut s, 0.1, |n| n != "p")
            .unwrap();
        assert_eq!(s.value("p").unwrap().data()[0], 1.0);
    }
}
