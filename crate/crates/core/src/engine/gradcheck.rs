//! Finite-difference verification of tape gradients.
//!
//! A fragment maps a parameter store to an output tensor on a fresh tape.
//! The checker reduces that output to a scalar with a fixed random
//! projection, differentiates it on the tape, and compares a seeded sample
//! of entries per parameter against central differences. Entries whose
//! perturbation flips a ReLU (detected through the tape's kink signature)
//! are retried with a smaller step and skipped if the flip persists.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradcheckConfig {
    /// Initial central-difference step.
    pub step: f64,
    /// Smallest step tried before an entry is skipped as a ReLU kink.
    pub min_step: f64,
    /// Entries compared per parameter tensor (all entries if fewer).
    pub samples_per_param: usize,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            min_step: 1e-7,
            samples_per_param: 8,
            abs_floor: 1e-7,
        }
    }
}

/// Per-parameter outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Per-parameter maximum relative errors, worst first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub entries: Vec<ParamError>,
}

impl GradcheckReport {
    pub fn worst(&self) -> Option<&ParamError> {
        self.entries.first()
    }

    pub fn max_error(&self) -> f64 {
        self.worst().map_or(0.0, |e| e.max_rel_error)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error() < tolerance
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn gradcheck<F>(store: &ParamStore<f64>, fragment: F, seed: u64, config: GradcheckConfig) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = store.clone();
    params.zero_grads();

    let mut g = Graph::with_kink_tracking();
    let out = fragment(&mut g, &params)?;
    let projection = Tensor::from_fn(g.shape(out).to_vec(), |_| rng.random_range(-1.0..1.0));

    let evaluate = |p: &ParamStore<f64>| -> Result<(f64, u64)> {
        let mut g = Graph::with_kink_tracking();
        let out = fragment(&mut g, p)?;
        let r = g.constant(projection.clone());
        let weighted = g.mul(out, r)?;
        let loss = g.mean(weighted)?;
        Ok((g.value(loss).item()?, g.kink_signature()))
    };

    let r = g.constant(projection.clone());
    let weighted = g.mul(out, r)?;
    let loss = g.mean(weighted)?;
    let base_signature = g.kink_signature();
    g.backward(loss, &mut params)?;

    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut entries = Vec::with_capacity(names.len());
    for name in names {
        let analytic = params.grad(&name).expect("name from store").clone();
        let numel = analytic.numel();
        let picks: Vec<usize> = if numel <= config.samples_per_param {
            (0..numel).collect()
        } else {
            let mut v = sample(&mut rng, numel, config.samples_per_param).into_vec();
            v.sort_unstable();
            v
        };
        let mut probe = params.clone();
        let mut result = ParamError {
            name: name.clone(),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        for idx in picks {
            let original = probe.value(&name).expect("name from store").data()[idx];
            let mut step = config.step;
            let numeric = loop {
                probe.value_mut(&name).unwrap().data_mut()[idx] = original + step;
                let (plus, sig_plus) = evaluate(&probe)?;
                probe.value_mut(&name).unwrap().data_mut()[idx] = original - step;
                let (minus, sig_minus) = evaluate(&probe)?;
                probe.value_mut(&name).unwrap().data_mut()[idx] = original;
                if !plus.is_finite() || !minus.is_finite() {
                    return Err(Error::Numerical(format!(
                        "finite difference for `{name}`[{idx}] is not finite"
                    )));
                }
                if sig_plus == base_signature && sig_minus == base_signature {
                    break Some((plus - minus) / (2.0 * step));
                }
                step /= 10.0;
                if step < config.min_step {
                    break None;
                }
            };
            let a = analytic.data()[idx];
            if !a.is_finite() {
                return Err(Error::Numerical(format!(
                    "analytic gradient of `{name}`[{idx}] is not finite"
                )));
            }
            match numeric {
                Some(n) => {
                    result.checked += 1;
                    result.max_rel_error = result.max_rel_error.max(relative_error(a, n, config.abs_floor));
                }
                None => result.skipped += 1,
            }
        }
        entries.push(result);
    }
    entries.sort_by(|a, b| b.max_rel_error.total_cmp(&a.max_rel_error));
    Ok(GradcheckReport { entries })
}
