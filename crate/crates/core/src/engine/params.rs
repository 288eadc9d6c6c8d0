use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Element, Tensor};
use crate::error::{shape_err, Error, Result};

/// A trainable tensor and its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<E> {
    pub value: Tensor<E>,
    pub grad: Tensor<E>,
}

/// Ordered name → parameter map. Iteration follows insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<E = f32> {
    entries: IndexMap<String, ParamEntry<E>>,
    rng_seed: u64,
}

impl<E: Element> ParamStore<E> {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            entries: IndexMap::new(),
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<E>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter `{name}`")));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(name, ParamEntry { value, grad });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<E>> {
        self.entries.get(name)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor<E>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<E>> {
        self.entries.get(name).map(|e| &e.grad)
    }

    pub(crate) fn value_at(&self, index: usize) -> &Tensor<E> {
        &self.entries[index].value
    }

    /// Replaces a parameter value, keeping its shape.
    pub fn set_value(&mut self, name: &str, value: Tensor<E>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))?;
        entry.value.expect_same_shape(&value)?;
        entry.value = value;
        Ok(())
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor<E>> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub(crate) fn accumulate_grad(&mut self, index: usize, grad: &Tensor<E>) -> Result<()> {
        let (name, entry) = self
            .entries
            .get_index_mut(index)
            .ok_or_else(|| Error::Contract(format!("parameter index {index} out of range")))?;
        if entry.grad.shape() != grad.shape() {
            return Err(shape_err!(
                "gradient for `{}` has shape {:?}, expected {:?}",
                name,
                grad.shape(),
                entry.grad.shape()
            ));
        }
        for (a, b) in entry.grad.data_mut().iter_mut().zip(grad.data()) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(E::zero());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<E>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<E>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    /// Converts every value to another precision; gradients reset to zero.
    pub fn cast<F: Element>(&self) -> ParamStore<F> {
        let mut out = ParamStore::new(self.rng_seed);
        for (name, e) in &self.entries {
            out.insert(name.clone(), e.value.cast())
                .expect("names are unique in the source store");
        }
        out
    }

    /// Sets every value to zero.
    pub fn zero_values(&mut self) {
        for e in self.entries.values_mut() {
            e.value.fill(E::zero());
        }
    }
}

/// Seeded weight initializer: weights from `N(0, std²)`, biases zero.
pub struct Initializer {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

/// Standard deviation of freshly initialized weights.
pub const INIT_STD: f64 = 0.01;

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self::with_std(seed, INIT_STD)
    }

    pub fn with_std(seed: u64, std: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, std).expect("standard deviation must be finite and non-negative"),
        }
    }

    pub fn weight<E: Element>(&mut self, shape: &[usize]) -> Tensor<E> {
        Tensor::from_fn(shape.to_vec(), |_| E::from_f64(self.normal.sample(&mut self.rng)))
    }

    pub fn bias<E: Element>(&mut self, shape: &[usize]) -> Tensor<E> {
        Tensor::zeros(shape.to_vec())
    }
}
