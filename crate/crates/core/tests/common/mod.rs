#![allow(dead_code)]

use estinet::engine::{Element, Graph, Tensor, Var};
use estinet::estm::EstmConfig;
use estinet::model::{ModelConfig, Variant};
use estinet::sicm::SicmConfig;
use estinet::trainer::{DataSource, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A network narrow enough for fast tests.
pub fn tiny_model(variant: Variant) -> ModelConfig {
    ModelConfig {
        sicm: SicmConfig {
            base_channels: 2,
            feature_channels: 2,
            ..Default::default()
        },
        estm: EstmConfig {
            width: 2,
            rdb_count: 1,
            rdb_layers: 2,
            growth: 2,
            ..Default::default()
        },
        variant,
        ..Default::default()
    }
}

/// Reduced-width network used for the learning checks.
pub fn narrow_model() -> ModelConfig {
    ModelConfig {
        sicm: SicmConfig {
            base_channels: 8,
            feature_channels: 8,
            ..Default::default()
        },
        estm: EstmConfig {
            width: 8,
            growth: 8,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Few iterations on two small synthetic clips.
pub fn tiny_train_config(stage1: u64, stage2: u64) -> TrainConfig {
    TrainConfig {
        model: tiny_model(Variant::Full),
        batch_size: 2,
        lr_initial: 1e-3,
        stage1_iters: stage1,
        stage2_iters: stage2,
        crop: Some(16),
        seed: 3,
        data: DataSource::Synthetic {
            clips: 2,
            frames: 6,
            height: 32,
            width: 32,
            preset: "default".into(),
            seed: 9,
        },
        ..Default::default()
    }
}

/// Uniform values in `[0, 1)` of the given shape.
pub fn random_tensor<E: Element>(shape: &[usize], seed: u64) -> Tensor<E> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| E::from_f64(rng.random::<f64>()))
}

/// `n` random `[1,3,h,w]` frames as tape constants.
pub fn random_window<E: Element>(g: &mut Graph<E>, n: usize, h: usize, w: usize, seed: u64) -> Vec<Var> {
    (0..n)
        .map(|t| g.constant(random_tensor(&[1, 3, h, w], seed * 1000 + t as u64)))
        .collect()
}

/// `[3,h,w]` frames as `[1,3,h,w]` tape constants.
pub fn frame_vars<E: Element>(g: &mut Graph<E>, frames: &[Tensor<E>]) -> Vec<Var> {
    frames
        .iter()
        .map(|f| {
            let mut shape = vec![1];
            shape.extend_from_slice(f.shape());
            g.constant(f.reshape(shape).expect("frame reshape"))
        })
        .collect()
}
