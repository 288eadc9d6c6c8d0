//! Parameter and FLOP accounting.
//!
//! A convolution with kernel `kt × kh × kw`, `Cin` inputs, `Cout` outputs
//! and `To × Ho × Wo` output positions costs
//! `2 · kt · kh · kw · Cin · Cout · To · Ho · Wo` FLOPs (one multiply and
//! one add per weight and position). Bias additions, activations, gating
//! products, concatenation and upsampling are not counted.

use super::Checkpoint;
use crate::error::Result;
use crate::model::{Estinet, ModelConfig};
use crate::nn::ConvSpec;

/// Sum of all tensor sizes in a checkpoint.
pub fn count_params(checkpoint: &Checkpoint) -> usize {
    checkpoint.param_count()
}

/// Parameters of a configuration without materializing a checkpoint.
pub fn count_config_params(config: &ModelConfig) -> Result<usize> {
    Ok(Estinet::new(*config)?.init::<f32>(0)?.numel())
}

/// FLOPs of one window at `height × width`.
pub fn window_flops(config: &ModelConfig, height: usize, width: usize) -> Result<u64> {
    Ok(total(&Estinet::new(*config)?.inventory(height, width)?))
}

/// FLOPs to derain `frames` frames of `height × width`, with spatial
/// features computed once per frame and one temporal and refinement pass
/// per output frame.
pub fn count_flops(config: &ModelConfig, height: usize, width: usize, frames: usize) -> Result<u64> {
    let model = Estinet::new(*config)?;
    let spatial = total(&model.sicm().inventory(height, width)?);
    let per_window = total(&model.inventory(height, width)?) - model.window() as u64 * spatial;
    Ok(frames as u64 * (spatial + per_window))
}

fn total(specs: &[ConvSpec]) -> u64 {
    specs.iter().map(|s| s.flops()).sum()
}
