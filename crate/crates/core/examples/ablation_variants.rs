//! Builds every architecture variant and runs one window through it,
//! showing which modules each variant contains and what it outputs.
//!
//! cargo run --example ablation_variants

use estinet::data::{synth_pair, RainParams};
use estinet::engine::Graph;
use estinet::model::{Estinet, ModelConfig, Variant};
use estinet::sicm::SicmConfig;

fn main() -> estinet::Result<()> {
    let (h, w) = (32, 32);
    let rain = RainParams::preset("default", h, w)?.with_seed(1);
    let (_, rainy) = synth_pair(4, 5, h, w, &rain)?;

    for variant in [
        "full",
        "sicm_2dcnn",
        "convlstm",
        "b_convlstm",
        "stim_n(3)",
        "estm_2dcnn",
    ] {
        let config = ModelConfig {
            sicm: SicmConfig {
                base_channels: 4,
                feature_channels: 4,
                ..Default::default()
            },
            variant: variant.parse::<Variant>()?,
            ..Default::default()
        };
        let model = Estinet::new(config)?;
        let store = model.init::<f32>(0)?;
        let mut g = Graph::new();
        let window: Vec<_> = rainy.frames()[..model.window()]
            .iter()
            .map(|f| g.constant(f.reshape([1, 3, h, w]).expect("frame reshape")))
            .collect();
        let out = model.forward(&mut g, &store, &window)?;
        println!(
            "{variant:<11} window {} | temporal: {:<10} | refiner: {:<5} | {} coarse frames, refined {:?}",
            model.window(),
            model
                .stim()
                .map(|s| s.config().kind.to_string())
                .unwrap_or_else(|| "2d cnn".into()),
            model.refiner().is_some(),
            out.coarse.len(),
            g.shape(out.refined),
        );
    }
    Ok(())
}
