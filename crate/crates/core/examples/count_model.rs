//! Parameter and FLOP accounting for the default network and every
//! ablation variant.
//!
//! cargo run --example count_model -- [HxW]

use estinet::model::{ModelConfig, Variant};
use estinet::trainer::{count_config_params, count_flops, window_flops};

fn main() -> estinet::Result<()> {
    let size = std::env::args().nth(1).unwrap_or_else(|| "64x64".into());
    let (h, w) = size
        .split_once('x')
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
        .ok_or_else(|| estinet::Error::Config(format!("size `{size}` is not HxW")))?;

    println!(
        "{:<12} {:>12} {:>16} {:>18}",
        "variant", "params", "window GFLOP", "20-frame GFLOP"
    );
    for variant in [
        "full",
        "sicm_2dcnn",
        "convlstm",
        "b_convlstm",
        "stim_n(3)",
        "estm_2dcnn",
    ] {
        let config = ModelConfig {
            variant: variant.parse::<Variant>()?,
            ..Default::default()
        };
        println!(
            "{variant:<12} {:>12} {:>16.3} {:>18.3}",
            count_config_params(&config)?,
            window_flops(&config, h, w)? as f64 / 1e9,
            count_flops(&config, h, w, 20)? as f64 / 1e9,
        );
    }
    Ok(())
}
