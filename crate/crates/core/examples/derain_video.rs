//! Removes rain from a whole clip with a trained checkpoint and reports the
//! quality gain. Without a checkpoint argument a small model is trained on
//! the spot from other synthetic clips first.
//!
//! cargo run --example derain_video -- [MODEL.ckpt]

use estinet::data::{synth_pair, RainParams};
use estinet::metrics::MetricReport;
use estinet::trainer::{derain_video, train, Checkpoint, DataSource, LossLog, TrainConfig, TrainingData};

fn main() -> estinet::Result<()> {
    let checkpoint = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path)?,
        None => quick_model()?,
    };

    let rain = RainParams::preset("default", 48, 64)?.with_seed(99);
    let (clean, rainy) = synth_pair(500, 12, 48, 64, &rain)?;
    let derained = derain_video(&checkpoint, &rainy)?;

    let before = MetricReport::evaluate(rainy.frames(), clean.frames())?;
    let after = MetricReport::evaluate(derained.frames(), clean.frames())?;
    println!("rainy    {}", before.summary_line());
    println!("derained {}", after.summary_line());
    println!("gain {:+.2} dB", after.mean_psnr() - before.mean_psnr());
    Ok(())
}

fn quick_model() -> estinet::Result<Checkpoint> {
    let mut config = TrainConfig {
        batch_size: 2,
        lr_initial: 1e-3,
        plateau_window: 200,
        stage1_iters: 150,
        stage2_iters: 150,
        crop: Some(32),
        data: DataSource::Synthetic {
            clips: 4,
            frames: 10,
            height: 32,
            width: 32,
            preset: "default".into(),
            seed: 0,
        },
        ..Default::default()
    };
    config.model.sicm.base_channels = 8;
    config.model.sicm.feature_channels = 8;
    config.model.estm.width = 8;
    config.model.estm.growth = 8;
    println!(
        "training a small model for {} iterations",
        config.stage1_iters + config.stage2_iters
    );
    let data = TrainingData::from_source(&config.data)?;
    train(&config, &data, &mut LossLog::default())
}
