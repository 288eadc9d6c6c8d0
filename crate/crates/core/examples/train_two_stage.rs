//! Two-stage training on synthetic clips with a reduced-width network:
//! stage 1 fits the coarse path, stage 2 adds the refiner. Prints the loss
//! curve and the evaluated losses before and after.
//!
//! cargo run --example train_two_stage -- [ITERS_PER_STAGE] [OUT.ckpt]

use estinet::losses::LossWeights;
use estinet::trainer::{
    evaluate_loss, initial_checkpoint, train_stage1, train_stage2, DataSource, LossLog, TrainConfig, TrainingData,
};

fn main() -> estinet::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters = args.next().and_then(|s| s.parse().ok()).unwrap_or(150);
    let out = args.next();

    let mut config = TrainConfig {
        batch_size: 2,
        lr_initial: 1e-3,
        plateau_window: 200,
        stage1_iters: iters,
        stage2_iters: iters,
        crop: Some(32),
        data: DataSource::Synthetic {
            clips: 2,
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

    let data = TrainingData::from_source(&config.data)?;
    let weights = LossWeights::new(config.alpha)?;
    let before = evaluate_loss(&initial_checkpoint(&config)?, &data, weights)?;

    let mut log = LossLog::default();
    let coarse = train_stage1(&config, &data, &mut log)?;
    let after_stage1 = evaluate_loss(&coarse, &data, weights)?;
    let refined = train_stage2(coarse, &config, &data, &mut log)?;
    let after_stage2 = evaluate_loss(&refined, &data, weights)?;

    let step = (log.rows.len() / 10).max(1);
    println!("iteration stage   l_sti    l_est  l_final       lr");
    for row in log.rows.iter().step_by(step).chain(log.rows.last()) {
        println!(
            "{:>9} {:>5} {:>7.4} {:>8} {:>8.4} {:>8.1e}",
            row.iteration,
            row.stage,
            row.l_sti,
            row.l_est.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            row.l_final,
            row.lr
        );
    }
    for (label, loss) in [
        ("initial", before),
        ("after stage 1", after_stage1),
        ("after stage 2", after_stage2),
    ] {
        println!(
            "{label:<14} L_sti {:.5}  L_est {:.5}  L_final {:.5}",
            loss.l_sti, loss.l_est, loss.l_final
        );
    }
    if let Some(path) = out {
        refined.save(&path)?;
        println!("checkpoint written to {path}");
    }
    Ok(())
}
