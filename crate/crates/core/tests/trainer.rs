mod common;

use common::tiny_train_config;
use estinet::losses::LossWeights;
use estinet::model::is_refiner_param;
use estinet::trainer::{
    derain_video, evaluate_loss, initial_checkpoint, train, train_stage1, train_stage2, Checkpoint, LossLog,
    TrainConfig, TrainingData,
};
use estinet::Error;

fn data(config: &TrainConfig) -> TrainingData {
    TrainingData::from_source(&config.data).unwrap()
}

fn refiner_values(ckpt: &Checkpoint) -> Vec<Vec<f32>> {
    ckpt.params
        .iter()
        .filter(|(name, _)| is_refiner_param(name))
        .map(|(_, e)| e.value.data().to_vec())
        .collect()
}

#[test]
fn zero_iterations_return_the_initial_parameters() {
    let config = tiny_train_config(0, 0);
    let mut log = LossLog::default();
    let trained = train(&config, &data(&config), &mut log).unwrap();
    assert!(log.rows.is_empty());
    assert_eq!(trained.to_bytes(), initial_checkpoint(&config).unwrap().to_bytes());
}

#[test]
fn first_stage_leaves_the_refiner_untouched() {
    let config = tiny_train_config(4, 0);
    let init = initial_checkpoint(&config).unwrap();
    let trained = train_stage1(&config, &data(&config), &mut LossLog::default()).unwrap();
    assert_eq!(refiner_values(&trained), refiner_values(&init));
    let moved = trained
        .params
        .iter()
        .zip(init.params.iter())
        .any(|((_, a), (_, b))| a.value != b.value);
    assert!(moved);
    assert_eq!((trained.stage1_iters, trained.stage2_iters), (4, 0));
}

#[test]
fn zero_refinement_weight_never_updates_the_refiner() {
    let config = TrainConfig {
        alpha: 0.0,
        ..tiny_train_config(2, 3)
    };
    let init = initial_checkpoint(&config).unwrap();
    let trained = train(&config, &data(&config), &mut LossLog::default()).unwrap();
    assert_eq!(refiner_values(&trained), refiner_values(&init));
}

#[test]
fn loss_log_numbers_iterations_across_stages() {
    let config = tiny_train_config(3, 2);
    let mut log = LossLog::default();
    train(&config, &data(&config), &mut log).unwrap();
    let iterations: Vec<u64> = log.rows.iter().map(|r| r.iteration).collect();
    assert_eq!(iterations, [1, 2, 3, 4, 5]);
    assert!(log.stage(1).all(|r| r.l_est.is_none() && r.l_final == r.l_sti));
    for r in log.stage(2) {
        let est = r.l_est.unwrap();
        assert!((r.l_final - (r.l_sti + est)).abs() <= 1e-6 * r.l_final.abs().max(1.0));
    }
    let csv = log.to_csv();
    assert!(csv.starts_with("iteration,stage,l_sti,l_est,l_final,lr\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn split_stages_equal_a_single_run() {
    let config = tiny_train_config(3, 3);
    let d = data(&config);
    let whole = train(&config, &d, &mut LossLog::default()).unwrap();
    let first = train_stage1(&config, &d, &mut LossLog::default()).unwrap();
    let reloaded = Checkpoint::from_bytes(&first.to_bytes()).unwrap();
    let second = train_stage2(reloaded, &config, &d, &mut LossLog::default()).unwrap();
    assert_eq!(whole.to_bytes(), second.to_bytes());
}

#[test]
fn second_stage_rejects_a_different_architecture() {
    let config = tiny_train_config(1, 1);
    let first = train_stage1(&config, &data(&config), &mut LossLog::default()).unwrap();
    let mut other = config.clone();
    other.model.gate_kernel = 5;
    let err = train_stage2(first, &other, &data(&config), &mut LossLog::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn different_seeds_give_different_runs() {
    let a = tiny_train_config(2, 0);
    let b = TrainConfig { seed: 4, ..a.clone() };
    let ca = train(&a, &data(&a), &mut LossLog::default()).unwrap();
    let cb = train(&b, &data(&b), &mut LossLog::default()).unwrap();
    assert_ne!(ca.to_bytes(), cb.to_bytes());
}

#[test]
fn evaluation_of_untrained_refiner_equals_rainy_error() {
    let config = tiny_train_config(0, 0);
    let d = data(&config);
    let mut init = initial_checkpoint(&config).unwrap();
    init.params.zero_values();
    let loss = evaluate_loss(&init, &d, LossWeights::default()).unwrap();
    let (clean, rainy) = &d.pairs()[0];
    let (clean2, rainy2) = &d.pairs()[1];
    let mse = |a: &estinet::data::VideoClip, b: &estinet::data::VideoClip, idx: &[usize]| -> f64 {
        idx.iter()
            .map(|&i| estinet::losses::mse(a.frame(i), b.frame(i)).unwrap())
            .sum::<f64>()
    };
    // 6 frames, window 5, stride 5: frames 0..=4 and the reflected tail 5,4,3,2,1.
    let expected = (mse(clean, rainy, &[2, 3]) + mse(clean2, rainy2, &[2, 3])) / 4.0;
    assert!((loss.l_est - expected).abs() < 1e-6, "{} vs {expected}", loss.l_est);
}

#[test]
fn derained_clip_keeps_length_and_size() {
    let config = tiny_train_config(0, 0);
    let ckpt = initial_checkpoint(&config).unwrap();
    let rain = estinet::data::RainParams::preset("light", 32, 48).unwrap();
    let (_, rainy) = estinet::data::synth_pair(1, 7, 32, 48, &rain).unwrap();
    let cropped: Vec<_> = rainy
        .frames()
        .iter()
        .map(|f| estinet::data::crop_frame(f, 1, 3, 29).unwrap())
        .collect();
    let odd = estinet::data::VideoClip::new(cropped, estinet::data::ClipRole::Rainy).unwrap();
    for clip in [&rainy, &odd] {
        let out = derain_video(&ckpt, clip).unwrap();
        assert_eq!(out.len(), clip.len());
        assert_eq!((out.height(), out.width()), (clip.height(), clip.width()));
    }
}
