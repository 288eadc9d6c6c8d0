use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Checkpoint, DataSource, TrainConfig};
use crate::data::{
    augment, make_windows, read_frames, synth_pair, AugmentConfig, ClipRole, FlipMode, FramePair, RainParams,
    VideoClip, Window,
};
use crate::engine::{Graph, Optimizer, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{loss_est, loss_final, loss_sti, LossWeights};
use crate::model::{is_refiner_param, Estinet};

/// Aligned clean and rainy clips.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData {
    pairs: Vec<(VideoClip, VideoClip)>,
}

impl TrainingData {
    pub fn new(pairs: Vec<(VideoClip, VideoClip)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Contract("training data holds no clips".into()));
        }
        for (i, (clean, rainy)) in pairs.iter().enumerate() {
            if clean.len() != rainy.len() || clean.frame(0).shape() != rainy.frame(0).shape() {
                return Err(Error::Contract(format!(
                    "clip {i}: clean and rainy sequences differ in size"
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Clip `i` of a synthetic set uses clip seed `seed + i` and rain seed
    /// `seed + i + 1_000_003`.
    pub fn synthetic(
        clips: usize,
        frames: usize,
        height: usize,
        width: usize,
        preset: &str,
        seed: u64,
    ) -> Result<Self> {
        let rain = RainParams::preset(preset, height, width)?;
        let pairs = (0..clips as u64)
            .map(|i| {
                let rain = rain.clone().with_seed(seed + i + 1_000_003);
                synth_pair(seed + i, frames, height, width, &rain)
            })
            .collect::<Result<_>>()?;
        Self::new(pairs)
    }

    /// Reads `dir/clean` + `dir/rainy`, or every subdirectory holding them.
    pub fn from_directory(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read_pair = |d: &Path| -> Result<(VideoClip, VideoClip)> {
            Ok((
                read_frames(d.join("clean"), ClipRole::Clean)?,
                read_frames(d.join("rainy"), ClipRole::Rainy)?,
            ))
        };
        if dir.join("clean").is_dir() {
            return Self::new(vec![read_pair(dir)?]);
        }
        let mut subdirs: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("clean").is_dir())
            .collect();
        subdirs.sort();
        if subdirs.is_empty() {
            return Err(Error::io(dir, "no clean/ and rainy/ frame folders found"));
        }
        Self::new(subdirs.iter().map(|d| read_pair(d)).collect::<Result<_>>()?)
    }

    pub fn from_source(source: &DataSource) -> Result<Self> {
        match source {
            DataSource::Synthetic {
                clips,
                frames,
                height,
                width,
                preset,
                seed,
            } => Self::synthetic(*clips, *frames, *height, *width, preset, *seed),
            DataSource::Directory(dir) => Self::from_directory(dir),
        }
    }

    pub fn pairs(&self) -> &[(VideoClip, VideoClip)] {
        &self.pairs
    }
}

/// One optimization step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    /// 1-based, counted across both stages.
    pub iteration: u64,
    pub stage: u8,
    pub l_sti: f64,
    /// Absent in the first stage, which never evaluates the refiner.
    pub l_est: Option<f64>,
    pub l_final: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub rows: Vec<LossRow>,
}

impl LossLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,stage,l_sti,l_est,l_final,lr\n");
        for r in &self.rows {
            let est = r.l_est.map(|v| format!("{v:.9e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{:.9e},{},{:.9e},{:e}",
                r.iteration, r.stage, r.l_sti, est, r.l_final, r.lr
            );
        }
        out
    }

    pub fn stage(&self, stage: u8) -> impl Iterator<Item = &LossRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }
}

/// Learning rate that drops from `initial` to `final` once, when the mean
/// loss of the latest window improves on the window before it by less than
/// `tolerance` (relative).
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    lr: f64,
    lr_final: f64,
    window: usize,
    tolerance: f64,
    history: Vec<f64>,
    dropped_at: Option<usize>,
}

impl PlateauSchedule {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            lr: config.lr_initial,
            lr_final: config.lr_final,
            window: config.plateau_window,
            tolerance: config.plateau_tolerance,
            history: Vec::new(),
            dropped_at: None,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Step index (1-based) after which the rate dropped.
    pub fn dropped_at(&self) -> Option<usize> {
        self.dropped_at
    }

    pub fn observe(&mut self, loss: f64) {
        self.history.push(loss);
        let (n, w) = (self.history.len(), self.window);
        if self.dropped_at.is_some() || n < 2 * w {
            return;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let previous = mean(&self.history[n - 2 * w..n - w]);
        let latest = mean(&self.history[n - w..]);
        if (previous - latest) / previous < self.tolerance {
            self.lr = self.lr_final;
            self.dropped_at = Some(n);
        }
    }
}

/// Initial parameters for a configuration.
pub fn initial_checkpoint(config: &TrainConfig) -> Result<Checkpoint> {
    let model = Estinet::new(config.model)?;
    Ok(Checkpoint {
        model: config.model,
        stage1_iters: 0,
        stage2_iters: 0,
        params: model.init(config.seed)?,
    })
}

struct Batch {
    clean: Vec<Tensor<f32>>,
    rainy: Vec<Tensor<f32>>,
}

struct Sampler<'a> {
    data: &'a TrainingData,
    windows: Vec<(usize, Window)>,
    augment: AugmentConfig,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    fn new(data: &'a TrainingData, config: &TrainConfig, stage: u64) -> Result<Self> {
        let n = config.model.window();
        let mut windows = Vec::new();
        for (i, (clean, _)) in data.pairs.iter().enumerate() {
            windows.extend(make_windows(clean.len(), n, n)?.into_iter().map(|w| (i, w)));
        }
        if config.crop.is_none() {
            let first = data.pairs[0].0.frame(0).shape();
            if data.pairs.iter().any(|(c, _)| c.frame(0).shape() != first) {
                return Err(Error::Config("uncropped training needs equally sized clips".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stage);
        Ok(Self {
            data,
            windows,
            augment: AugmentConfig {
                crop: config.crop,
                flip: if config.flip { FlipMode::Random } else { FlipMode::Never },
            },
            batch_size: config.batch_size,
            rng,
        })
    }

    /// Per frame position `t`, the stacked `[B,3,h,w]` clean and rainy frames.
    fn next(&mut self) -> Result<Batch> {
        let mut items = Vec::with_capacity(self.batch_size);
        for _ in 0..self.batch_size {
            let (clip, window) = &self.windows[self.rng.random_range(0..self.windows.len())];
            let (clean, rainy) = &self.data.pairs[*clip];
            let pick =
                |c: &VideoClip| -> Vec<Tensor<f32>> { window.frames.iter().map(|&i| c.frame(i).clone()).collect() };
            let seed = self.rng.random();
            items.push(augment(&pick(clean), &pick(rainy), self.augment, seed)?);
        }
        let n = items[0].0.len();
        let stack = |select: &dyn Fn(&FramePair) -> &Vec<Tensor<f32>>| {
            (0..n)
                .map(|t| Tensor::stack(&items.iter().map(|it| select(it)[t].clone()).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Batch {
            clean: stack(&|it| &it.0)?,
            rainy: stack(&|it| &it.1)?,
        })
    }
}

fn constants(g: &mut Graph<f32>, frames: Vec<Tensor<f32>>) -> Vec<Var> {
    frames.into_iter().map(|f| g.constant(f)).collect()
}

fn check_config(checkpoint: &Checkpoint, config: &TrainConfig) -> Result<()> {
    if checkpoint.model != config.model {
        return Err(Error::Config(format!(
            "checkpoint was built for {:?}, configuration asks for {:?}",
            checkpoint.model, config.model
        )));
    }
    Ok(())
}

/// Trains the feature and temporal modules on the coarse-frame loss alone,
/// starting from the initialization. Refiner parameters are left untouched.
pub fn train_stage1(config: &TrainConfig, data: &TrainingData, log: &mut LossLog) -> Result<Checkpoint> {
    let checkpoint = initial_checkpoint(config)?;
    run_stage(checkpoint, config, data, log, 1)
}

/// Trains every parameter on `L_STI + alpha · L_EST`, starting from a
/// first-stage checkpoint.
pub fn train_stage2(
    checkpoint: Checkpoint,
    config: &TrainConfig,
    data: &TrainingData,
    log: &mut LossLog,
) -> Result<Checkpoint> {
    check_config(&checkpoint, config)?;
    run_stage(checkpoint, config, data, log, 2)
}

/// Both stages back to back.
pub fn train(config: &TrainConfig, data: &TrainingData, log: &mut LossLog) -> Result<Checkpoint> {
    let checkpoint = train_stage1(config, data, log)?;
    train_stage2(checkpoint, config, data, log)
}

fn run_stage(
    mut checkpoint: Checkpoint,
    config: &TrainConfig,
    data: &TrainingData,
    log: &mut LossLog,
    stage: u8,
) -> Result<Checkpoint> {
    config.validate()?;
    let iterations = if stage == 1 {
        config.stage1_iters
    } else {
        config.stage2_iters
    };
    if iterations == 0 {
        return Ok(checkpoint);
    }
    let model = Estinet::new(config.model)?;
    let weights = LossWeights::new(config.alpha)?;
    let mut sampler = Sampler::new(data, config, stage as u64)?;
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut schedule = PlateauSchedule::new(config);
    let offset = checkpoint.stage1_iters + checkpoint.stage2_iters;
    let center = model.center();
    let refiner_frozen = stage == 1;

    for step in 1..=iterations {
        let iteration = offset + step;
        let diverged = |e: Error| match e {
            Error::Numerical(message) => Error::Training { iteration, message },
            other => other,
        };
        let batch = sampler.next()?;
        let mut g = Graph::new();
        let clean = constants(&mut g, batch.clean);
        let rainy = constants(&mut g, batch.rainy);
        let store: &ParamStore<f32> = &checkpoint.params;
        let (coarse, _) = model.forward_coarse(&mut g, store, &rainy).map_err(diverged)?;
        let sti = loss_sti(&mut g, &clean, &coarse).map_err(diverged)?;
        let (objective, l_est) = if refiner_frozen {
            (sti, None)
        } else {
            let refined = model.refine(&mut g, store, &coarse, &rainy).map_err(diverged)?;
            let est = loss_est(&mut g, clean[center], refined).map_err(diverged)?;
            let total = loss_final(&mut g, sti, est, weights).map_err(diverged)?;
            (total, Some(g.value(est).item()? as f64))
        };
        let l_sti = g.value(sti).item()? as f64;
        let l_final = g.value(objective).item()? as f64;
        if !l_final.is_finite() {
            return Err(Error::Training {
                iteration,
                message: format!("loss is {l_final}"),
            });
        }
        g.backward(objective, &mut checkpoint.params).map_err(diverged)?;
        let lr = schedule.lr();
        optimizer
            .step(&mut checkpoint.params, lr, |name| {
                !(refiner_frozen && is_refiner_param(name))
            })
            .map_err(diverged)?;
        schedule.observe(l_final);
        log.rows.push(LossRow {
            iteration,
            stage,
            l_sti,
            l_est,
            l_final,
            lr,
        });
    }
    if stage == 1 {
        checkpoint.stage1_iters += iterations;
    } else {
        checkpoint.stage2_iters += iterations;
    }
    Ok(checkpoint)
}

/// Losses of a checkpoint averaged over every training window of every
/// clip, on whole frames and without augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaluatedLoss {
    pub l_sti: f64,
    pub l_est: f64,
    pub l_final: f64,
}

pub fn evaluate_loss(checkpoint: &Checkpoint, data: &TrainingData, weights: LossWeights) -> Result<EvaluatedLoss> {
    let model = Estinet::new(checkpoint.model)?;
    let n = model.window();
    let (mut sti_sum, mut est_sum, mut count) = (0.0, 0.0, 0usize);
    for (clean, rainy) in &data.pairs {
        for window in make_windows(clean.len(), n, n)? {
            let mut g = Graph::new();
            let batch = |c: &VideoClip| -> Result<Vec<Tensor<f32>>> {
                window
                    .frames
                    .iter()
                    .map(|&i| Tensor::stack(std::slice::from_ref(c.frame(i))))
                    .collect()
            };
            let clean_vars = constants(&mut g, batch(clean)?);
            let rainy_vars = constants(&mut g, batch(rainy)?);
            let out = model.forward(&mut g, &checkpoint.params, &rainy_vars)?;
            let sti = loss_sti(&mut g, &clean_vars, &out.coarse)?;
            let est = loss_est(&mut g, clean_vars[model.center()], out.refined)?;
            sti_sum += g.value(sti).item()? as f64;
            est_sum += g.value(est).item()? as f64;
            count += 1;
        }
    }
    let (l_sti, l_est) = (sti_sum / count as f64, est_sum / count as f64);
    Ok(EvaluatedLoss {
        l_sti,
        l_est,
        l_final: weights.combine(l_sti, l_est),
    })
}
