use std::path::PathBuf;

use crate::config::ConfigMap;
use crate::data::RainParams;
use crate::engine::OptimizerConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Where training clips come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Procedural clean clips with synthetic rain.
    Synthetic {
        clips: usize,
        frames: usize,
        height: usize,
        width: usize,
        preset: String,
        seed: u64,
    },
    /// A directory with `clean/` and `rainy/` frame folders, or a directory
    /// of such directories.
    Directory(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            clips: 8,
            frames: 20,
            height: 64,
            width: 64,
            preset: "default".into(),
            seed: 0,
        }
    }
}

/// Optimization settings for both stages.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Learning rate after the loss plateaus.
    pub lr_final: f64,
    /// Iterations per comparison window of the plateau rule.
    pub plateau_window: usize,
    /// Relative improvement below which the loss counts as converged.
    pub plateau_tolerance: f64,
    pub stage1_iters: u64,
    pub stage2_iters: u64,
    pub optimizer: OptimizerConfig,
    pub alpha: f64,
    /// Square crop side; `None` trains on whole frames.
    pub crop: Option<usize>,
    pub flip: bool,
    pub seed: u64,
    pub data: DataSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            batch_size: 8,
            lr_initial: 1e-4,
            lr_final: 1e-6,
            plateau_window: 100,
            plateau_tolerance: 0.01,
            stage1_iters: 1000,
            stage2_iters: 1000,
            optimizer: OptimizerConfig::default(),
            alpha: 1.0,
            crop: Some(64),
            flip: true,
            seed: 0,
            data: DataSource::default(),
        }
    }
}

fn parse_size(text: &str) -> Result<(usize, usize)> {
    let (h, w) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("size `{text}` is not HxW")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("size `{text}` is not HxW")))
    };
    Ok((parse(h)?, parse(w)?))
}

impl TrainConfig {
    /// Builds a configuration from a map, consuming every key; unknown keys
    /// are rejected.
    pub fn from_map(mut map: ConfigMap) -> Result<Self> {
        let mut c = Self::default();
        let model_keys: Vec<String> = map
            .iter()
            .map(|(k, _)| k.to_string())
            .filter(|k| ModelConfig::is_model_key(k))
            .collect();
        for key in model_keys {
            let value = map.take(&key).unwrap_or_default();
            c.model.set(&key, &value)?;
        }
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = map.take_parsed($key)? {
                    $field = v;
                }
            };
        }
        take!("batch_size", c.batch_size);
        take!("lr_initial", c.lr_initial);
        take!("lr_final", c.lr_final);
        take!("plateau_window", c.plateau_window);
        take!("plateau_tolerance", c.plateau_tolerance);
        take!("stage1_iters", c.stage1_iters);
        take!("stage2_iters", c.stage2_iters);
        take!("alpha", c.alpha);
        take!("flip", c.flip);
        take!("seed", c.seed);
        if let Some(crop) = map.take("crop") {
            c.crop = match crop.as_str() {
                "none" | "0" => None,
                v => Some(v.parse().map_err(|_| Error::Config(format!("invalid crop `{v}`")))?),
            };
        }
        let (mut beta1, mut beta2, mut eps) = (0.9, 0.999, 1e-8);
        take!("adam_beta1", beta1);
        take!("adam_beta2", beta2);
        take!("adam_eps", eps);
        let optimizer = map.take("optimizer").unwrap_or_else(|| "adam".into());
        c.optimizer = match optimizer.as_str() {
            "adam" => OptimizerConfig::Adam { beta1, beta2, eps },
            "sgd" => OptimizerConfig::Sgd,
            other => return Err(Error::Config(format!("unknown optimizer `{other}`"))),
        };

        if let Some(dir) = map.take("data_dir") {
            c.data = DataSource::Directory(dir.into());
        } else if let DataSource::Synthetic {
            clips,
            frames,
            height,
            width,
            preset,
            seed,
        } = &mut c.data
        {
            take!("synth_clips", *clips);
            take!("synth_frames", *frames);
            take!("data_seed", *seed);
            if let Some(p) = map.take("rain_preset") {
                *preset = p;
            }
            if let Some(size) = map.take("synth_size") {
                (*height, *width) = parse_size(&size)?;
            }
        }
        map.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return bad(format!(
                "need 0 < lr_final ≤ lr_initial, got {} and {}",
                self.lr_final, self.lr_initial
            ));
        }
        if self.plateau_window == 0 || self.plateau_tolerance.is_nan() || self.plateau_tolerance < 0.0 {
            return bad("plateau_window must be ≥ 1 and plateau_tolerance ≥ 0".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be ≥ 0, got {}", self.alpha));
        }
        if let DataSource::Synthetic {
            clips, frames, preset, ..
        } = &self.data
        {
            if *clips == 0 || *frames == 0 {
                return bad("synthetic data needs at least one clip and frame".into());
            }
            RainParams::preset(preset, 64, 64)?;
        }
        crate::model::Estinet::new(self.model).map(|_| ())
    }

    /// The configuration as `key = value` text that [`TrainConfig::from_map`] reads back.
    pub fn to_text(&self) -> String {
        let mut map = ConfigMap::new();
        for (k, v) in self.model.to_pairs() {
            map.set(k, v);
        }
        map.set("batch_size", self.batch_size.to_string());
        map.set("lr_initial", self.lr_initial.to_string());
        map.set("lr_final", self.lr_final.to_string());
        map.set("plateau_window", self.plateau_window.to_string());
        map.set("plateau_tolerance", self.plateau_tolerance.to_string());
        map.set("stage1_iters", self.stage1_iters.to_string());
        map.set("stage2_iters", self.stage2_iters.to_string());
        match self.optimizer {
            OptimizerConfig::Sgd => map.set("optimizer", "sgd"),
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                map.set("optimizer", "adam");
                map.set("adam_beta1", beta1.to_string());
                map.set("adam_beta2", beta2.to_string());
                map.set("adam_eps", eps.to_string());
            }
        }
        map.set("alpha", self.alpha.to_string());
        map.set("crop", self.crop.map_or("none".to_string(), |c| c.to_string()));
        map.set("flip", self.flip.to_string());
        map.set("seed", self.seed.to_string());
        match &self.data {
            DataSource::Directory(dir) => map.set("data_dir", dir.display().to_string()),
            DataSource::Synthetic {
                clips,
                frames,
                height,
                width,
                preset,
                seed,
            } => {
                map.set("synth_clips", clips.to_string());
                map.set("synth_frames", frames.to_string());
                map.set("synth_size", format!("{height}x{width}"));
                map.set("rain_preset", preset.clone());
                map.set("data_seed", seed.to_string());
            }
        }
        map.to_text()
    }
}
