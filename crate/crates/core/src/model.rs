//! Full network assembly and the ablation variants.

use std::fmt;
use std::str::FromStr;

use crate::engine::{Element, Graph, Initializer, ParamStore, Var};
use crate::error::{shape_err, Error, Result};
use crate::estm::{Estm, EstmConfig};
use crate::nn::{Conv2d, ConvSpec};
use crate::sicm::{Sicm, SicmConfig};
use crate::stim::{Stim, StimConfig, StimOutput, TemporalKind};

/// Architecture variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    /// SICM + interaction CBLSTM + 3D refinement.
    #[default]
    Full,
    /// SICM + three frame-wise convolutions; no temporal modelling.
    Sicm2dcnn,
    /// SICM + unidirectional ConvLSTM + 3D refinement.
    ConvLstm,
    /// SICM + bidirectional ConvLSTM + 3D refinement.
    BConvLstm,
    /// SICM + interaction CBLSTM over `k` frames, no refinement.
    StimN(usize),
    /// SICM + interaction CBLSTM + 2D refinement of the center frame.
    Estm2dcnn,
}

impl Variant {
    pub fn temporal_kind(self) -> Option<TemporalKind> {
        match self {
            Variant::Full | Variant::StimN(_) | Variant::Estm2dcnn => Some(TemporalKind::Interaction),
            Variant::ConvLstm => Some(TemporalKind::ConvLstm),
            Variant::BConvLstm => Some(TemporalKind::BConvLstm),
            Variant::Sicm2dcnn => None,
        }
    }

    pub fn has_refiner(self) -> bool {
        !matches!(self, Variant::Sicm2dcnn | Variant::StimN(_))
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "full" => Variant::Full,
            "sicm_2dcnn" => Variant::Sicm2dcnn,
            "convlstm" => Variant::ConvLstm,
            "b_convlstm" => Variant::BConvLstm,
            "estm_2dcnn" => Variant::Estm2dcnn,
            _ => {
                let k = s
                    .strip_prefix("stim_n(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))?;
                if !(2..=5).contains(&k) {
                    return Err(Error::Config(format!("stim_n window must be in 2..=5, got {k}")));
                }
                Variant::StimN(k)
            }
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::Sicm2dcnn => f.write_str("sicm_2dcnn"),
            Variant::ConvLstm => f.write_str("convlstm"),
            Variant::BConvLstm => f.write_str("b_convlstm"),
            Variant::StimN(k) => write!(f, "stim_n({k})"),
            Variant::Estm2dcnn => f.write_str("estm_2dcnn"),
        }
    }
}

/// Every architecture hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub sicm: SicmConfig,
    pub gate_kernel: usize,
    pub estm: EstmConfig,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(SicmConfig::default(), EstmConfig::default(), Variant::Full)
    }
}

impl ModelConfig {
    pub fn new(sicm: SicmConfig, estm: EstmConfig, variant: Variant) -> Self {
        Self {
            sicm,
            gate_kernel: 3,
            estm,
            variant,
        }
    }

    /// Frames per window.
    pub fn window(&self) -> usize {
        match self.variant {
            Variant::StimN(k) => k,
            _ => self.estm.window,
        }
    }

    /// Index of the frame a window is responsible for.
    pub fn center(&self) -> usize {
        (self.window() - 1) / 2
    }

    /// Ordered `key=value` pairs describing this configuration.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("variant", self.variant.to_string()),
            ("base_channels", self.sicm.base_channels.to_string()),
            ("feature_channels", self.sicm.feature_channels.to_string()),
            ("gate_kernel", self.gate_kernel.to_string()),
            ("window", self.estm.window.to_string()),
            ("estm_width", self.estm.width.to_string()),
            ("rdb_count", self.estm.rdb_count.to_string()),
            ("rdb_layers", self.estm.rdb_layers.to_string()),
            ("growth", self.estm.growth.to_string()),
        ]
    }

    /// Builds a configuration from the keys listed by [`ModelConfig::to_pairs`];
    /// missing keys keep their defaults.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = ModelConfig::default();
        for (key, value) in pairs {
            c.set(key, value)?;
        }
        Ok(c)
    }

    /// Sets one key. Unknown keys are a configuration error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| -> Result<usize> {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}` expects a non-negative integer, got `{v}`")))
        };
        match key {
            "variant" => self.variant = value.parse()?,
            "base_channels" => self.sicm.base_channels = int(value)?,
            "feature_channels" => self.sicm.feature_channels = int(value)?,
            "gate_kernel" => self.gate_kernel = int(value)?,
            "window" => self.estm.window = int(value)?,
            "estm_width" => self.estm.width = int(value)?,
            "rdb_count" => self.estm.rdb_count = int(value)?,
            "rdb_layers" => self.estm.rdb_layers = int(value)?,
            "growth" => self.estm.growth = int(value)?,
            other => return Err(Error::Config(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }

    pub fn is_model_key(key: &str) -> bool {
        matches!(
            key,
            "variant"
                | "base_channels"
                | "feature_channels"
                | "gate_kernel"
                | "window"
                | "estm_width"
                | "rdb_count"
                | "rdb_layers"
                | "growth"
        )
    }
}

/// `true` for parameters that belong to the refinement module.
pub fn is_refiner_param(name: &str) -> bool {
    name.starts_with("estm.")
}

#[derive(Clone, Debug)]
enum Temporal {
    Stim(Box<Stim>),
    /// Three frame-wise convolutions.
    FrameCnn([Conv2d; 3]),
}

/// Outputs of one window.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    /// Per-frame coarse results.
    pub coarse: Vec<Var>,
    /// Refined center frame (the coarse center frame for variants without
    /// a refiner).
    pub refined: Var,
    pub stim: Option<StimOutput>,
}

/// The assembled network.
#[derive(Clone, Debug)]
pub struct Estinet {
    config: ModelConfig,
    sicm: Sicm,
    temporal: Temporal,
    refiner: Option<Estm>,
}

impl Estinet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let sicm = Sicm::new(config.sicm)?;
        let channels = config.sicm.feature_channels;
        let temporal = match config.variant.temporal_kind() {
            Some(kind) => Temporal::Stim(Box::new(Stim::new(StimConfig {
                channels,
                gate_kernel: config.gate_kernel,
                kind,
            })?)),
            None => Temporal::FrameCnn([
                Conv2d::same("cnn2d.conv1", channels, channels, 3),
                Conv2d::same("cnn2d.conv2", channels, channels, 3),
                Conv2d::same("cnn2d.conv3", channels, 3, 3),
            ]),
        };
        let refiner = match config.variant {
            Variant::Full | Variant::ConvLstm | Variant::BConvLstm => Some(Estm::new(config.estm)?),
            Variant::Estm2dcnn => Some(Estm::new_2dcnn(config.estm)?),
            Variant::Sicm2dcnn | Variant::StimN(_) => None,
        };
        if config.window() < 2 {
            return Err(Error::Config(format!("window must be ≥ 2, got {}", config.window())));
        }
        Ok(Self {
            config,
            sicm,
            temporal,
            refiner,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn sicm(&self) -> &Sicm {
        &self.sicm
    }

    pub fn stim(&self) -> Option<&Stim> {
        match &self.temporal {
            Temporal::Stim(s) => Some(s),
            Temporal::FrameCnn(_) => None,
        }
    }

    pub fn refiner(&self) -> Option<&Estm> {
        self.refiner.as_ref()
    }

    pub fn window(&self) -> usize {
        self.config.window()
    }

    pub fn center(&self) -> usize {
        self.config.center()
    }

    /// Fresh parameters: weights from `N(0, 0.01²)`, biases zero.
    pub fn init<E: Element>(&self, seed: u64) -> Result<ParamStore<E>> {
        let mut store = ParamStore::new(seed);
        let mut init = Initializer::new(seed);
        self.sicm.init(&mut store, &mut init)?;
        match &self.temporal {
            Temporal::Stim(s) => s.init(&mut store, &mut init)?,
            Temporal::FrameCnn(convs) => convs.iter().try_for_each(|c| c.init(&mut store, &mut init))?,
        }
        if let Some(r) = &self.refiner {
            r.init(&mut store, &mut init)?;
        }
        Ok(store)
    }

    fn check_window(&self, g: &Graph<impl Element>, frames: &[Var]) -> Result<()> {
        if frames.len() != self.window() {
            return Err(shape_err!(
                "window holds {} frames, model expects {}",
                frames.len(),
                self.window()
            ));
        }
        let first = g.shape(frames[0]);
        if frames.iter().any(|&f| g.shape(f) != first) {
            return Err(shape_err!("frames of one window must share a shape"));
        }
        Ok(())
    }

    /// SICM features of each frame.
    pub fn features<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, frames: &[Var]) -> Result<Vec<Var>> {
        frames.iter().map(|&f| self.sicm.forward(g, store, f)).collect()
    }

    /// Coarse frames from precomputed features.
    pub fn coarse_from_features<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        features: &[Var],
    ) -> Result<(Vec<Var>, Option<StimOutput>)> {
        match &self.temporal {
            Temporal::Stim(stim) => {
                let out = stim.forward(g, store, features)?;
                Ok((out.coarse.clone(), Some(out)))
            }
            Temporal::FrameCnn([c1, c2, c3]) => {
                let coarse = features
                    .iter()
                    .map(|&f| {
                        let y = c1.forward(g, store, f)?;
                        let y = g.relu(y)?;
                        let y = c2.forward(g, store, y)?;
                        let y = g.relu(y)?;
                        c3.forward(g, store, y)
                    })
                    .collect::<Result<_>>()?;
                Ok((coarse, None))
            }
        }
    }

    /// Coarse frames only (the first training stage).
    pub fn forward_coarse<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        rainy: &[Var],
    ) -> Result<(Vec<Var>, Option<StimOutput>)> {
        self.check_window(g, rainy)?;
        let features = self.features(g, store, rainy)?;
        self.coarse_from_features(g, store, &features)
    }

    /// Refined center frame from coarse frames.
    pub fn refine<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        coarse: &[Var],
        rainy: &[Var],
    ) -> Result<Var> {
        match &self.refiner {
            Some(estm) => estm.forward(g, store, coarse, rainy),
            None => Ok(coarse[self.center()]),
        }
    }

    pub fn forward<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, rainy: &[Var]) -> Result<ModelOutput> {
        let (coarse, stim) = self.forward_coarse(g, store, rainy)?;
        let refined = self.refine(g, store, &coarse, rainy)?;
        Ok(ModelOutput { coarse, refined, stim })
    }

    /// Every convolution executed for one `h × w` window.
    pub fn inventory(&self, h: usize, w: usize) -> Result<Vec<ConvSpec>> {
        let n = self.window();
        let per_frame = self.sicm.inventory(h, w)?;
        let mut specs = Vec::new();
        for _ in 0..n {
            specs.extend(per_frame.iter().cloned());
        }
        match &self.temporal {
            Temporal::Stim(s) => specs.extend(s.inventory(n, h, w)?),
            Temporal::FrameCnn(convs) => {
                for _ in 0..n {
                    for c in convs {
                        specs.push(c.spec(h, w)?);
                    }
                }
            }
        }
        if let Some(r) = &self.refiner {
            specs.extend(r.inventory(h, w)?);
        }
        Ok(specs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_roundtrip() {
        for v in [
            Variant::Full,
            Variant::Sicm2dcnn,
            Variant::ConvLstm,
            Variant::BConvLstm,
            Variant::StimN(3),
            Variant::Estm2dcnn,
        ] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("stim_n(6)".parse::<Variant>().is_err());
        assert!("lstm".parse::<Variant>().is_err());
    }

    #[test]
    fn config_pairs_roundtrip() {
        let c = ModelConfig {
            sicm: SicmConfig {
                base_channels: 4,
                ..Default::default()
            },
            variant: Variant::StimN(2),
            ..Default::default()
        };
        let pairs = c.to_pairs();
        let back = ModelConfig::from_pairs(pairs.iter().map(|(k, v)| (*k, v.as_str()))).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.window(), 2);
        assert_eq!(back.center(), 0);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            ModelConfig::from_pairs([("depth", "3")]),
            Err(Error::Config(_))
        ));
    }
}
