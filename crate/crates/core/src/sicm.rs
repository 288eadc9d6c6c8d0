//! Frame-wise spatial feature extractor.
//!
//! Encoder: an input convolution at full resolution followed by four
//! down-projecting residual blocks (1/2 … 1/16). Decoder: four
//! up-projecting residual blocks back to full resolution. The four encoder
//! block outputs are upsampled to full resolution and concatenated with the
//! decoder output before the final fusion convolution. The same parameters
//! are applied to every frame.

use crate::engine::{Element, Graph, Initializer, ParamStore, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Conv2d, ConvSpec};

/// Spatial reduction factor of the deepest encoder stage.
pub const DOWNSCALE: usize = 16;
const STAGES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SicmConfig {
    pub input_channels: usize,
    pub base_channels: usize,
    pub feature_channels: usize,
}

impl Default for SicmConfig {
    fn default() -> Self {
        Self {
            input_channels: 3,
            base_channels: 16,
            feature_channels: 16,
        }
    }
}

impl SicmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.base_channels == 0 || self.feature_channels == 0 {
            return Err(Error::Config(format!("SICM channel counts must be ≥ 1: {self:?}")));
        }
        Ok(())
    }

    /// Channels of encoder stage `i` (1-based): doubling, capped at 8×base.
    pub fn stage_channels(&self, stage: usize) -> usize {
        (self.base_channels << stage).min(8 * self.base_channels)
    }
}

#[derive(Clone, Debug)]
enum Resample {
    Identity,
    /// 2×2 stride-2 convolution.
    Down(Conv2d),
    /// Nearest 2× upsampling followed by a 3×3 convolution.
    Up(Conv2d),
}

/// Residual block `y = r + conv₂(relu(conv₁(r)))`, where `r` is the
/// (optionally resampled) input.
#[derive(Clone, Debug)]
pub struct ResBlock {
    resample: Resample,
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResBlock {
    pub fn plain(name: &str, channels: usize) -> Self {
        Self::with_resample(name, Resample::Identity, channels)
    }

    pub fn down(name: &str, in_channels: usize, out_channels: usize) -> Self {
        let proj = Conv2d::strided(format!("{name}.down"), in_channels, out_channels, 2, 2, 0);
        Self::with_resample(name, Resample::Down(proj), out_channels)
    }

    pub fn up(name: &str, in_channels: usize, out_channels: usize) -> Self {
        let proj = Conv2d::same(format!("{name}.up"), in_channels, out_channels, 3);
        Self::with_resample(name, Resample::Up(proj), out_channels)
    }

    fn with_resample(name: &str, resample: Resample, channels: usize) -> Self {
        Self {
            resample,
            conv1: Conv2d::same(format!("{name}.conv1"), channels, channels, 3),
            conv2: Conv2d::same(format!("{name}.conv2"), channels, channels, 3),
        }
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        match &self.resample {
            Resample::Identity => {}
            Resample::Down(c) | Resample::Up(c) => c.init(store, init)?,
        }
        self.conv1.init(store, init)?;
        self.conv2.init(store, init)
    }

    pub fn forward<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        let r = match &self.resample {
            Resample::Identity => x,
            Resample::Down(c) => c.forward(g, store, x)?,
            Resample::Up(c) => {
                let u = g.upsample_nearest2x(x)?;
                c.forward(g, store, u)?
            }
        };
        let y = self.conv1.forward(g, store, r)?;
        let y = g.relu(y)?;
        let y = self.conv2.forward(g, store, y)?;
        g.add(r, y)
    }

    /// Convolutions for an `h × w` input; returns them and the output size.
    fn inventory(&self, h: usize, w: usize) -> Result<(Vec<ConvSpec>, usize, usize)> {
        let mut specs = Vec::new();
        let (h, w) = match &self.resample {
            Resample::Identity => (h, w),
            Resample::Down(c) => {
                specs.push(c.spec(h, w)?);
                (h / 2, w / 2)
            }
            Resample::Up(c) => {
                specs.push(c.spec(2 * h, 2 * w)?);
                (2 * h, 2 * w)
            }
        };
        specs.push(self.conv1.spec(h, w)?);
        specs.push(self.conv2.spec(h, w)?);
        Ok((specs, h, w))
    }
}

/// Shapes observed during one forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SicmTrace {
    /// Output shape of each encoder block, shallowest first.
    pub encoder_shapes: Vec<Vec<usize>>,
    /// Shape of the deepest feature map.
    pub deepest: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Sicm {
    config: SicmConfig,
    input: Conv2d,
    encoder: Vec<ResBlock>,
    decoder: Vec<ResBlock>,
    fusion: Conv2d,
}

impl Sicm {
    pub fn new(config: SicmConfig) -> Result<Self> {
        config.validate()?;
        let base = config.base_channels;
        let input = Conv2d::same("sicm.input", config.input_channels, base, 3);
        let encoder = (1..=STAGES)
            .map(|i| {
                let cin = if i == 1 { base } else { config.stage_channels(i - 1) };
                ResBlock::down(&format!("sicm.enc{i}"), cin, config.stage_channels(i))
            })
            .collect();
        let decoder = (1..=STAGES)
            .map(|i| {
                let cin = config.stage_channels(STAGES + 1 - i);
                let cout = if i == STAGES {
                    base
                } else {
                    config.stage_channels(STAGES - i)
                };
                ResBlock::up(&format!("sicm.dec{i}"), cin, cout)
            })
            .collect();
        let fused: usize = base + (1..=STAGES).map(|i| config.stage_channels(i)).sum::<usize>();
        let fusion = Conv2d::same("sicm.fusion", fused, config.feature_channels, 1);
        Ok(Self {
            config,
            input,
            encoder,
            decoder,
            fusion,
        })
    }

    pub fn config(&self) -> &SicmConfig {
        &self.config
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        self.input.init(store, init)?;
        for block in self.encoder.iter().chain(&self.decoder) {
            block.init(store, init)?;
        }
        self.fusion.init(store, init)
    }

    /// Checks that `shape` is `[N, input_channels, H, W]` with H, W divisible by 16.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != self.config.input_channels {
            return Err(shape_err!(
                "SICM expects [N,{},H,W] frames, got {:?}",
                self.config.input_channels,
                shape
            ));
        }
        check_divisible(shape[2], shape[3])
    }

    pub fn forward<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, frame: Var) -> Result<Var> {
        self.forward_traced(g, store, frame).map(|(v, _)| v)
    }

    pub fn forward_traced<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        frame: Var,
    ) -> Result<(Var, SicmTrace)> {
        self.check_input(g.shape(frame))?;
        let mut trace = SicmTrace::default();
        let mut x = self.input.forward(g, store, frame)?;
        let mut skips = Vec::with_capacity(STAGES);
        for block in &self.encoder {
            x = block.forward(g, store, x)?;
            trace.encoder_shapes.push(g.shape(x).to_vec());
            skips.push(x);
        }
        trace.deepest = g.shape(x).to_vec();
        for block in &self.decoder {
            x = block.forward(g, store, x)?;
        }
        let mut parts = vec![x];
        for (level, &skip) in skips.iter().enumerate() {
            let mut up = skip;
            for _ in 0..=level {
                up = g.upsample_nearest2x(up)?;
            }
            parts.push(up);
        }
        let cat = g.concat(&parts, 1)?;
        Ok((self.fusion.forward(g, store, cat)?, trace))
    }

    /// Every convolution executed for one `h × w` frame.
    pub fn inventory(&self, h: usize, w: usize) -> Result<Vec<ConvSpec>> {
        check_divisible(h, w)?;
        let mut specs = vec![self.input.spec(h, w)?];
        let (mut ch, mut cw) = (h, w);
        for block in self.encoder.iter().chain(&self.decoder) {
            let (s, nh, nw) = block.inventory(ch, cw)?;
            specs.extend(s);
            (ch, cw) = (nh, nw);
        }
        specs.push(self.fusion.spec(h, w)?);
        Ok(specs)
    }
}

fn check_divisible(h: usize, w: usize) -> Result<()> {
    if !h.is_multiple_of(DOWNSCALE) || !w.is_multiple_of(DOWNSCALE) || h == 0 || w == 0 {
        return Err(shape_err!("frame size {}×{} is not divisible by {}", h, w, DOWNSCALE));
    }
    Ok(())
}
