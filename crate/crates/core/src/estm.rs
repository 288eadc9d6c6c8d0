//! Refinement of the window's center frame.
//!
//! Coarse and rainy frames are stacked per frame along channels (3 + 3)
//! and along time into a `[N, 6, n, H, W]` volume. Two 3D convolutions
//! without temporal padding collapse the time axis to one step; residual
//! dense blocks then work in 2D, and a final convolution predicts a
//! residual that is added to the rainy center frame.

use crate::engine::{Element, Graph, Initializer, ParamStore, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Conv2d, Conv3d, ConvSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstmConfig {
    /// Frames per window; must be odd and ≥ 3.
    pub window: usize,
    /// Channels produced by the temporal stage and carried through the RDBs.
    pub width: usize,
    pub rdb_count: usize,
    pub rdb_layers: usize,
    pub growth: usize,
}

impl Default for EstmConfig {
    fn default() -> Self {
        Self {
            window: 5,
            width: 16,
            rdb_count: 3,
            rdb_layers: 4,
            growth: 16,
        }
    }
}

impl EstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "refinement window must be odd and ≥ 3, got {}",
                self.window
            )));
        }
        if self.width == 0 || self.growth == 0 || self.rdb_layers == 0 {
            return Err(Error::Config(format!("refinement widths must be ≥ 1: {self:?}")));
        }
        Ok(())
    }

    /// Temporal kernel extent of each 3D layer: two valid convolutions of
    /// extent `(n + 1) / 2` take `n` steps to one (5 → 3 → 1).
    pub fn temporal_kernel(&self) -> usize {
        self.window.div_ceil(2)
    }
}

/// Residual dense block: densely connected 3×3 convolutions, a 1×1 local
/// fusion back to the input width, and a local residual connection.
#[derive(Clone, Debug)]
pub struct Rdb {
    layers: Vec<Conv2d>,
    fusion: Conv2d,
}

impl Rdb {
    pub fn new(name: &str, channels: usize, growth: usize, layers: usize) -> Self {
        Self {
            layers: (0..layers)
                .map(|j| Conv2d::same(format!("{name}.dense{j}"), channels + j * growth, growth, 3))
                .collect(),
            fusion: Conv2d::same(format!("{name}.fusion"), channels + layers * growth, channels, 1),
        }
    }

    pub fn fusion(&self) -> &Conv2d {
        &self.fusion
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        for l in &self.layers {
            l.init(store, init)?;
        }
        self.fusion.init(store, init)
    }

    pub fn forward<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        let mut features = vec![x];
        for layer in &self.layers {
            let input = if features.len() == 1 {
                x
            } else {
                g.concat(&features, 1)?
            };
            let y = layer.forward(g, store, input)?;
            features.push(g.relu(y)?);
        }
        let all = g.concat(&features, 1)?;
        let fused = self.fusion.forward(g, store, all)?;
        g.add(x, fused)
    }

    fn inventory(&self, h: usize, w: usize) -> Result<Vec<ConvSpec>> {
        self.layers
            .iter()
            .chain(std::iter::once(&self.fusion))
            .map(|c| c.spec(h, w))
            .collect()
    }
}

#[derive(Clone, Debug)]
enum TemporalStage {
    Conv3d([Conv3d; 2]),
    /// Ablation: 2D convolutions over the center frame only.
    Conv2d([Conv2d; 2]),
}

/// Temporal extents observed during one forward pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EstmTrace {
    /// Input volume, after the first and after the second temporal layer.
    pub temporal_extents: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Estm {
    config: EstmConfig,
    temporal: TemporalStage,
    rdbs: Vec<Rdb>,
    output: Conv2d,
}

const PAIR_CHANNELS: usize = 6;

impl Estm {
    pub fn new(config: EstmConfig) -> Result<Self> {
        Self::build(config, false)
    }

    /// The ablation that replaces the 3D convolutions by 2D ones on the
    /// center frame.
    pub fn new_2dcnn(config: EstmConfig) -> Result<Self> {
        Self::build(config, true)
    }

    fn build(config: EstmConfig, flat: bool) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let temporal = if flat {
            TemporalStage::Conv2d([
                Conv2d::same("estm.t1", PAIR_CHANNELS, w, 3),
                Conv2d::same("estm.t2", w, w, 3),
            ])
        } else {
            let kt = config.temporal_kernel();
            let layer = |name: &str, cin: usize| Conv3d {
                name: name.to_string(),
                in_channels: cin,
                out_channels: w,
                kernel: [kt, 3, 3],
                stride: [1, 1, 1],
                padding: [0, 1, 1],
            };
            TemporalStage::Conv3d([layer("estm.t1", PAIR_CHANNELS), layer("estm.t2", w)])
        };
        Ok(Self {
            config,
            temporal,
            rdbs: (0..config.rdb_count)
                .map(|i| Rdb::new(&format!("estm.rdb{i}"), w, config.growth, config.rdb_layers))
                .collect(),
            output: Conv2d::same("estm.output", w, 3, 3),
        })
    }

    pub fn config(&self) -> &EstmConfig {
        &self.config
    }

    pub fn rdbs(&self) -> &[Rdb] {
        &self.rdbs
    }

    pub fn center(&self) -> usize {
        self.config.window / 2
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        match &self.temporal {
            TemporalStage::Conv3d(layers) => layers.iter().try_for_each(|l| l.init(store, init))?,
            TemporalStage::Conv2d(layers) => layers.iter().try_for_each(|l| l.init(store, init))?,
        }
        for rdb in &self.rdbs {
            rdb.init(store, init)?;
        }
        self.output.init(store, init)
    }

    pub fn forward<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        coarse: &[Var],
        rainy: &[Var],
    ) -> Result<Var> {
        self.forward_traced(g, store, coarse, rainy).map(|(v, _)| v)
    }

    pub fn forward_traced<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        coarse: &[Var],
        rainy: &[Var],
    ) -> Result<(Var, EstmTrace)> {
        let n = self.config.window;
        if coarse.len() != n || rainy.len() != n {
            return Err(shape_err!(
                "refinement expects {} coarse and rainy frames, got {} and {}",
                n,
                coarse.len(),
                rainy.len()
            ));
        }
        let frame = g.shape(rainy[0]).to_vec();
        if frame.len() != 4 || frame[1] != 3 {
            return Err(shape_err!("frames must be [N,3,H,W], got {:?}", frame));
        }
        for &v in coarse.iter().chain(rainy) {
            if g.shape(v) != frame.as_slice() {
                return Err(shape_err!("frame shape {:?} differs from {:?}", g.shape(v), frame));
            }
        }
        let (batch, h, w) = (frame[0], frame[2], frame[3]);
        let center = self.center();
        let mut trace = EstmTrace::default();

        let mut x = match &self.temporal {
            TemporalStage::Conv3d([first, second]) => {
                let mut steps = Vec::with_capacity(n);
                for t in 0..n {
                    let pair = g.concat(&[coarse[t], rainy[t]], 1)?;
                    steps.push(g.reshape(pair, &[batch, PAIR_CHANNELS, 1, h, w])?);
                }
                let volume = g.concat(&steps, 2)?;
                trace.temporal_extents.push(g.shape(volume)[2]);
                let y = first.forward(g, store, volume)?;
                let y = g.relu(y)?;
                trace.temporal_extents.push(g.shape(y)[2]);
                let y = second.forward(g, store, y)?;
                let y = g.relu(y)?;
                trace.temporal_extents.push(g.shape(y)[2]);
                if g.shape(y)[2] != 1 {
                    return Err(shape_err!("temporal stage left {} steps", g.shape(y)[2]));
                }
                g.reshape(y, &[batch, self.config.width, h, w])?
            }
            TemporalStage::Conv2d([first, second]) => {
                let pair = g.concat(&[coarse[center], rainy[center]], 1)?;
                let y = first.forward(g, store, pair)?;
                let y = g.relu(y)?;
                let y = second.forward(g, store, y)?;
                g.relu(y)?
            }
        };
        for rdb in &self.rdbs {
            x = rdb.forward(g, store, x)?;
        }
        let residual = self.output.forward(g, store, x)?;
        Ok((g.add(rainy[center], residual)?, trace))
    }

    pub fn inventory(&self, h: usize, w: usize) -> Result<Vec<ConvSpec>> {
        let n = self.config.window;
        let mut specs = match &self.temporal {
            TemporalStage::Conv3d([a, b]) => {
                let first = a.spec(n, h, w)?;
                let second = b.spec(first.output[0], h, w)?;
                vec![first, second]
            }
            TemporalStage::Conv2d([a, b]) => vec![a.spec(h, w)?, b.spec(h, w)?],
        };
        for rdb in &self.rdbs {
            specs.extend(rdb.inventory(h, w)?);
        }
        specs.push(self.output.spec(h, w)?);
        Ok(specs)
    }
}
