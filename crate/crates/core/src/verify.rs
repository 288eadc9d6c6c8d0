//! Finite-difference gradient checks of every module, in `f64`.
//!
//! Each target builds a small instance of a module, fills its parameters
//! with fan-in scaled Gaussian values (biases included, so no gradient is
//! trivially zero) and feeds it a fixed random input.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::{gradcheck, GradcheckConfig, GradcheckReport, Graph, Initializer, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::estm::{Estm, EstmConfig};
use crate::sicm::{Sicm, SicmConfig};
use crate::stim::{Stim, StimConfig, TemporalKind};

/// Largest relative error a passing check may show.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckTarget {
    /// Every tape operator.
    Engine,
    /// Feature extractor on a 32×32 frame.
    Sicm,
    /// Bidirectional interaction cell over 2 steps of 8×8 features.
    Stim,
    /// Refiner over a 5-frame 16×16 window.
    Estm,
}

impl CheckTarget {
    pub const ALL: [CheckTarget; 4] = [
        CheckTarget::Engine,
        CheckTarget::Sicm,
        CheckTarget::Stim,
        CheckTarget::Estm,
    ];

    /// Parses a comma-separated list of module names; `all` expands to
    /// every target.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut targets = Vec::new();
        for name in s.split(',').map(str::trim) {
            let more = if name == "all" {
                Self::ALL.to_vec()
            } else {
                vec![name.parse()?]
            };
            for t in more {
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
        }
        Ok(targets)
    }
}

impl FromStr for CheckTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "engine" => Ok(CheckTarget::Engine),
            "sicm" => Ok(CheckTarget::Sicm),
            "stim" => Ok(CheckTarget::Stim),
            "estm" => Ok(CheckTarget::Estm),
            other => Err(Error::Config(format!("unknown gradcheck module `{other}`"))),
        }
    }
}

impl fmt::Display for CheckTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckTarget::Engine => "engine",
            CheckTarget::Sicm => "sicm",
            CheckTarget::Stim => "stim",
            CheckTarget::Estm => "estm",
        })
    }
}

/// Refills every parameter with `N(0, 1/fan_in)` weights and `N(0, 0.1²)`
/// biases (rank-1 tensors).
pub fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, entry) in store.iter_mut() {
        let shape = entry.value.shape().to_vec();
        let std = if shape.len() == 1 {
            0.1
        } else {
            let fan_in = entry.value.numel() / shape[0];
            (1.0 / fan_in as f64).sqrt()
        };
        let normal = Normal::new(0.0, std).expect("positive std");
        entry
            .value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = normal.sample(&mut rng));
    }
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.5, 0.3).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| normal.sample(&mut rng))
}

fn merge(mut a: GradcheckReport, b: GradcheckReport) -> GradcheckReport {
    a.entries.extend(b.entries);
    a.entries.sort_by(|x, y| y.max_rel_error.total_cmp(&x.max_rel_error));
    a
}

fn check_engine(seed: u64, config: GradcheckConfig) -> Result<GradcheckReport> {
    let mut store = ParamStore::<f64>::new(seed);
    let shapes: [(&str, &[usize]); 6] = [
        ("w_same", &[3, 2, 3, 3]),
        ("b_same", &[3]),
        ("w_down", &[2, 3, 2, 2]),
        ("offset", &[1, 2, 4, 4]),
        ("w_vol", &[2, 4, 2, 3, 3]),
        ("b_vol", &[2]),
    ];
    for (name, shape) in shapes {
        store.insert(name, Tensor::zeros(shape.to_vec()))?;
    }
    randomize(&mut store, seed);
    let x = random_tensor(&[1, 2, 8, 8], seed ^ 1);
    let target = random_tensor(&[1, 2, 8, 8], seed ^ 2);

    let operators = |g: &mut Graph<f64>, p: &ParamStore<f64>| -> Result<Var> {
        let x = g.constant(x.clone());
        let (w, b) = (g.param(p, "w_same")?, g.param(p, "b_same")?);
        let y = g.conv2d(x, w, Some(b), 1, 1)?;
        let y = g.relu(y)?;
        let wd = g.param(p, "w_down")?;
        let y = g.conv2d(y, wd, None, 2, 0)?;
        let (s, t) = (g.sigmoid(y)?, g.tanh(y)?);
        let m = g.mul(s, t)?;
        let offset = g.param(p, "offset")?;
        let half = g.scale(offset, 0.5)?;
        let d = g.sub(m, half)?;
        let u = g.upsample_nearest2x(d)?;
        let c = g.concat(&[u, x], 1)?;
        let v = g.reshape(c, &[1, 4, 1, 8, 8])?;
        let v = g.concat(&[v, v], 2)?;
        let (wv, bv) = (g.param(p, "w_vol")?, g.param(p, "b_vol")?);
        let z = g.conv3d(v, wv, Some(bv), [1, 1, 1], [0, 1, 1])?;
        let z = g.reshape(z, &[1, 2, 8, 8])?;
        g.add(z, u)
    };
    let reductions = |g: &mut Graph<f64>, p: &ParamStore<f64>| -> Result<Var> {
        let out = operators(g, p)?;
        let t = g.constant(target.clone());
        let e = g.mse(out, t)?;
        let m = g.mean(out)?;
        let (e, m) = (g.reshape(e, &[1])?, g.reshape(m, &[1])?);
        g.concat(&[e, m], 0)
    };
    let a = gradcheck(&store, operators, seed, config)?;
    let b = gradcheck(&store, reductions, seed + 1, config)?;
    Ok(merge(a, b))
}

fn check_sicm(seed: u64, config: GradcheckConfig) -> Result<GradcheckReport> {
    let sicm = Sicm::new(SicmConfig {
        input_channels: 3,
        base_channels: 2,
        feature_channels: 2,
    })?;
    let mut store = ParamStore::new(seed);
    sicm.init(&mut store, &mut Initializer::new(seed))?;
    randomize(&mut store, seed);
    let x = random_tensor(&[1, 3, 32, 32], seed ^ 3);
    gradcheck(
        &store,
        |g, p| {
            let x = g.constant(x.clone());
            sicm.forward(g, p, x)
        },
        seed,
        config,
    )
}

fn check_stim(seed: u64, config: GradcheckConfig) -> Result<GradcheckReport> {
    let stim = Stim::new(StimConfig {
        channels: 2,
        gate_kernel: 3,
        kind: TemporalKind::Interaction,
    })?;
    let mut store = ParamStore::new(seed);
    stim.init(&mut store, &mut Initializer::new(seed))?;
    randomize(&mut store, seed);
    let frames = [
        random_tensor(&[1, 2, 8, 8], seed ^ 4),
        random_tensor(&[1, 2, 8, 8], seed ^ 5),
    ];
    gradcheck(
        &store,
        |g, p| {
            let features: Vec<Var> = frames.iter().map(|f| g.constant(f.clone())).collect();
            let out = stim.forward(g, p, &features)?;
            g.concat(&out.coarse, 1)
        },
        seed,
        config,
    )
}

fn check_estm(seed: u64, config: GradcheckConfig) -> Result<GradcheckReport> {
    let estm = Estm::new(EstmConfig {
        window: 5,
        width: 2,
        rdb_count: 1,
        rdb_layers: 2,
        growth: 2,
    })?;
    let mut store = ParamStore::new(seed);
    estm.init(&mut store, &mut Initializer::new(seed))?;
    randomize(&mut store, seed);
    let coarse: Vec<_> = (0..5)
        .map(|t| random_tensor(&[1, 3, 16, 16], seed ^ (10 + t)))
        .collect();
    let rainy: Vec<_> = (0..5)
        .map(|t| random_tensor(&[1, 3, 16, 16], seed ^ (20 + t)))
        .collect();
    gradcheck(
        &store,
        |g, p| {
            let c: Vec<Var> = coarse.iter().map(|f| g.constant(f.clone())).collect();
            let r: Vec<Var> = rainy.iter().map(|f| g.constant(f.clone())).collect();
            estm.forward(g, p, &c, &r)
        },
        seed,
        config,
    )
}

/// Gradient check of one module with the default sampling.
pub fn check(target: CheckTarget, seed: u64) -> Result<GradcheckReport> {
    check_with(target, seed, GradcheckConfig::default())
}

pub fn check_with(target: CheckTarget, seed: u64, config: GradcheckConfig) -> Result<GradcheckReport> {
    match target {
        CheckTarget::Engine => check_engine(seed, config),
        CheckTarget::Sicm => check_sicm(seed, config),
        CheckTarget::Stim => check_stim(seed, config),
        CheckTarget::Estm => check_estm(seed, config),
    }
}
