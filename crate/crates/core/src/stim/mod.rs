//! Spatio-temporal interaction module.
//!
//! A convolutional bidirectional LSTM over per-frame feature maps. Each
//! gate convolves the channel concatenation of the current frame's
//! features, the previous frame's features and the previous hidden state:
//!
//! ```text
//! f = σ(W_f ⋆ [x_t, x_{t−1}, h] + b_f)    i = σ(W_i ⋆ [...] + b_i)
//! o = σ(W_o ⋆ [...] + b_o)                 C̃ = tanh(W_C ⋆ [...] + b_C)
//! C' = f ⊙ C + i ⊙ C̃                       h' = Head([o, tanh C'])
//! ```
//!
//! `Head` is two 3×3 convolutions with a ReLU between. The sequence is run
//! forward with one parameter set and in reversed order with another; a
//! fusion head maps `[h_t, h'_t]` to a 3-channel coarse frame.
//!
//! The ConvLSTM ablations drop the `x_{t−1}` input (and, for the
//! unidirectional one, the reverse pass).

pub mod reference;

use std::fmt;
use std::str::FromStr;

use crate::engine::{Element, Graph, Initializer, ParamStore, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Conv2d, ConvSpec};

pub use reference::ReferenceLstm;

/// Temporal module flavour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemporalKind {
    /// Interaction cell, both directions.
    Interaction,
    /// Plain convolutional LSTM, forward direction only.
    ConvLstm,
    /// Plain convolutional LSTM, both directions.
    BConvLstm,
}

impl TemporalKind {
    pub fn reads_previous_frame(self) -> bool {
        self == TemporalKind::Interaction
    }

    pub fn bidirectional(self) -> bool {
        self != TemporalKind::ConvLstm
    }
}

impl FromStr for TemporalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stim" | "interaction" => Ok(TemporalKind::Interaction),
            "convlstm" => Ok(TemporalKind::ConvLstm),
            "b_convlstm" => Ok(TemporalKind::BConvLstm),
            other => Err(Error::Config(format!("unknown temporal variant `{other}`"))),
        }
    }
}

impl fmt::Display for TemporalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalKind::Interaction => "stim",
            TemporalKind::ConvLstm => "convlstm",
            TemporalKind::BConvLstm => "b_convlstm",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StimConfig {
    /// Channels of the incoming features and of `h`, `C`.
    pub channels: usize,
    pub gate_kernel: usize,
    pub kind: TemporalKind,
}

/// Recurrent state of one direction.
#[derive(Clone, Copy, Debug)]
pub struct StimState {
    pub h: Var,
    pub c: Var,
}

impl StimState {
    pub fn zeros<E: Element>(g: &mut Graph<E>, shape: &[usize]) -> Self {
        let h = g.constant(Tensor::zeros(shape));
        let c = g.constant(Tensor::zeros(shape));
        Self { h, c }
    }
}

/// Gate activations of one cell step.
#[derive(Clone, Copy, Debug)]
pub struct GateVars {
    pub forget: Var,
    pub input: Var,
    pub output: Var,
    pub candidate: Var,
}

const GATES: [&str; 4] = ["forget", "input", "cell", "output"];

/// One direction's cell parameters and wiring.
#[derive(Clone, Debug)]
pub struct StimCell {
    kind: TemporalKind,
    channels: usize,
    gates: [Conv2d; 4],
    head1: Conv2d,
    head2: Conv2d,
}

impl StimCell {
    pub fn new(prefix: &str, config: &StimConfig) -> Self {
        let c = config.channels;
        let gate_in = if config.kind.reads_previous_frame() {
            3 * c
        } else {
            2 * c
        };
        let k = config.gate_kernel;
        Self {
            kind: config.kind,
            channels: c,
            gates: GATES.map(|gate| Conv2d::same(format!("{prefix}.gate_{gate}"), gate_in, c, k)),
            head1: Conv2d::same(format!("{prefix}.head1"), 2 * c, c, 3),
            head2: Conv2d::same(format!("{prefix}.head2"), c, c, 3),
        }
    }

    pub fn gate(&self, index: usize) -> &Conv2d {
        &self.gates[index]
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        for gate in &self.gates {
            gate.init(store, init)?;
        }
        self.head1.init(store, init)?;
        self.head2.init(store, init)
    }

    /// Advances the state by one frame. `previous` is ignored by the plain
    /// ConvLSTM cell.
    pub fn step<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        current: Var,
        previous: Var,
        state: StimState,
    ) -> Result<(StimState, GateVars)> {
        let fs = g.shape(current).to_vec();
        if fs.len() != 4 || fs[1] != self.channels {
            return Err(shape_err!(
                "STIM expects [N,{},H,W] features, got {:?}",
                self.channels,
                fs
            ));
        }
        for (what, v) in [("previous features", previous), ("h", state.h), ("C", state.c)] {
            if g.shape(v) != fs.as_slice() {
                return Err(shape_err!(
                    "{what} shape {:?} differs from features {:?}",
                    g.shape(v),
                    fs
                ));
            }
        }
        let stacked = if self.kind.reads_previous_frame() {
            g.concat(&[current, previous, state.h], 1)?
        } else {
            g.concat(&[current, state.h], 1)?
        };
        let pre: Vec<Var> = self
            .gates
            .iter()
            .map(|gate| gate.forward(g, store, stacked))
            .collect::<Result<_>>()?;
        let forget = g.sigmoid(pre[0])?;
        let input = g.sigmoid(pre[1])?;
        let candidate = g.tanh(pre[2])?;
        let output = g.sigmoid(pre[3])?;

        let kept = g.mul(forget, state.c)?;
        let written = g.mul(input, candidate)?;
        let c = g.add(kept, written)?;

        let squashed = g.tanh(c)?;
        let head_in = g.concat(&[output, squashed], 1)?;
        let y = self.head1.forward(g, store, head_in)?;
        let y = g.relu(y)?;
        let h = self.head2.forward(g, store, y)?;
        Ok((
            StimState { h, c },
            GateVars {
                forget,
                input,
                output,
                candidate,
            },
        ))
    }

    fn inventory(&self, h: usize, w: usize) -> Result<Vec<ConvSpec>> {
        let mut specs: Vec<ConvSpec> = self.gates.iter().map(|c| c.spec(h, w)).collect::<Result<_>>()?;
        specs.push(self.head1.spec(h, w)?);
        specs.push(self.head2.spec(h, w)?);
        Ok(specs)
    }
}

/// Everything one temporal pass produced.
#[derive(Clone, Debug)]
pub struct StimOutput {
    /// One 3-channel frame per input frame.
    pub coarse: Vec<Var>,
    /// Forward-direction hidden states, in time order.
    pub hidden_forward: Vec<Var>,
    /// Reverse-direction hidden states, re-indexed to time order.
    pub hidden_backward: Option<Vec<Var>>,
    /// Gate activations of every step in both directions.
    pub gates: Vec<GateVars>,
}

#[derive(Clone, Debug)]
pub struct Stim {
    config: StimConfig,
    forward_cell: StimCell,
    backward_cell: Option<StimCell>,
    fusion1: Conv2d,
    fusion2: Conv2d,
}

impl Stim {
    pub fn new(config: StimConfig) -> Result<Self> {
        if config.channels == 0 || config.gate_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "STIM needs ≥ 1 channel and an odd gate kernel: {config:?}"
            )));
        }
        let directions = if config.kind.bidirectional() { 2 } else { 1 };
        let c = config.channels;
        Ok(Self {
            config,
            forward_cell: StimCell::new("stim.fwd", &config),
            backward_cell: config.kind.bidirectional().then(|| StimCell::new("stim.bwd", &config)),
            fusion1: Conv2d::same("stim.fuse1", directions * c, c, 3),
            fusion2: Conv2d::same("stim.fuse2", c, 3, 3),
        })
    }

    pub fn config(&self) -> &StimConfig {
        &self.config
    }

    pub fn forward_cell(&self) -> &StimCell {
        &self.forward_cell
    }

    pub fn backward_cell(&self) -> Option<&StimCell> {
        self.backward_cell.as_ref()
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        self.forward_cell.init(store, init)?;
        if let Some(cell) = &self.backward_cell {
            cell.init(store, init)?;
        }
        self.fusion1.init(store, init)?;
        self.fusion2.init(store, init)
    }

    pub fn forward<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, features: &[Var]) -> Result<StimOutput> {
        if features.len() < 2 {
            return Err(Error::Contract(format!(
                "temporal module needs at least 2 frames, got {}",
                features.len()
            )));
        }
        let shape = g.shape(features[0]).to_vec();
        let mut gates = Vec::new();
        let hidden_forward = run_direction(g, store, &self.forward_cell, features, &shape, &mut gates)?;
        let hidden_backward = match &self.backward_cell {
            Some(cell) => {
                let reversed: Vec<Var> = features.iter().rev().copied().collect();
                let mut h = run_direction(g, store, cell, &reversed, &shape, &mut gates)?;
                h.reverse();
                Some(h)
            }
            None => None,
        };
        let mut coarse = Vec::with_capacity(features.len());
        for t in 0..features.len() {
            let joined = match &hidden_backward {
                Some(back) => g.concat(&[hidden_forward[t], back[t]], 1)?,
                None => hidden_forward[t],
            };
            let y = self.fusion1.forward(g, store, joined)?;
            let y = g.relu(y)?;
            coarse.push(self.fusion2.forward(g, store, y)?);
        }
        Ok(StimOutput {
            coarse,
            hidden_forward,
            hidden_backward,
            gates,
        })
    }

    /// Convolutions executed for `frames` frames of size `h × w`.
    pub fn inventory(&self, frames: usize, h: usize, w: usize) -> Result<Vec<ConvSpec>> {
        let mut specs = Vec::new();
        for cell in std::iter::once(&self.forward_cell).chain(&self.backward_cell) {
            let step = cell.inventory(h, w)?;
            for _ in 0..frames {
                specs.extend(step.iter().cloned());
            }
        }
        for _ in 0..frames {
            specs.push(self.fusion1.spec(h, w)?);
            specs.push(self.fusion2.spec(h, w)?);
        }
        Ok(specs)
    }
}

fn run_direction<E: Element>(
    g: &mut Graph<E>,
    store: &ParamStore<E>,
    cell: &StimCell,
    features: &[Var],
    shape: &[usize],
    gates: &mut Vec<GateVars>,
) -> Result<Vec<Var>> {
    let mut state = StimState::zeros(g, shape);
    let zeros = state.h;
    let mut hidden = Vec::with_capacity(features.len());
    for (t, &x) in features.iter().enumerate() {
        let previous = if t == 0 { zeros } else { features[t - 1] };
        let (next, gv) = cell.step(g, store, x, previous, state)?;
        gates.push(gv);
        hidden.push(next.h);
        state = next;
    }
    Ok(hidden)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> StimConfig {
        StimConfig {
            channels: 2,
            gate_kernel: 3,
            kind: TemporalKind::Interaction,
        }
    }

    fn zero_store(stim: &Stim) -> ParamStore<f64> {
        let mut store = ParamStore::new(0);
        stim.init(&mut store, &mut Initializer::new(0)).unwrap();
        store.zero_values();
        store
    }

    #[test]
    fn zero_parameters_zero_state() {
        let stim = Stim::new(config()).unwrap();
        let store = zero_store(&stim);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn([1, 2, 4, 4], |i| i as f64 * 0.1));
        let state = StimState::zeros(&mut g, &[1, 2, 4, 4]);
        let prev = state.h;
        let (next, gates) = stim.forward_cell().step(&mut g, &store, x, prev, state).unwrap();
        assert!(g.value(gates.forget).data().iter().all(|&v| v == 0.5));
        assert!(g.value(gates.candidate).data().iter().all(|&v| v == 0.0));
        assert!(g.value(next.c).data().iter().all(|&v| v == 0.0));
        assert!(g.value(next.h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forget_gate_halves_memory_with_zero_parameters() {
        let stim = Stim::new(config()).unwrap();
        let store = zero_store(&stim);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full([1, 2, 4, 4], 0.3));
        let h = g.constant(Tensor::zeros([1, 2, 4, 4]));
        let c = g.constant(Tensor::from_fn([1, 2, 4, 4], |i| i as f64 - 7.0));
        let (next, _) = stim
            .forward_cell()
            .step(&mut g, &store, x, x, StimState { h, c })
            .unwrap();
        for (a, b) in g.value(next.c).data().iter().zip(g.value(c).data()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn rejects_single_frame() {
        let stim = Stim::new(config()).unwrap();
        let store = zero_store(&stim);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros([1, 2, 4, 4]));
        assert!(matches!(stim.forward(&mut g, &store, &[x]), Err(Error::Contract(_))));
    }

    #[test]
    fn rejects_state_shape_mismatch() {
        let stim = Stim::new(config()).unwrap();
        let store = zero_store(&stim);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros([1, 2, 4, 4]));
        let state = StimState::zeros(&mut g, &[1, 2, 2, 2]);
        assert!(matches!(
            stim.forward_cell().step(&mut g, &store, x, x, state),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn parses_variant_names() {
        assert_eq!("convlstm".parse::<TemporalKind>().unwrap(), TemporalKind::ConvLstm);
        assert_eq!("b_convlstm".parse::<TemporalKind>().unwrap(), TemporalKind::BConvLstm);
        assert!(matches!("gru".parse::<TemporalKind>(), Err(Error::Config(_))));
    }
}
