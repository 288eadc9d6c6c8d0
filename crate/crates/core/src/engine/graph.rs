//! The autodiff tape.
//!
//! A [`Graph`] records every operation in creation order, so the node list
//! is already a topological order and [`Graph::backward`] is a single
//! reverse sweep. Operands saved for the backward pass are the input nodes'
//! own values, which the tape keeps alive until it is cleared.

use std::collections::HashMap;

use super::conv::{conv_backward, conv_forward, ConvGeom};
use super::{Element, ParamStore, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Elementwise operation selector for [`Graph::pointwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pointwise {
    Sigmoid,
    Tanh,
    Relu,
    Add,
    Sub,
    Hadamard,
    Scale(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv { geom: ConvGeom, rank: usize },
    Sigmoid,
    Tanh,
    Relu,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Concat { axis: usize },
    Reshape,
    Upsample2x,
    Mean,
    Mse,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv { rank: 4, .. } => "conv2d",
            Op::Conv { .. } => "conv3d",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "hadamard",
            Op::Scale(_) => "scale",
            Op::Concat { .. } => "concat",
            Op::Reshape => "reshape",
            Op::Upsample2x => "upsample_nearest2x",
            Op::Mean => "mean",
            Op::Mse => "mse",
        }
    }
}

/// One recorded operation.
struct TapeNode<E> {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor<E>,
    requires_grad: bool,
    param: Option<usize>,
}

/// Gradients of the loss with respect to non-parameter leaves that were
/// created with [`Graph::variable`].
pub struct Gradients<E> {
    grads: HashMap<usize, Tensor<E>>,
}

impl<E: Element> Gradients<E> {
    pub fn get(&self, var: Var) -> Option<&Tensor<E>> {
        self.grads.get(&var.0)
    }
}

/// Reverse-mode tape.
pub struct Graph<E: Element = f32> {
    nodes: Vec<TapeNode<E>>,
    bound_params: HashMap<usize, Var>,
    conv_flops: u64,
    track_kinks: bool,
    kink_signature: u64,
}

impl<E: Element> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl<E: Element> Graph<E> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound_params: HashMap::new(),
            conv_flops: 0,
            track_kinks: false,
            kink_signature: FNV_OFFSET,
        }
    }

    /// Records a hash of every ReLU activation pattern, so callers can tell
    /// whether two evaluations took the same piecewise-linear branch.
    pub fn with_kink_tracking() -> Self {
        Self {
            track_kinks: true,
            ..Self::new()
        }
    }

    pub fn kink_signature(&self) -> u64 {
        self.kink_signature
    }

    /// FLOPs executed by convolutions on this tape so far.
    pub fn conv_flops(&self) -> u64 {
        self.conv_flops
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<E> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.push_node(Op::Leaf, Vec::new(), value, false, None)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor<E>) -> Var {
        self.push_node(Op::Leaf, Vec::new(), value, true, None)
    }

    /// Binds a stored parameter. Repeated binds return the same node, so a
    /// weight shared across frames accumulates a single gradient.
    pub fn param(&mut self, store: &ParamStore<E>, name: &str) -> Result<Var> {
        let index = store
            .index_of(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))?;
        if let Some(&var) = self.bound_params.get(&index) {
            return Ok(var);
        }
        let value = store.value_at(index).clone();
        if !value.all_finite() {
            return Err(Error::Numerical(format!("parameter `{name}` holds a non-finite value")));
        }
        let var = self.push_node(Op::Leaf, Vec::new(), value, true, Some(index));
        self.bound_params.insert(index, var);
        Ok(var)
    }

    fn push_node(
        &mut self,
        op: Op,
        inputs: Vec<Var>,
        value: Tensor<E>,
        requires_grad: bool,
        param: Option<usize>,
    ) -> Var {
        self.nodes.push(TapeNode {
            op,
            inputs,
            value,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op, inputs: Vec<Var>, value: Tensor<E>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numerical(format!("{} produced a non-finite value", op.name())));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_node(op, inputs, value, requires_grad, None))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err!("{what}: operand shapes differ: {:?} vs {:?}", sa, sb));
        }
        Ok(())
    }

    /// 2D cross-correlation: `[N,C,H,W] ⋆ [O,C,kh,kw] + b → [N,O,H',W']`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ks) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if xs.len() != 4 || ks.len() != 4 {
            return Err(shape_err!(
                "conv2d expects [N,C,H,W] input and [O,C,kh,kw] kernel, got {:?} and {:?}",
                xs,
                ks
            ));
        }
        let geom = ConvGeom::new(
            &[xs[0], xs[1], 1, xs[2], xs[3]],
            &[ks[0], ks[1], 1, ks[2], ks[3]],
            [1, stride, stride],
            [0, padding, padding],
        )?;
        self.conv(geom, 4, input, kernel, bias)
    }

    /// 3D cross-correlation: `[N,C,T,H,W] ⋆ [O,C,kt,kh,kw] + b`.
    pub fn conv3d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(input), self.shape(kernel), stride, padding)?;
        self.conv(geom, 5, input, kernel, bias)
    }

    fn conv(&mut self, geom: ConvGeom, rank: usize, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let x5 = self.value(input).reshape(to5(self.shape(input)))?;
        let w5 = self.value(kernel).reshape(to5(self.shape(kernel)))?;
        let b = bias.map(|b| self.value(b));
        let out = conv_forward(&geom, &x5, &w5, b)?;
        let [to, ho, wo] = geom.output;
        let out = if rank == 4 {
            out.reshape([geom.batch, geom.out_channels, ho, wo])?
        } else {
            debug_assert_eq!(out.shape(), [geom.batch, geom.out_channels, to, ho, wo]);
            out
        };
        self.conv_flops += geom.flops();
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.record(Op::Conv { geom, rank }, inputs, out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let one = E::one();
        let out = self.value(x).map(|v| one / (one + (-v).exp()));
        self.record(Op::Sigmoid, vec![x], out)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.tanh());
        self.record(Op::Tanh, vec![x], out)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| if v > E::zero() { v } else { E::zero() });
        if self.track_kinks {
            let mut h = self.kink_signature;
            for &v in self.value(x).data() {
                h ^= (v > E::zero()) as u64;
                h = h.wrapping_mul(FNV_PRIME);
            }
            self.kink_signature = h;
        }
        self.record(Op::Relu, vec![x], out)
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(E, E) -> E) -> Tensor<E> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(va.shape(), data).expect("operands checked shape-equal")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip(a, b, |x, y| x + y);
        self.record(Op::Add, vec![a, b], out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip(a, b, |x, y| x - y);
        self.record(Op::Sub, vec![a, b], out)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "hadamard")?;
        let out = self.zip(a, b, |x, y| x * y);
        self.record(Op::Mul, vec![a, b], out)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let f = E::from_f64(factor);
        let out = self.value(x).map(|v| v * f);
        self.record(Op::Scale(factor), vec![x], out)
    }

    /// Dispatches one of the elementwise operations by kind.
    pub fn pointwise(&mut self, op: Pointwise, args: &[Var]) -> Result<Var> {
        let arity = match op {
            Pointwise::Add | Pointwise::Sub | Pointwise::Hadamard => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(Error::Contract(format!(
                "{op:?} takes {arity} operand(s), got {}",
                args.len()
            )));
        }
        match op {
            Pointwise::Sigmoid => self.sigmoid(args[0]),
            Pointwise::Tanh => self.tanh(args[0]),
            Pointwise::Relu => self.relu(args[0]),
            Pointwise::Scale(f) => self.scale(args[0], f),
            Pointwise::Add => self.add(args[0], args[1]),
            Pointwise::Sub => self.sub(args[0], args[1]),
            Pointwise::Hadamard => self.mul(args[0], args[1]),
        }
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(shape_err!("concat axis {} out of range for shape {:?}", axis, base));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err!(
                    "concat on axis {}: shape {:?} incompatible with {:?}",
                    axis,
                    s,
                    base
                ));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::from_vec(shape, data)?;
        self.record(Op::Concat { axis }, parts.to_vec(), out)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.record(Op::Reshape, vec![x], out)
    }

    /// Nearest-neighbour 2× upsampling of `[N,C,H,W]`.
    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(shape_err!("upsample_nearest2x expects [N,C,H,W], got {:?}", s));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(planes * 4 * h * w);
        for p in 0..planes {
            for y in 0..2 * h {
                let row = &src[(p * h + y / 2) * w..][..w];
                for &v in row {
                    data.push(v);
                    data.push(v);
                }
            }
        }
        let out = Tensor::from_vec([s[0], s[1], 2 * h, 2 * w], data)?;
        self.record(Op::Upsample2x, vec![x], out)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).mean());
        self.record(Op::Mean, vec![x], out)
    }

    /// `mean((a − b)²)` over every element.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mse")?;
        let (va, vb) = (self.value(a), self.value(b));
        let sum: E = va.data().iter().zip(vb.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let out = Tensor::scalar(sum / E::from_f64(va.numel() as f64));
        self.record(Op::Mse, vec![a, b], out)
    }

    /// Propagates `∂loss/∂·` back through the tape, accumulating parameter
    /// gradients into `store`, then clears the tape.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<E>) -> Result<Gradients<E>> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<E>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), E::one()));
        let mut leaves = HashMap::new();

        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match node.param {
                    Some(index) => store.accumulate_grad(index, &grad)?,
                    None => {
                        leaves.insert(id, grad);
                    }
                }
                continue;
            }
            let input_grads = self.input_grads(node, &grad)?;
            for (var, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                match &mut grads[var.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            }
        }
        self.clear();
        Ok(Gradients { grads: leaves })
    }

    /// Drops every recorded node.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.bound_params.clear();
        self.kink_signature = FNV_OFFSET;
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn input_grads(&self, node: &TapeNode<E>, grad: &Tensor<E>) -> Result<Vec<Option<Tensor<E>>>> {
        let ins = &node.inputs;
        let out = &node.value;
        let elementwise = |f: &dyn Fn(usize) -> E| Tensor::from_fn(grad.shape(), f);
        let g = grad.data();
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Sigmoid => {
                let y = out.data();
                vec![Some(elementwise(&|i| g[i] * y[i] * (E::one() - y[i])))]
            }
            Op::Tanh => {
                let y = out.data();
                vec![Some(elementwise(&|i| g[i] * (E::one() - y[i] * y[i])))]
            }
            Op::Relu => {
                let y = out.data();
                vec![Some(elementwise(&|i| if y[i] > E::zero() { g[i] } else { E::zero() }))]
            }
            Op::Add => vec![
                self.wants(ins[0]).then(|| grad.clone()),
                self.wants(ins[1]).then(|| grad.clone()),
            ],
            Op::Sub => vec![
                self.wants(ins[0]).then(|| grad.clone()),
                self.wants(ins[1]).then(|| grad.map(|v| -v)),
            ],
            Op::Mul => {
                let (a, b) = (self.value(ins[0]).data(), self.value(ins[1]).data());
                vec![
                    self.wants(ins[0]).then(|| elementwise(&|i| g[i] * b[i])),
                    self.wants(ins[1]).then(|| elementwise(&|i| g[i] * a[i])),
                ]
            }
            Op::Scale(f) => {
                let f = E::from_f64(*f);
                vec![Some(grad.map(|v| v * f))]
            }
            Op::Concat { axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                let mut result = Vec::with_capacity(ins.len());
                for &p in ins {
                    let ps = self.shape(p);
                    let chunk = ps[*axis] * inner;
                    if self.wants(p) {
                        let mut data = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            data.extend_from_slice(&g[o * total + offset..][..chunk]);
                        }
                        result.push(Some(Tensor::from_vec(ps, data)?));
                    } else {
                        result.push(None);
                    }
                    offset += chunk;
                }
                result
            }
            Op::Reshape => vec![Some(grad.reshape(self.shape(ins[0]))?)],
            Op::Upsample2x => {
                let s = self.shape(ins[0]);
                let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
                let mut data = vec![E::zero(); planes * h * w];
                for p in 0..planes {
                    for y in 0..2 * h {
                        let src = &g[(p * 2 * h + y) * 2 * w..][..2 * w];
                        let dst = &mut data[(p * h + y / 2) * w..][..w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            *d = *d + src[2 * x] + src[2 * x + 1];
                        }
                    }
                }
                vec![Some(Tensor::from_vec(s, data)?)]
            }
            Op::Mean => {
                let n = E::from_f64(self.value(ins[0]).numel() as f64);
                vec![Some(Tensor::full(self.shape(ins[0]), g[0] / n))]
            }
            Op::Mse => {
                let (a, b) = (self.value(ins[0]).data(), self.value(ins[1]).data());
                let k = g[0] * E::from_f64(2.0 / a.len() as f64);
                let diff = Tensor::from_fn(self.shape(ins[0]), |i| k * (a[i] - b[i]));
                let grad_b = self.wants(ins[1]).then(|| diff.map(|v| -v));
                vec![self.wants(ins[0]).then_some(diff), grad_b]
            }
            Op::Conv { geom, .. } => {
                let x5 = self.value(ins[0]).reshape(to5(self.shape(ins[0])))?;
                let w5 = self.value(ins[1]).reshape(to5(self.shape(ins[1])))?;
                let [to, ho, wo] = geom.output;
                let g5 = grad.reshape([geom.batch, geom.out_channels, to, ho, wo])?;
                let want_bias = ins.get(2).is_some_and(|&b| self.wants(b));
                let cg = conv_backward(geom, &x5, &w5, &g5, [self.wants(ins[0]), self.wants(ins[1]), want_bias])?;
                let mut result = vec![
                    cg.input.map(|t| t.reshape(self.shape(ins[0]))).transpose()?,
                    cg.kernel.map(|t| t.reshape(self.shape(ins[1]))).transpose()?,
                ];
                if ins.len() == 3 {
                    result.push(cg.bias);
                }
                result
            }
        })
    }
}

/// Lifts a rank-4 `[N,C,H,W]` shape to `[N,C,1,H,W]`; rank-5 passes through.
fn to5(shape: &[usize]) -> Vec<usize> {
    if shape.len() == 4 {
        vec![shape[0], shape[1], 1, shape[2], shape[3]]
    } else {
        shape.to_vec()
    }
}
