//! Small residual conv net with three heads: uncertainty `u`, policy `p`
//! and value `v`.
//!
//! The same architecture serves as the policy-value net that guides
//! search, as the state uncertainty net (board planes only) and as the
//! search uncertainty net (board planes plus seven tree-feature planes).
//! Parameters live in one flat vector in layer declaration order; each
//! layer stores its weights followed by its bias.

mod io;
mod kernels;
mod loss;
mod optim;

pub use io::{load_network, read_network, save_network, write_network, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{gradient_check, gradient_check_against, FeatureMask, LossWeights, Sample, TrainBatch, GRAD_FLOOR, PROB_FLOOR};
pub use optim::Sgd;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{MCTS_CHANNELS, STATE_CHANNELS};
use crate::tensor::Tensor;
use kernels::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub board_size: usize,
    pub state_channels: usize,
    /// 0 for board-only nets, 7 for the search uncertainty net.
    pub mcts_channels: usize,
    pub filters: usize,
    pub blocks: usize,
    pub head_hidden: usize,
}

impl Architecture {
    /// Board-only three-headed net (policy-value or state uncertainty).
    pub fn state_net(board_size: usize, filters: usize, blocks: usize) -> Self {
        Architecture {
            board_size,
            state_channels: STATE_CHANNELS,
            mcts_channels: 0,
            filters,
            blocks,
            head_hidden: 32,
        }
    }

    /// Board plus tree-feature input.
    pub fn mcts_net(board_size: usize, filters: usize, blocks: usize) -> Self {
        Architecture { mcts_channels: MCTS_CHANNELS, ..Self::state_net(board_size, filters, blocks) }
    }

    pub fn input_channels(&self) -> usize {
        self.state_channels + self.mcts_channels
    }

    pub fn area(&self) -> usize {
        self.board_size * self.board_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.board_size == 0 || self.board_size > crate::game::MAX_SIZE {
            return Err(Error::Config(format!("board size {}", self.board_size)));
        }
        if self.filters == 0 || self.state_channels == 0 || self.head_hidden == 0 {
            return Err(Error::Config("filters, state channels and head width must be positive".into()));
        }
        if self.mcts_channels != 0 && self.mcts_channels != MCTS_CHANNELS {
            return Err(Error::Config(format!("mcts channels must be 0 or {MCTS_CHANNELS}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LayerKind {
    Conv { k: usize },
    Dense,
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    kind: LayerKind,
    cin: usize,
    cout: usize,
    w_off: usize,
    b_off: usize,
}

impl Layer {
    fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv { k } => self.cout * self.cin * k * k,
            LayerKind::Dense => self.cout * self.cin,
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv { k } => self.cin * k * k,
            LayerKind::Dense => self.cin,
        }
    }
}

/// Indices into `Network::layers` for the fixed topology.
#[derive(Clone, Debug)]
struct Topology {
    stem: usize,
    blocks: Vec<(usize, usize)>,
    policy_conv: usize,
    policy_fc: usize,
    value_conv: usize,
    value_fc1: usize,
    value_fc2: usize,
    unc_conv: usize,
    unc_fc1: usize,
    unc_fc2: usize,
}

/// Head outputs for one position.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Predicted probability the search status is uncertain, in `[0, 1]`.
    pub u: f64,
    /// Softmax over all `size²` cells.
    pub policy: Vec<f64>,
    /// Value for the side to move, in `[-1, 1]`.
    pub v: f64,
}

#[derive(Clone, Debug)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
    topo: Topology,
    params: Vec<f64>,
}

/// Per-layer activations kept for backprop.
pub(crate) struct Activations {
    input: Vec<f64>,
    stem: Vec<f64>,
    blocks: Vec<(Vec<f64>, Vec<f64>)>,
    p_conv: Vec<f64>,
    pub(crate) policy: Vec<f64>,
    v_conv: Vec<f64>,
    v_hidden: Vec<f64>,
    pub(crate) v: f64,
    u_conv: Vec<f64>,
    u_hidden: Vec<f64>,
    pub(crate) u: f64,
}

impl Activations {
    /// Sign pattern of every ReLU; used to keep finite differences away from kinks.
    pub(crate) fn relu_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        let mut push = |xs: &[f64]| pattern.extend(xs.iter().map(|&x| x > 0.0));
        push(&self.stem);
        for (a, b) in &self.blocks {
            push(a);
            push(b);
        }
        push(&self.p_conv);
        push(&self.v_conv);
        push(&self.v_hidden);
        push(&self.u_conv);
        push(&self.u_hidden);
        pattern.extend(self.policy.iter().map(|&p| p >= PROB_FLOOR));
        pattern
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

impl Network {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let (layers, topo, count) = build_layers(&arch);
        Ok(Network { arch, layers, topo, params: vec![0.0; count] })
    }

    /// He-normal weights, zero biases. Residual second convs and head
    /// outputs start scaled down so fresh nets begin near-uniform.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut net = Network::zeros(arch)?;
        let shrink: Vec<usize> = net
            .topo
            .blocks
            .iter()
            .map(|&(_, b)| b)
            .chain([net.topo.policy_fc, net.topo.value_fc2, net.topo.unc_fc2])
            .collect();
        for (li, layer) in net.layers.clone().iter().enumerate() {
            let std = (2.0 / layer.fan_in() as f64).sqrt() * if shrink.contains(&li) { 0.1 } else { 1.0 };
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut net.params[layer.w_off..layer.w_off + layer.weight_len()] {
                *w = normal.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Network::zeros(arch)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "architecture needs {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Shape("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Parameter ranges `(start, len)` for every layer's weights and bias,
    /// in declaration order.
    pub fn layer_ranges(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .flat_map(|l| [(l.w_off, l.weight_len()), (l.b_off, l.cout)])
            .collect()
    }

    fn assemble_input(&self, state: &Tensor, mcts: Option<&Tensor>) -> Result<Vec<f64>> {
        let area = self.arch.area();
        let expect_state = [self.arch.state_channels, self.arch.board_size, self.arch.board_size];
        if state.shape() != expect_state {
            return Err(Error::Shape(format!("state features {:?}, expected {:?}", state.shape(), expect_state)));
        }
        let mut input = Vec::with_capacity(self.arch.input_channels() * area);
        input.extend_from_slice(state.data());
        match (mcts, self.arch.mcts_channels) {
            (None, 0) => {}
            (Some(t), c) if c > 0 => {
                let expect = [c, self.arch.board_size, self.arch.board_size];
                if t.shape() != expect {
                    return Err(Error::Shape(format!("mcts features {:?}, expected {:?}", t.shape(), expect)));
                }
                input.extend_from_slice(t.data());
            }
            (Some(_), _) => return Err(Error::Shape("net has no tree-feature input".into())),
            (None, _) => return Err(Error::Shape("net requires tree features".into())),
        }
        Ok(input)
    }

    pub fn forward(&self, state: &Tensor, mcts: Option<&Tensor>) -> Result<Prediction> {
        let input = self.assemble_input(state, mcts)?;
        let acts = self.forward_raw(input);
        Ok(Prediction { u: acts.u, policy: acts.policy, v: acts.v })
    }

    pub(crate) fn forward_masked(
        &self,
        state: &Tensor,
        mcts: Option<&Tensor>,
        mask: FeatureMask,
    ) -> Result<Activations> {
        let mut input = self.assemble_input(state, mcts)?;
        let split = self.arch.state_channels * self.arch.area();
        match mask {
            FeatureMask::Both => {}
            FeatureMask::StateOnly => input[split..].fill(0.0),
            FeatureMask::MctsOnly => input[..split].fill(0.0),
        }
        Ok(self.forward_raw(input))
    }

    fn conv(&self, li: usize, input: &[f64]) -> Vec<f64> {
        let l = &self.layers[li];
        let LayerKind::Conv { k } = l.kind else { unreachable!() };
        let mut out = vec![0.0; l.cout * self.arch.area()];
        conv_forward(
            input,
            l.cin,
            l.cout,
            self.arch.board_size,
            k,
            &self.params[l.w_off..l.w_off + l.weight_len()],
            &self.params[l.b_off..l.b_off + l.cout],
            &mut out,
        );
        out
    }

    fn dense(&self, li: usize, input: &[f64]) -> Vec<f64> {
        let l = &self.layers[li];
        let mut out = vec![0.0; l.cout];
        dense_forward(
            input,
            &self.params[l.w_off..l.w_off + l.weight_len()],
            &self.params[l.b_off..l.b_off + l.cout],
            &mut out,
        );
        out
    }

    pub(crate) fn forward_raw(&self, input: Vec<f64>) -> Activations {
        let t = &self.topo;
        let mut stem = self.conv(t.stem, &input);
        relu_in_place(&mut stem);
        let mut blocks = Vec::with_capacity(t.blocks.len());
        for &(a, b) in &t.blocks {
            let x = blocks.last().map(|(_, o): &(Vec<f64>, Vec<f64>)| o).unwrap_or(&stem);
            let mut mid = self.conv(a, x);
            relu_in_place(&mut mid);
            let mut out = self.conv(b, &mid);
            for (o, s) in out.iter_mut().zip(x) {
                *o += s;
            }
            relu_in_place(&mut out);
            blocks.push((mid, out));
        }
        let trunk = blocks.last().map(|(_, o)| o).unwrap_or(&stem);

        let mut p_conv = self.conv(t.policy_conv, trunk);
        relu_in_place(&mut p_conv);
        let logits = self.dense(t.policy_fc, &p_conv);
        let policy = softmax(&logits);

        let mut v_conv = self.conv(t.value_conv, trunk);
        relu_in_place(&mut v_conv);
        let mut v_hidden = self.dense(t.value_fc1, &v_conv);
        relu_in_place(&mut v_hidden);
        let v = self.dense(t.value_fc2, &v_hidden)[0].tanh();

        let mut u_conv = self.conv(t.unc_conv, trunk);
        relu_in_place(&mut u_conv);
        let mut u_hidden = self.dense(t.unc_fc1, &u_conv);
        relu_in_place(&mut u_hidden);
        let u = sigmoid(self.dense(t.unc_fc2, &u_hidden)[0]);

        Activations { input, stem, blocks, p_conv, policy, v_conv, v_hidden, v, u_conv, u_hidden, u }
    }

    fn conv_back(&self, li: usize, input: &[f64], dout: &[f64], grad: &mut [f64], din: Option<&mut [f64]>) {
        let l = self.layers[li];
        let LayerKind::Conv { k } = l.kind else { unreachable!() };
        let (gw, gb) = split_grad(grad, &l);
        conv_backward(
            input,
            l.cin,
            l.cout,
            self.arch.board_size,
            k,
            &self.params[l.w_off..l.w_off + l.weight_len()],
            dout,
            gw,
            gb,
            din,
        );
    }

    fn dense_back(&self, li: usize, input: &[f64], dout: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let l = self.layers[li];
        let (gw, gb) = split_grad(grad, &l);
        dense_backward(input, &self.params[l.w_off..l.w_off + l.weight_len()], dout, gw, gb, dx);
    }

    /// Accumulates into `grad` the parameter gradient given head-output
    /// gradients: `d_logits` w.r.t. policy logits, `d_vpre`/`d_upre`
    /// w.r.t. the pre-squash value and uncertainty scalars.
    pub(crate) fn backward(&self, acts: &Activations, d_logits: &[f64], d_vpre: f64, d_upre: f64, grad: &mut [f64]) {
        let t = &self.topo;
        let trunk = acts.blocks.last().map(|(_, o)| o).unwrap_or(&acts.stem);
        let mut d_trunk = vec![0.0; trunk.len()];

        let mut d_pconv = vec![0.0; acts.p_conv.len()];
        self.dense_back(t.policy_fc, &acts.p_conv, d_logits, grad, Some(&mut d_pconv));
        relu_backward(&acts.p_conv, &mut d_pconv);
        self.conv_back(t.policy_conv, trunk, &d_pconv, grad, Some(&mut d_trunk));

        for (conv, fc1, fc2, conv_out, hidden, d_pre) in [
            (t.value_conv, t.value_fc1, t.value_fc2, &acts.v_conv, &acts.v_hidden, d_vpre),
            (t.unc_conv, t.unc_fc1, t.unc_fc2, &acts.u_conv, &acts.u_hidden, d_upre),
        ] {
            let mut d_hidden = vec![0.0; hidden.len()];
            self.dense_back(fc2, hidden, &[d_pre], grad, Some(&mut d_hidden));
            relu_backward(hidden, &mut d_hidden);
            let mut d_conv = vec![0.0; conv_out.len()];
            self.dense_back(fc1, conv_out, &d_hidden, grad, Some(&mut d_conv));
            relu_backward(conv_out, &mut d_conv);
            self.conv_back(conv, trunk, &d_conv, grad, Some(&mut d_trunk));
        }

        let mut d_out = d_trunk;
        for (bi, &(a, b)) in t.blocks.iter().enumerate().rev() {
            let (mid, out) = &acts.blocks[bi];
            let x = if bi == 0 { &acts.stem } else { &acts.blocks[bi - 1].1 };
            relu_backward(out, &mut d_out);
            let mut d_mid = vec![0.0; mid.len()];
            self.conv_back(b, mid, &d_out, grad, Some(&mut d_mid));
            relu_backward(mid, &mut d_mid);
            let mut d_x = d_out;
            self.conv_back(a, x, &d_mid, grad, Some(&mut d_x));
            d_out = d_x;
        }
        relu_backward(&acts.stem, &mut d_out);
        self.conv_back(t.stem, &acts.input, &d_out, grad, None);
    }
}

fn split_grad<'a>(grad: &'a mut [f64], l: &Layer) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(l.b_off, l.w_off + l.weight_len());
    let (w, rest) = grad[l.w_off..].split_at_mut(l.weight_len());
    (w, &mut rest[..l.cout])
}

fn build_layers(arch: &Architecture) -> (Vec<Layer>, Topology, usize) {
    let mut layers = Vec::new();
    let mut offset = 0;
    let mut push = |kind: LayerKind, cin: usize, cout: usize| {
        let mut l = Layer { kind, cin, cout, w_off: offset, b_off: 0 };
        l.b_off = offset + l.weight_len();
        offset = l.b_off + cout;
        layers.push(l);
        layers.len() - 1
    };
    let f = arch.filters;
    let area = arch.area();
    let stem = push(LayerKind::Conv { k: 3 }, arch.input_channels(), f);
    let blocks = (0..arch.blocks)
        .map(|_| (push(LayerKind::Conv { k: 3 }, f, f), push(LayerKind::Conv { k: 3 }, f, f)))
        .collect();
    let policy_conv = push(LayerKind::Conv { k: 1 }, f, 2);
    let policy_fc = push(LayerKind::Dense, 2 * area, area);
    let value_conv = push(LayerKind::Conv { k: 1 }, f, 1);
    let value_fc1 = push(LayerKind::Dense, area, arch.head_hidden);
    let value_fc2 = push(LayerKind::Dense, arch.head_hidden, 1);
    let unc_conv = push(LayerKind::Conv { k: 1 }, f, 1);
    let unc_fc1 = push(LayerKind::Dense, area, arch.head_hidden);
    let unc_fc2 = push(LayerKind::Dense, arch.head_hidden, 1);
    let topo = Topology {
        stem,
        blocks,
        policy_conv,
        policy_fc,
        value_conv,
        value_fc1,
        value_fc2,
        unc_conv,
        unc_fc1,
        unc_fc2,
    };
    (layers, topo, offset)
}
