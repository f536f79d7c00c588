//! The three learned functions used by the search: a per-resource prior
//! over moves (one parameter set shared by every resource), a value
//! estimate of the defender's win probability, and a dynamics model of the
//! attacker's next move.
//!
//! Prior and dynamics follow the same scoring shape: a state encoder `f`
//! and an action encoder `g`, with move logits `f(s) · g(a)` over the legal
//! moves and a softmax on top. All three networks read one shared node
//! embedding table.
//!
//! State features are fixed-size whatever `t` or `m`:
//! `[E(attacker) | mean E(attacker history) | E(ego resource) | mean E(resources) | t/T]`,
//! where the ego slot is present only in the prior network's input.

mod adam;
mod checkpoint;
mod loss;

pub use adam::{optimizer_step, AdamConfig, Moments};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, FORMAT_VERSION};
pub use loss::{backward, loss, loss_and_grad, LossBreakdown, LossInputs, LossSample, LossTerms, PolicyTarget, ValueLoss, PROB_FLOOR};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::GlobalState;
use crate::graph::{GameConfig, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("empty legal action set")]
    EmptyActions,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Network sizes; `node_count` and `horizon` come from the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub node_count: usize,
    pub horizon: usize,
    pub embed_dim: usize,
    pub state_dim: usize,
    pub hidden: usize,
}

impl NetDims {
    pub fn for_game(config: &GameConfig) -> Self {
        NetDims {
            node_count: config.graph().node_count(),
            horizon: config.horizon(),
            embed_dim: 32,
            state_dim: 64,
            hidden: 64,
        }
    }

    fn shared_input(&self) -> usize {
        3 * self.embed_dim + 1
    }

    fn prior_input(&self) -> usize {
        4 * self.embed_dim + 1
    }
}

/// Dense affine layer, weights row-major `[outputs × inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform weights in `±1/sqrt(fan_in)`, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Linear {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            *out = self.bias[o] + dot(row, x);
        }
    }

    /// Accumulates parameter gradients into `grad` and, if given, the input
    /// gradient into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

/// Two affine layers with a rectifier between them.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoder {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EncoderPass {
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub out: Vec<f64>,
}

impl StateEncoder {
    fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        StateEncoder {
            hidden: Linear::init(inputs, hidden, rng),
            output: Linear::init(hidden, outputs, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        StateEncoder {
            hidden: Linear::zeros(self.hidden.inputs, self.hidden.outputs),
            output: Linear::zeros(self.output.inputs, self.output.outputs),
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> EncoderPass {
        let mut pre = vec![0.0; self.hidden.outputs];
        self.hidden.forward(x, &mut pre);
        let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let mut out = vec![0.0; self.output.outputs];
        self.output.forward(&act, &mut out);
        EncoderPass { pre, act, out }
    }

    pub(crate) fn backward(
        &self,
        x: &[f64],
        pass: &EncoderPass,
        d_out: &[f64],
        grad: &mut StateEncoder,
        dx: &mut [f64],
    ) {
        let mut d_act = vec![0.0; self.hidden.outputs];
        self.output.backward(&pass.act, d_out, &mut grad.output, Some(&mut d_act));
        for (d, &p) in d_act.iter_mut().zip(&pass.pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        self.hidden.backward(x, &d_act, &mut grad.hidden, Some(dx));
    }
}

/// All learnable parameters. The same type doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub dims: NetDims,
    /// `[node_count × embed_dim]`, row per node.
    pub embedding: Vec<f64>,
    pub prior_state: StateEncoder,
    pub prior_action: Linear,
    pub dynamics_state: StateEncoder,
    pub dynamics_action: Linear,
    pub value_state: StateEncoder,
    pub value_head: Linear,
}

/// Borrowed view of one named parameter tensor.
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl NetParams {
    pub fn new(dims: NetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NetParams::init(dims, &mut rng)
    }

    pub fn init<R: Rng + ?Sized>(dims: NetDims, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        let embedding = (0..dims.node_count * dims.embed_dim)
            .map(|_| normal.sample(rng))
            .collect();
        let (d, ds, h) = (dims.embed_dim, dims.state_dim, dims.hidden);
        NetParams {
            dims,
            embedding,
            prior_state: StateEncoder::init(dims.prior_input(), h, ds, rng),
            prior_action: Linear::init(d, ds, rng),
            dynamics_state: StateEncoder::init(dims.shared_input(), h, ds, rng),
            dynamics_action: Linear::init(d, ds, rng),
            value_state: StateEncoder::init(dims.shared_input(), h, ds, rng),
            value_head: Linear::init(ds, 1, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetParams {
            dims: self.dims,
            embedding: vec![0.0; self.embedding.len()],
            prior_state: self.prior_state.zeros_like(),
            prior_action: Linear::zeros(self.prior_action.inputs, self.prior_action.outputs),
            dynamics_state: self.dynamics_state.zeros_like(),
            dynamics_action: Linear::zeros(self.dynamics_action.inputs, self.dynamics_action.outputs),
            value_state: self.value_state.zeros_like(),
            value_head: Linear::zeros(self.value_head.inputs, 1),
        }
    }

    /// Zeroes the final value layer so every state evaluates to exactly 0.5.
    pub fn zero_value_head(&mut self) {
        self.value_head.weight.fill(0.0);
        self.value_head.bias.fill(0.0);
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let d = self.dims;
        let mut out = vec![TensorRef {
            name: "embedding",
            shape: vec![d.node_count, d.embed_dim],
            data: &self.embedding,
        }];
        for (prefix, lin) in self.linears() {
            out.push(TensorRef {
                name: prefix[0],
                shape: vec![lin.outputs, lin.inputs],
                data: &lin.weight,
            });
            out.push(TensorRef {
                name: prefix[1],
                shape: vec![lin.outputs],
                data: &lin.bias,
            });
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![("embedding", &mut self.embedding)];
        let lins: [&mut Linear; 9] = [
            &mut self.prior_state.hidden,
            &mut self.prior_state.output,
            &mut self.prior_action,
            &mut self.dynamics_state.hidden,
            &mut self.dynamics_state.output,
            &mut self.dynamics_action,
            &mut self.value_state.hidden,
            &mut self.value_state.output,
            &mut self.value_head,
        ];
        for (name, lin) in LINEAR_NAMES.iter().zip(lins) {
            out.push((name[0], &mut lin.weight));
            out.push((name[1], &mut lin.bias));
        }
        out
    }

    fn linears(&self) -> impl Iterator<Item = (&'static [&'static str; 2], &Linear)> {
        let lins: [&Linear; 9] = [
            &self.prior_state.hidden,
            &self.prior_state.output,
            &self.prior_action,
            &self.dynamics_state.hidden,
            &self.dynamics_state.output,
            &self.dynamics_action,
            &self.value_state.hidden,
            &self.value_state.output,
            &self.value_head,
        ];
        LINEAR_NAMES.iter().zip(lins)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn node_embedding(&self, node: NodeId) -> &[f64] {
        let d = self.dims.embed_dim;
        &self.embedding[node * d..(node + 1) * d]
    }

    pub(crate) fn check_state(&self, state: &GlobalState) -> Result<(), NetError> {
        let n = self.dims.node_count;
        if state.attacker_seq.is_empty() || state.resource_locs.is_empty() {
            return Err(NetError::Shape("state has no attacker or no resources".into()));
        }
        if let Some(v) = state
            .attacker_seq
            .iter()
            .chain(&state.resource_locs)
            .find(|&&v| v >= n)
        {
            return Err(NetError::Shape(format!("node {v} outside embedding table of {n}")));
        }
        Ok(())
    }

    pub(crate) fn check_actions(&self, legal: &[NodeId]) -> Result<(), NetError> {
        if legal.is_empty() {
            return Err(NetError::EmptyActions);
        }
        if let Some(v) = legal.iter().find(|&&v| v >= self.dims.node_count) {
            return Err(NetError::Shape(format!("action node {v} out of range")));
        }
        Ok(())
    }

    /// Builds the state feature vector; `ego` adds the prior network's slot.
    pub(crate) fn features(&self, state: &GlobalState, ego: Option<NodeId>) -> Vec<f64> {
        let d = self.dims.embed_dim;
        let width = if ego.is_some() { 4 * d + 1 } else { 3 * d + 1 };
        let mut x = vec![0.0; width];
        x[..d].copy_from_slice(self.node_embedding(state.attacker_node()));
        mean_into(self, &state.attacker_seq, &mut x[d..2 * d]);
        let mut at = 2 * d;
        if let Some(node) = ego {
            x[at..at + d].copy_from_slice(self.node_embedding(node));
            at += d;
        }
        mean_into(self, &state.resource_locs, &mut x[at..at + d]);
        x[width - 1] = (state.t as f64 / self.dims.horizon.max(1) as f64).min(1.0);
        x
    }

    /// Scatters a feature gradient back onto the embedding rows it was built from.
    pub(crate) fn scatter_features(&self, state: &GlobalState, ego: Option<NodeId>, dx: &[f64], grad: &mut NetParams) {
        let d = self.dims.embed_dim;
        add_row(grad, state.attacker_node(), &dx[..d], 1.0);
        let hist = 1.0 / state.attacker_seq.len() as f64;
        for &v in &state.attacker_seq {
            add_row(grad, v, &dx[d..2 * d], hist);
        }
        let mut at = 2 * d;
        if let Some(node) = ego {
            add_row(grad, node, &dx[at..at + d], 1.0);
            at += d;
        }
        let res = 1.0 / state.resource_locs.len() as f64;
        for &v in &state.resource_locs {
            add_row(grad, v, &dx[at..at + d], res);
        }
    }

    pub(crate) fn policy_pass(&self, net: PolicyNet, x: &[f64], legal: &[NodeId]) -> PolicyPass {
        let (encoder, action) = self.policy_layers(net);
        let enc = encoder.forward(x);
        let mut action_codes = Vec::with_capacity(legal.len());
        let mut logits = Vec::with_capacity(legal.len());
        for &a in legal {
            let mut code = vec![0.0; action.outputs];
            action.forward(self.node_embedding(a), &mut code);
            logits.push(dot(&enc.out, &code));
            action_codes.push(code);
        }
        let (probs, log_norm) = softmax(&logits);
        PolicyPass {
            enc,
            action_codes,
            logits,
            probs,
            log_norm,
        }
    }

    pub(crate) fn policy_layers(&self, net: PolicyNet) -> (&StateEncoder, &Linear) {
        match net {
            PolicyNet::Prior => (&self.prior_state, &self.prior_action),
            PolicyNet::Dynamics => (&self.dynamics_state, &self.dynamics_action),
        }
    }

    pub(crate) fn value_pass(&self, x: &[f64]) -> (EncoderPass, Vec<f64>, f64) {
        let enc = self.value_state.forward(x);
        let act: Vec<f64> = enc.out.iter().map(|&v| v.max(0.0)).collect();
        let mut logit = [0.0];
        self.value_head.forward(&act, &mut logit);
        (enc, act, logit[0])
    }

    /// Distribution over the attacker's legal moves.
    pub fn dynamics_forward(&self, state: &GlobalState, legal_opponent: &[NodeId]) -> Result<Vec<f64>, NetError> {
        self.check_state(state)?;
        self.check_actions(legal_opponent)?;
        let x = self.features(state, None);
        Ok(self.policy_pass(PolicyNet::Dynamics, &x, legal_opponent).probs)
    }

    /// Distribution over resource `resource`'s legal moves.
    pub fn prior_forward(&self, state: &GlobalState, resource: usize, legal: &[NodeId]) -> Result<Vec<f64>, NetError> {
        self.check_state(state)?;
        self.check_actions(legal)?;
        let ego = *state
            .resource_locs
            .get(resource)
            .ok_or_else(|| NetError::Shape(format!("no resource {resource}")))?;
        let x = self.features(state, Some(ego));
        Ok(self.policy_pass(PolicyNet::Prior, &x, legal).probs)
    }

    /// Predicted defender win probability, strictly inside (0, 1).
    pub fn value_forward(&self, state: &GlobalState) -> Result<f64, NetError> {
        self.check_state(state)?;
        let x = self.features(state, None);
        Ok(sigmoid(self.value_pass(&x).2))
    }
}

const LINEAR_NAMES: [[&str; 2]; 9] = [
    ["prior_state.hidden.weight", "prior_state.hidden.bias"],
    ["prior_state.output.weight", "prior_state.output.bias"],
    ["prior_action.weight", "prior_action.bias"],
    ["dynamics_state.hidden.weight", "dynamics_state.hidden.bias"],
    ["dynamics_state.output.weight", "dynamics_state.output.bias"],
    ["dynamics_action.weight", "dynamics_action.bias"],
    ["value_state.hidden.weight", "value_state.hidden.bias"],
    ["value_state.output.weight", "value_state.output.bias"],
    ["value_head.weight", "value_head.bias"],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PolicyNet {
    Prior,
    Dynamics,
}

pub(crate) struct PolicyPass {
    pub enc: EncoderPass,
    pub action_codes: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_norm: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Probabilities and the log normalizer.
pub(crate) fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / sum).collect(), max + sum.ln())
}

fn mean_into(params: &NetParams, nodes: &[NodeId], out: &mut [f64]) {
    let scale = 1.0 / nodes.len() as f64;
    for &v in nodes {
        for (o, &e) in out.iter_mut().zip(params.node_embedding(v)) {
            *o += e;
        }
    }
    out.iter_mut().for_each(|o| *o *= scale);
}

fn add_row(grad: &mut NetParams, node: NodeId, dx: &[f64], scale: f64) {
    let d = grad.dims.embed_dim;
    for (g, &v) in grad.embedding[node * d..(node + 1) * d].iter_mut().zip(dx) {
        *g += scale * v;
    }
}
